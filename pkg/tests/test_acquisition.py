import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from selftest_qrng.acquisition import (Block, CondProbs, Tally, accumulate, block_length,
                                       discriminate, estimate_cond_probs, gen_input,
                                       pack_raw_pulses, run_block, unpack_raw_pulses)
from selftest_qrng.errors import InputNeverSentError, InvariantViolation
from selftest_qrng.photonics import (DriftParams, DriftState, HomodyneConfig, QuadratureSample,
                                     SourceConfig, analytic_click_prob)

bits = st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), max_size=200)


def test_gen_input_extremes_and_frequency():
    rng = np.random.default_rng(1)
    assert all(gen_input(rng, 0.0) == 0 for _ in range(100))
    assert all(gen_input(rng, 1.0) == 1 for _ in range(100))
    n = 1_000_000
    x = np.random.default_rng(2).random(n) < 0.16   # same rule, vectorised
    assert abs(x.mean() - 0.16) < 4 * math.sqrt(0.16 * 0.84 / n)
    with pytest.raises(ValueError):
        gen_input(rng, 1.2)


def test_discriminate_is_strict():
    assert discriminate(QuadratureSample(0.3), 0.3) == 0
    assert discriminate(QuadratureSample(1.3), 0.3) == 1
    assert discriminate(-0.2, 0.0) == 0


def test_accumulate_and_tally():
    t = accumulate(Tally(), 1, 1)
    assert t.counts[1][1] == 1 and t.n_total == 1
    with pytest.raises(InvariantViolation):
        Tally(((-1, 0), (0, 0)))


@given(bits, bits)
def test_tally_conserved_under_stream_splitting(s1, s2):
    def tally(seq):
        if not seq:
            return Tally()
        x, b = zip(*seq)
        return Tally.from_sequences(x, b)

    t = Tally()
    for x, b in s1 + s2:
        t = accumulate(t, x, b)
    assert t == tally(s1 + s2) == tally(s1) + tally(s2)


def test_estimate_cond_probs():
    p = estimate_cond_probs(Tally(((5, 20), (5, 80))))
    assert p.p1_given_1 == pytest.approx(0.8) and p.p1_given_0 == 0.5
    with pytest.raises(InputNeverSentError):
        estimate_cond_probs(Tally(((0, 3), (0, 4))))


def test_cond_probs_invariants():
    with pytest.raises(InvariantViolation):
        CondProbs(1.2, 0.5)
    with pytest.raises(InvariantViolation):
        CondProbs(0.2, 0.5, 0, 0)


def test_block_length_rounds():
    assert block_length(1.0, 12.5e6) == 12_500_000
    assert block_length(1e-7 * 1.5, 1e7) == 2


def test_block_validity_only_clears():
    b = Block(np.zeros(3), np.zeros(3), Tally(), 1.0, 0.0, 0.0)
    assert b.valid
    b.invalidate()
    assert not b.valid
    b.invalidate()
    assert not b.valid
    assert not hasattr(type(b), "validate")


def _hd():
    return HomodyneConfig(electronic_noise_variance=0.025, threshold=0.1)


def test_run_block_without_x1():
    src = SourceConfig(p_x1=0.0, f_rep=1e6, delta_t=1e-7)
    b = run_block(src, _hd(), DriftState(), 1e-3, np.random.default_rng(0))
    assert b.n == 1000 and b.tally.n_input(1) == 0
    assert b.recompute_tally() == b.tally
    with pytest.raises(InputNeverSentError):
        estimate_cond_probs(b.tally)


def test_run_block_matches_analytic_oracle():
    src = SourceConfig(mu=0.05, f_rep=1e6, delta_t=1e-7)
    hd = _hd()
    b = run_block(src, hd, DriftState(), 1.0, np.random.default_rng(4))
    p = estimate_cond_probs(b.tally)
    for x, est, n in ((0, p.p1_given_0, p.n0), (1, p.p1_given_1, p.n1)):
        exact = analytic_click_prob(math.sqrt(src.mu) * x, hd)
        assert abs(est - exact) < 4 * math.sqrt(exact * (1 - exact) / n)
    assert b.energy_estimate == src.mu


def test_run_block_average_convention_energy():
    src = SourceConfig(mu=0.05, f_rep=1e6, delta_t=1e-7)
    b = run_block(src, _hd(), DriftState(), 0.01, np.random.default_rng(4),
                  energy_convention="average")
    assert b.energy_estimate == pytest.approx(0.05 * b.tally.n_input(1) / b.n)


@pytest.mark.parametrize("chunk", [1000, 4096, 1 << 16, 123457])
def test_chunk_size_does_not_change_block(chunk):
    src = SourceConfig(f_rep=1e6, delta_t=1e-7)
    params = DriftParams(phase_diffusion=0.5, polarization_floor=0.8, polarization_rate=2.0)
    ref = run_block(src, _hd(), DriftState(), 0.2, np.random.default_rng(9), drift_params=params,
                    drift_step_pulses=5000)
    b = run_block(src, _hd(), DriftState(), 0.2, np.random.default_rng(9), drift_params=params,
                  drift_step_pulses=5000, chunk_size=chunk)
    assert np.array_equal(ref.inputs, b.inputs) and np.array_equal(ref.outputs, b.outputs)
    assert ref.final_drift == b.final_drift


def test_identical_seeds_identical_blocks():
    src = SourceConfig(f_rep=1e6, delta_t=1e-7)
    a = run_block(src, _hd(), DriftState(), 0.05, np.random.default_rng(5))
    b = run_block(src, _hd(), DriftState(), 0.05, np.random.default_rng(5))
    assert np.array_equal(a.outputs, b.outputs) and a.tally == b.tally


def test_drift_advances_with_block():
    src = SourceConfig(f_rep=1e6, delta_t=1e-7)
    b = run_block(src, _hd(), DriftState(time=2.0), 0.1, np.random.default_rng(5),
                  drift_params=DriftParams(phase_diffusion=1.0))
    assert b.final_drift.time == pytest.approx(2.1)
    assert b.final_drift.phase_offset != 0.0


@given(st.lists(st.integers(0, 1), min_size=0, max_size=50), st.data())
def test_raw_pulse_packing_round_trip(xs, data):
    bs = data.draw(st.lists(st.integers(0, 1), min_size=len(xs), max_size=len(xs)))
    raw = pack_raw_pulses(xs, bs)
    assert len(raw) == (len(xs) + 3) // 4
    x2, b2 = unpack_raw_pulses(raw, len(xs))
    assert list(x2) == xs and list(b2) == bs


def test_raw_pulse_layout():
    # pulses (x,b) = (1,0), (0,1): codes 1 and 2 -> 0b00_00_10_01
    assert pack_raw_pulses([1, 0], [0, 1]) == bytes([0b1001])
