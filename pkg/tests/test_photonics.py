import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from selftest_qrng.errors import InvariantViolation
from selftest_qrng.photonics import (DriftParams, DriftState, HomodyneConfig, QuadratureSample,
                                     SourceConfig, analytic_click_prob, balanced_probs,
                                     discrimination_error, flip_probability,
                                     noise_variance_for_flip_probability, pulse_amplitude,
                                     sample_quadrature, step_drift)


def test_source_defaults_and_invariants():
    src = SourceConfig()
    assert src.f_rep == 12.5e6 and src.p_x1 == 0.16
    assert src.background_power_ratio == pytest.approx(0.0449779, rel=1e-5)
    for bad in (dict(mu=-1), dict(p_x1=1.5), dict(f_rep=0), dict(delta_t=1e-6),
                dict(background_power_ratio=-0.1)):
        with pytest.raises(InvariantViolation):
            SourceConfig(**bad)


def test_homodyne_shot_variance_is_fixed():
    with pytest.raises(InvariantViolation):
        HomodyneConfig(shot_variance=2.0)
    with pytest.raises(InvariantViolation):
        HomodyneConfig(electronic_noise_variance=-0.1)


def test_quadrature_sample_rejects_non_finite():
    with pytest.raises(InvariantViolation):
        QuadratureSample(float("nan"))


def test_pulse_amplitude_examples():
    src = SourceConfig(mu=0.01)
    assert pulse_amplitude(src, 0, DriftState()) == 0
    amp = pulse_amplitude(src, 1, DriftState())
    assert abs(amp) == pytest.approx(0.1) and math.isclose(np.angle(amp), 0.0)
    amp = pulse_amplitude(src, 1, DriftState(polarization_loss=0.81))
    assert abs(amp) == pytest.approx(0.09)
    amp = pulse_amplitude(src, 1, DriftState(phase_offset=0.7))
    assert np.angle(amp) == pytest.approx(0.7)


def _mc_mean(amp, hd, rng, n=1_000_000):
    return sample_quadrature(amp, hd, rng, size=n).mean()


def test_sample_quadrature_moments(rng):
    hd = HomodyneConfig()
    x = sample_quadrature(0j, hd, rng, size=1_000_000)
    se = 1.0 / math.sqrt(len(x))
    assert abs(x.mean()) < 4 * se
    assert abs(x.var() - 1.0) < 4 * math.sqrt(2.0 / len(x))
    assert abs(_mc_mean(0.1 + 0j, hd, rng) - 0.2) < 4 * se
    assert abs(_mc_mean(0.1 + 0j, HomodyneConfig(lo_phase=math.pi / 2), rng)) < 4 * se


def test_sample_quadrature_scalar_returns_sample(rng):
    assert isinstance(sample_quadrature(0.1, HomodyneConfig(), rng), QuadratureSample)


def test_analytic_click_prob_examples():
    assert analytic_click_prob(0j, HomodyneConfig(threshold=1e6)) == 0.0
    assert analytic_click_prob(0.1, HomodyneConfig(threshold=0.2)) == pytest.approx(0.5)
    assert analytic_click_prob(0j, HomodyneConfig(threshold=1.0)) == pytest.approx(
        0.15865525393145707, abs=1e-12)


def test_pi_phase_flips_coherent_mean_and_leaves_vacuum(rng):
    hd0, hdpi = HomodyneConfig(threshold=0.05), HomodyneConfig(lo_phase=math.pi, threshold=0.05)
    assert analytic_click_prob(0j, hd0) == analytic_click_prob(0j, hdpi)
    a = analytic_click_prob(0.1, hd0)
    b = analytic_click_prob(0.1, HomodyneConfig(lo_phase=math.pi, threshold=-0.05))
    assert a == pytest.approx(1 - b)


def test_sampling_is_seed_deterministic():
    hd = HomodyneConfig(electronic_noise_variance=0.3)
    a = sample_quadrature(0.1, hd, np.random.default_rng(7), size=100)
    b = sample_quadrature(0.1, hd, np.random.default_rng(7), size=100)
    assert np.array_equal(a, b)


def test_step_drift_static_only_advances_time(rng):
    d = DriftState(0.3, 0.9, 1.0)
    out = step_drift(d, 0.5, DriftParams(), rng)
    assert (out.phase_offset, out.polarization_loss, out.time) == (0.3, 0.9, 1.5)
    with pytest.raises(ValueError):
        step_drift(d, 0.0, DriftParams(), rng)


def test_step_drift_polarization_stays_between_floor_and_one(rng):
    p = DriftParams(polarization_floor=0.8, polarization_rate=0.5)
    d = DriftState()
    for _ in range(200):
        d = step_drift(d, 0.1, p, rng)
        assert 0.8 <= d.polarization_loss <= 1.0
    assert d.polarization_loss == pytest.approx(0.8, abs=1e-3)


def test_phase_variance_grows_linearly():
    p = DriftParams(phase_diffusion=0.04)
    runs, steps, dt = 4000, 50, 0.1
    rng = np.random.default_rng(3)
    final = np.empty(runs)
    for r in range(runs):
        d = DriftState()
        for _ in range(steps):
            d = step_drift(d, dt, p, rng)
        final[r] = d.phase_offset
    expected = 0.04 * steps * dt
    # sample variance of Gaussian data: (n-1) s^2 / sigma^2 ~ chi2(n-1)
    stat = (runs - 1) * final.var(ddof=1) / expected
    lo, hi = stats.chi2.ppf([1e-4, 1 - 1e-4], runs - 1)
    assert lo < stat < hi


@given(st.floats(0.0, 5.0), st.floats(0.0, 5.0))
def test_discrimination_error_non_decreasing_in_noise(v1, v2):
    lo, hi = sorted((v1, v2))
    assert discrimination_error(0.01, lo) <= discrimination_error(0.01, hi) + 1e-15


def test_flip_probability_mapping_round_trip():
    var = noise_variance_for_flip_probability(0.05, 0.01, 0.16)
    assert flip_probability(0.01, 0.16, var) == pytest.approx(0.05, abs=1e-10)
    # small-noise check against the closed form for a threshold at the mean:
    # P(sign change) = arctan(sigma_e) / pi
    assert flip_probability(0.0, 0.5, var) == pytest.approx(math.atan(math.sqrt(var)) / math.pi,
                                                            rel=1e-8)
    assert noise_variance_for_flip_probability(0.0, 0.01, 0.16) == 0.0
    with pytest.raises(ValueError):
        noise_variance_for_flip_probability(0.6, 0.01, 0.16)


def test_balanced_probs_are_balanced():
    p10, p11, tau = balanced_probs(0.01, 0.025)
    assert tau == pytest.approx(0.1)
    assert 1 - p10 == pytest.approx(p11, abs=1e-15)
