import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import unitary_group

from selftest_qrng.certify.realization import (Realization, binary_entropy,
                                               conditional_entropy_of_realization, fock_projector,
                                               input_weights, number_operator,
                                               realization_predictions)
from selftest_qrng.errors import InvariantViolation


def _single(rho0, rho1, m1):
    d = rho0.shape[0]
    return Realization([1.0], np.stack([rho0[None], rho1[None]]),
                       np.stack([np.eye(d) - m1, m1])[None])


def _random_state(rng, d):
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    r = g @ g.conj().T
    return r / np.trace(r).real


def _random_effect(rng, d):
    u = unitary_group.rvs(d, random_state=rng)
    return u @ np.diag(rng.random(d)) @ u.conj().T


def _random_realization(rng, d=3, n_lam=3):
    w = rng.random(n_lam)
    states = np.array([[_random_state(rng, d) for _ in range(n_lam)] for _ in range(2)])
    povms = []
    for _ in range(n_lam):
        m1 = _random_effect(rng, d)
        povms.append([np.eye(d) - m1, m1])
    return Realization(w / w.sum(), states, np.array(povms))


def test_vacuum_never_clicks():
    vac = fock_projector(0, 3)
    p, e = realization_predictions(_single(vac, vac, np.zeros((3, 3))), 0.3)
    assert (p.p1_given_0, p.p1_given_1, e) == (0.0, 0.0, 0.0)


def test_orthogonal_fock_attack():
    r = _single(fock_projector(0, 2), fock_projector(1, 2), fock_projector(1, 2))
    p, e = realization_predictions(r, 0.16)
    assert (p.p1_given_0, p.p1_given_1) == (0.0, 1.0) and e == 1.0
    _, e_avg = realization_predictions(r, 0.16, "average")
    assert e_avg == pytest.approx(0.16)
    assert conditional_entropy_of_realization(r, 0.16) == 0.0


def test_predictions_match_dense_trace_oracle():
    rng = np.random.default_rng(3)
    for _ in range(20):
        r = _random_realization(rng)
        p_x1 = rng.random()
        probs, energy = realization_predictions(r, p_x1)
        n_op = number_operator(r.dim)
        exp_p = [0.0, 0.0]
        exp_e = 0.0
        for lam, w in enumerate(r.weights):
            for x in range(2):
                exp_p[x] += w * np.trace(r.states[x, lam] @ r.povms[lam, 1]).real
                exp_e += w * np.trace(r.states[x, lam] @ n_op).real
        assert probs.as_tuple() == pytest.approx(tuple(exp_p), abs=1e-12)
        assert energy == pytest.approx(exp_e, abs=1e-12)


def test_predictions_linear_in_weights():
    rng = np.random.default_rng(4)
    r1, r2 = _random_realization(rng, n_lam=1), _random_realization(rng, n_lam=1)
    w = 0.3
    mix = Realization([w, 1 - w], np.concatenate([r1.states, r2.states], axis=1),
                      np.concatenate([r1.povms, r2.povms]))
    (p1, e1), (p2, e2), (pm, em) = (realization_predictions(r, 0.2) for r in (r1, r2, mix))
    assert pm.p1_given_0 == pytest.approx(w * p1.p1_given_0 + (1 - w) * p2.p1_given_0)
    assert pm.p1_given_1 == pytest.approx(w * p1.p1_given_1 + (1 - w) * p2.p1_given_1)
    assert em == pytest.approx(w * e1 + (1 - w) * e2)


def test_entropy_examples():
    det = _single(fock_projector(0, 2), fock_projector(0, 2), np.eye(2))
    assert conditional_entropy_of_realization(det, 0.4) == 0.0
    half = _single(fock_projector(0, 2), fock_projector(0, 2), 0.5 * np.eye(2))
    assert conditional_entropy_of_realization(half, 0.4) == pytest.approx(1.0)
    w = 0.35
    mix = Realization([w, 1 - w], np.concatenate([det.states, half.states], axis=1),
                      np.concatenate([det.povms, half.povms]))
    assert conditional_entropy_of_realization(mix, 0.4) == pytest.approx(1 - w)


@given(st.integers(0, 2**32 - 1), st.floats(0, 1))
def test_entropy_in_unit_interval(seed, p_x1):
    r = _random_realization(np.random.default_rng(seed), d=2, n_lam=2)
    assert 0.0 <= conditional_entropy_of_realization(r, p_x1) <= 1.0


@pytest.mark.parametrize("mutate, message", [
    (lambda w, s, m: (w * 1.1, s, m), "weights"),
    (lambda w, s, m: (w, s * 2, m), "unit trace"),
    (lambda w, s, m: (w, s, m * 1.5), "identity"),
])
def test_invariant_violations_name_the_constraint(mutate, message):
    r = _random_realization(np.random.default_rng(5))
    bad = Realization(*mutate(r.weights, r.states, r.povms))
    with pytest.raises(InvariantViolation, match=message):
        realization_predictions(bad, 0.5)


def test_non_psd_state_rejected():
    bad = np.diag([1.5, -0.5]).astype(complex)
    with pytest.raises(InvariantViolation, match="positive semidefinite"):
        _single(bad, fock_projector(0, 2), np.zeros((2, 2))).validate()


def test_embed_preserves_predictions():
    r = _random_realization(np.random.default_rng(6), d=2)
    big = r.embed(5).validate()
    assert realization_predictions(big, 0.3)[0].as_tuple() == pytest.approx(
        realization_predictions(r, 0.3)[0].as_tuple())


def test_binary_entropy_and_weights():
    assert binary_entropy(0.5) == 1.0 and binary_entropy(0.0) == 0.0
    assert binary_entropy(0.11) == pytest.approx(0.4999, abs=1e-4)
    assert input_weights(0.2, "average") == (0.8, 0.2)
    with pytest.raises(ValueError):
        input_weights(0.2, "max")
