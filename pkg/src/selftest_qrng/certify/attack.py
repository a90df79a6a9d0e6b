"""Achievability oracle: explicit attacks that reproduce the statistics.

Every value returned here belongs to a concrete :class:`Realization` whose
predictions are re-evaluated from its density matrices and POVMs, so it is an
upper bound on any sound certified entropy.
"""
from __future__ import annotations

import logging
import math

import numpy as np
from scipy.linalg import expm
from scipy.optimize import linprog, minimize_scalar

from ..errors import InvariantViolation
from .bound import CertInput
from .realization import (Realization, binary_entropy, input_weights,
                          realization_predictions, conditional_entropy_of_realization)

log = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-4


class _Pool:
    """Candidate single-strategy atoms ``(rho_0, rho_1, M_1)`` on a d-level space."""

    def __init__(self, dim: int):
        self.dim = dim
        self.rho0 = np.zeros((0, dim, dim), dtype=complex)
        self.rho1 = np.zeros((0, dim, dim), dtype=complex)
        self.m1 = np.zeros((0, dim, dim), dtype=complex)

    def __len__(self):
        return len(self.m1)

    def add(self, rho0, rho1, m1):
        self.rho0 = np.concatenate([self.rho0, rho0])
        self.rho1 = np.concatenate([self.rho1, rho1])
        self.m1 = np.concatenate([self.m1, m1])

    def stats(self, p_x1: float, w0: float, w1: float):
        a = np.clip(np.einsum("kij,kji->k", self.rho0, self.m1).real, 0.0, 1.0)
        b = np.clip(np.einsum("kij,kji->k", self.rho1, self.m1).real, 0.0, 1.0)
        n = np.arange(self.dim, dtype=float)
        e0 = np.einsum("kii,i->k", self.rho0, n).real
        e1 = np.einsum("kii,i->k", self.rho1, n).real
        h = (1.0 - p_x1) * binary_entropy(a) + p_x1 * binary_entropy(b)
        return a, b, w0 * e0 + w1 * e1, np.atleast_1d(h)


def _pure(vecs: np.ndarray) -> np.ndarray:
    vecs = vecs / np.linalg.norm(vecs, axis=-1, keepdims=True)
    return np.einsum("ki,kj->kij", vecs, vecs.conj())


def _structured_atoms(dim: int, w0: float, w1: float, grid: np.ndarray):
    """Deterministic, orthogonal-Fock and energy-optimal qubit strategies."""
    vac = np.zeros(dim, dtype=complex)
    vac[0] = 1.0
    one = np.zeros(dim, dtype=complex)
    one[1] = 1.0
    eye = np.eye(dim, dtype=complex)
    p_one = np.outer(one, one)
    rho_v, rho_1 = np.outer(vac, vac), np.outer(one, one)
    rho0 = [rho_v, rho_v, rho_v, rho_1]
    rho1 = [rho_v, rho_v, rho_1, rho_v]
    m1 = [np.zeros((dim, dim), complex), eye, p_one, p_one]
    a, b = np.meshgrid(grid, grid, indexing="ij")
    q0, q1, qm = qubit_strategies(a.ravel(), b.ravel(), w0, w1, dim)
    return (np.concatenate([np.array(rho0), q0]), np.concatenate([np.array(rho1), q1]),
            np.concatenate([np.array(m1), qm]))


def _split_angle(delta: float, w0: float, w1: float) -> float:
    """Angle ``t0`` in [0, delta] minimising ``w0 sin^2 t0 + w1 sin^2 (delta - t0)``."""
    if delta == 0.0:
        return 0.0
    if w0 == 0.0:
        return delta
    if w1 == 0.0:
        return 0.0
    res = minimize_scalar(lambda t: w0 * math.sin(t) ** 2 + w1 * math.sin(delta - t) ** 2,
                          bounds=(0.0, delta), method="bounded",
                          options={"xatol": 1e-13})
    return float(res.x)


def qubit_strategies(a, b, w0: float = 1.0, w1: float = 1.0, dim: int = 2):
    """Pure qubit states and a projective measurement giving ``p(1|0)=a``, ``p(1|1)=b``.

    The two states are real vectors in span{|0>, |1>} at angles ``beta_x``;
    the measurement projects onto the direction ``phi + pi/2``.  Their overlap
    equals ``BC(a, b)`` and the angles are placed around the vacuum so that the
    weighted mean photon number is the least possible for that overlap.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    k = len(a)
    ra, rb = np.arcsin(np.sqrt(np.clip(a, 0, 1))), np.arcsin(np.sqrt(np.clip(b, 0, 1)))
    delta = rb - ra
    rho0 = np.zeros((k, dim, dim), dtype=complex)
    rho1 = np.zeros((k, dim, dim), dtype=complex)
    m1 = np.zeros((k, dim, dim), dtype=complex)
    for i in range(k):
        s = 1.0 if delta[i] >= 0 else -1.0
        t0 = _split_angle(abs(delta[i]), w0, w1)
        beta0 = -s * t0
        beta1 = beta0 + delta[i]
        phi = beta0 - ra[i]
        v0 = np.array([math.cos(beta0), math.sin(beta0)])
        v1 = np.array([math.cos(beta1), math.sin(beta1)])
        u = np.array([-math.sin(phi), math.cos(phi)])
        rho0[i, :2, :2] = np.outer(v0, v0)
        rho1[i, :2, :2] = np.outer(v1, v1)
        m1[i, :2, :2] = np.outer(u, u)
    return rho0, rho1, m1


def _random_atoms(rng: np.random.Generator, count: int, dim: int, scale: float):
    """Random pure states concentrated near the vacuum and random projective POVMs."""
    decay = scale ** (0.5 * np.arange(dim))
    z0 = (rng.standard_normal((count, dim)) + 1j * rng.standard_normal((count, dim))) * decay
    z1 = (rng.standard_normal((count, dim)) + 1j * rng.standard_normal((count, dim))) * decay
    z0[:, 0] += 1.0
    z1[:, 0] += 1.0
    g = rng.standard_normal((count, dim, dim)) + 1j * rng.standard_normal((count, dim, dim))
    q, _ = np.linalg.qr(g)
    ranks = rng.integers(1, dim, size=count)
    mask = (np.arange(dim)[None, :] < ranks[:, None]).astype(float)
    m1 = np.einsum("kij,kj,klj->kil", q, mask, q.conj())
    return _pure(z0), _pure(z1), m1


def _random_unitaries(rng: np.random.Generator, count: int, dim: int, sigma: float):
    g = rng.standard_normal((count, dim, dim)) + 1j * rng.standard_normal((count, dim, dim))
    herm = 0.5 * (g + np.conj(np.swapaxes(g, 1, 2)))
    return np.array([expm(1j * sigma * hm) for hm in herm])


def _perturb(rng, rho0, rho1, m1, sigma: float):
    k, d = len(m1), m1.shape[-1]
    u0, u1, um = (_random_unitaries(rng, k, d, sigma) for _ in range(3))

    def conj(u, x):
        return np.einsum("kij,kjl,kml->kim", u, x, u.conj())

    return conj(u0, rho0), conj(u1, rho1), conj(um, m1)


def _solve(pool: _Pool, p_x1, w0, w1, box, omega):
    a, b, e, h = pool.stats(p_x1, w0, w1)
    (alo, ahi), (blo, bhi) = box
    a_ub = np.vstack([e, a, -a, b, -b])
    b_ub = np.array([omega, ahi, -alo, bhi, -blo])
    res = linprog(h, A_ub=a_ub, b_ub=b_ub, A_eq=np.ones((1, len(h))), b_eq=[1.0],
                  bounds=(0, None), method="highs")
    return res


def _realization_from(pool: _Pool, idx: np.ndarray, weights: np.ndarray) -> Realization:
    w = np.clip(weights, 0.0, None)
    w = w / w.sum()
    dim = pool.dim
    states = np.stack([pool.rho0[idx], pool.rho1[idx]])
    m1 = pool.m1[idx]
    # re-symmetrise to remove round-off before validation
    m1 = 0.5 * (m1 + np.conj(np.swapaxes(m1, 1, 2)))
    states = 0.5 * (states + np.conj(np.swapaxes(states, 2, 3)))
    povms = np.stack([np.eye(dim)[None] - m1, m1], axis=1)
    return Realization(w, states, povms)


def best_attack(inp: CertInput, d_t: int = 4, budget: int = 200,
                rng: np.random.Generator | None = None, *,
                tolerance: float = DEFAULT_TOLERANCE,
                warm_start: Realization | None = None,
                refine_rounds: int = 10) -> tuple[float, Realization | None]:
    """Least conditional entropy of an explicit attack matching the statistics.

    Candidate single-strategy atoms are the deterministic and orthogonal-Fock
    strategies, a grid of energy-optimal qubit strategies, and ``budget``
    random strategies on a ``d_t``-level Fock truncation.  A linear program
    mixes them so that the observed ``(p(1|0), p(1|1))`` (any point of the
    input's slack box) is reproduced under the energy bound; support atoms are
    then locally perturbed and the program re-solved ``refine_rounds`` times.

    Parameters
    ----------
    inp : CertInput
    d_t : int
        Fock truncation dimension (>= 2).
    budget : int
        Number of random restarts, i.e. random strategies added to the pool.
    rng : numpy.random.Generator, optional
        Defaults to a fixed-seed generator, so results are reproducible.
    tolerance : float
        Allowed total variation between the witness predictions and the box.
    warm_start : Realization, optional
        Strategies of a previous witness, embedded into ``d_t`` levels.  With
        it the result is never worse than that witness.

    Returns
    -------
    (h_attack, realization)
        ``(inf, None)`` when no matching attack was found within budget; this
        is logged and not raised.
    """
    if d_t < 2:
        raise ValueError(f"d_t must be >= 2, got {d_t}")
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    rng = np.random.default_rng(0) if rng is None else rng
    p_x1 = inp.p_x1
    w0, w1 = input_weights(p_x1, inp.energy_convention)
    box = inp.box()

    pool = _Pool(d_t)
    g = np.sin(0.5 * np.pi * np.linspace(0.0, 1.0, 25)) ** 2
    (alo, ahi), (blo, bhi) = box
    grid = np.unique(np.concatenate([g, [alo, ahi, blo, bhi]]))
    pool.add(*_structured_atoms(d_t, w0, w1, grid))
    if warm_start is not None:
        ws = warm_start.embed(d_t) if warm_start.dim < d_t else warm_start
        if ws.dim != d_t:
            raise ValueError("warm_start lives on a larger space than d_t")
        pool.add(ws.states[0], ws.states[1], ws.povms[:, 1])
    scale = max(inp.omega, 1e-3)
    pool.add(*_random_atoms(rng, budget, d_t, min(scale, 0.5)))

    res = _solve(pool, p_x1, w0, w1, box, inp.omega)
    if res.status != 0:
        log.warning("no attack reproduces %s under omega=%g within budget",
                    inp.probs.as_tuple(), inp.omega)
        return math.inf, None

    step, jitter = 0.25, 0.02
    for _ in range(refine_rounds):
        support = np.flatnonzero(res.x > 1e-12)
        a, b, _, _ = pool.stats(p_x1, w0, w1)
        # local moves: qubit strategies around each support point and random rotations
        pts = []
        for k in support:
            for da in (-1.0, 0.0, 1.0):
                for db in (-1.0, 0.0, 1.0):
                    pts.append((a[k] + da * jitter, b[k] + db * jitter))
        pts = np.clip(np.array(pts), 0.0, 1.0)
        pool.add(*qubit_strategies(pts[:, 0], pts[:, 1], w0, w1, d_t))
        reps = np.repeat(support, 4)
        pool.add(*_perturb(rng, pool.rho0[reps], pool.rho1[reps], pool.m1[reps], step))
        new = _solve(pool, p_x1, w0, w1, box, inp.omega)
        if new.status == 0 and new.fun <= res.fun + 1e-15:
            res = new
        step *= 0.4
        jitter *= 0.5

    support = np.flatnonzero(res.x > 1e-12)
    r = _realization_from(pool, support, res.x[support])
    try:
        r.validate(1e-8)
    except InvariantViolation:  # pragma: no cover - guarded by construction
        log.warning("attack witness failed validation")
        return math.inf, None
    probs, energy = realization_predictions(r, p_x1, inp.energy_convention)
    dist = (max(0.0, alo - probs.p1_given_0, probs.p1_given_0 - ahi)
            + max(0.0, blo - probs.p1_given_1, probs.p1_given_1 - bhi))
    if dist > tolerance or energy > inp.omega + 1e-8 * (1.0 + inp.omega):
        log.warning("attack witness misses the statistics by %.3g", dist)
        return math.inf, None
    return conditional_entropy_of_realization(r, p_x1), r
