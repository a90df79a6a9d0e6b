"""Certified lower bound on H(B|X,Lambda) under an energy bound.

Reduction used here
-------------------
For a single strategy ``lam`` with states of mean photon numbers ``e_0, e_1``
the vacuum populations are at least ``1 - e_x``, which forces the fidelity
of the two states to be at least ``cos(theta_0 + theta_1)`` with
``sin^2 theta_x = e_x``.  Fidelity can only grow under the (untrusted)
measurement, so the outcome distributions obey

    BC(a, b) = sqrt((1-a)(1-b)) + sqrt(a b) >= cos(theta_0 + theta_1),

``a = p(1|0,lam)``, ``b = p(1|1,lam)``.  Conversely any ``(a, b)`` with that
property is reached by qubit states in span{|0>, |1>}.  Minimising the
weighted energy ``w0 e0 + w1 e1`` at fixed overlap gives the per-strategy
energy cost :func:`energy_cost`; for the plain sum (w0 = w1 = 1) it is
``1 - BC(a, b)``.

The certified value is then the convex envelope of
``p0 H2(a) + p1 H2(b)`` over points ``(a, b, energy_cost)``, evaluated at the
observed statistics.  It is computed as a linear program over a growing set
of candidate points (column generation).  The LP duals define an affine
minorant whose validity over the whole square is proved by a branch and
bound with sound interval bounds, so the returned value never exceeds the
true minimum even if the LP is inexact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import linprog

from ..acquisition import CondProbs
from ..errors import InfeasibleCorrelationsError, InvariantViolation, NumericalFailureError
from .realization import binary_entropy, input_weights

ARTIFICIAL_COST = 10.0


@dataclass(frozen=True)
class CertInput:
    """Observed statistics plus the trusted energy bound.

    ``slack`` widens the observed ``(p(1|0), p(1|1))`` into a box of
    half-widths ``(t0, t1)``; the bound then holds for every point of it.
    """

    probs: CondProbs
    omega: float
    p_x1: float
    energy_convention: str = "sum"
    slack: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not self.omega >= 0:
            raise InvariantViolation(f"omega must be >= 0, got {self.omega}")
        if not 0.0 <= self.p_x1 <= 1.0:
            raise InvariantViolation(f"p_x1 must be in [0, 1], got {self.p_x1}")
        input_weights(self.p_x1, self.energy_convention)
        if min(self.slack) < 0:
            raise InvariantViolation("slack half-widths must be >= 0")

    def box(self) -> tuple[tuple[float, float], tuple[float, float]]:
        a, b = self.probs.as_tuple()
        t0, t1 = self.slack
        return ((max(0.0, a - t0), min(1.0, a + t0)), (max(0.0, b - t1), min(1.0, b + t1)))


@dataclass(frozen=True)
class CertResult:
    h: float
    method: str
    attack_gap: float | None = None
    lp_value: float | None = None
    certificate_gap: float = 0.0
    support: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if not 0.0 <= self.h <= 1.0:
            raise InvariantViolation(f"certified entropy must be in [0, 1], got {self.h}")

    def with_attack_gap(self, h_attack: float) -> "CertResult":
        return CertResult(self.h, self.method, h_attack - self.h, self.lp_value,
                          self.certificate_gap, self.support)


def one_minus_bc(a, b):
    """``1 - BC(a, b)`` without cancellation near ``a == b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d2 = (a - b) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = d2 / (np.sqrt(a) + np.sqrt(b)) ** 2
        t2 = d2 / (np.sqrt(1.0 - a) + np.sqrt(1.0 - b)) ** 2
    t1 = np.where(d2 == 0, 0.0, t1)
    t2 = np.where(d2 == 0, 0.0, t2)
    return 0.5 * (t1 + t2)


def bhattacharyya(a, b):
    return 1.0 - one_minus_bc(a, b)


def energy_cost_from_bc(bc, w0: float, w1: float, one_minus=None):
    """Least energy ``w0 e0 + w1 e1`` of two states whose fidelity may be as low as ``bc``."""
    bc = np.clip(np.asarray(bc, dtype=float), 0.0, 1.0)
    om = 1.0 - bc if one_minus is None else np.clip(one_minus, 0.0, 1.0)
    s = w0 + w1
    one_minus_sq = om * (1.0 + bc)
    q = s * s - 4.0 * w0 * w1 * one_minus_sq
    return 2.0 * w0 * w1 * one_minus_sq / (s + np.sqrt(np.maximum(q, 0.0)))


def energy_cost(a, b, w0: float = 1.0, w1: float = 1.0):
    """Least energy of any strategy producing ``p(1|0)=a``, ``p(1|1)=b``."""
    om = one_minus_bc(a, b)
    return energy_cost_from_bc(1.0 - om, w0, w1, one_minus=om)


def _pricing_grid(k: int = 360) -> np.ndarray:
    u = np.linspace(0.0, 1.0, k)
    g = np.sin(0.5 * np.pi * u) ** 2
    tails = np.logspace(-12, -4, 17)
    return np.unique(np.concatenate([g, tails, 1.0 - tails]))


_GRID = _pricing_grid()
_H_GRID = binary_entropy(_GRID)


@lru_cache(maxsize=16)
def _grid_tables(p_x1: float, w0: float, w1: float) -> tuple[np.ndarray, np.ndarray]:
    """Cost and energy of every pricing-grid point (independent of the duals)."""
    cost = (1.0 - p_x1) * _H_GRID[:, None] + p_x1 * _H_GRID[None, :]
    energy = energy_cost(_GRID[:, None], _GRID[None, :], w0, w1)
    cost.setflags(write=False)
    energy.setflags(write=False)
    return cost, energy


class _Problem:
    def __init__(self, p_x1: float, w0: float, w1: float):
        self.p0, self.p1 = 1.0 - p_x1, p_x1
        self.w0, self.w1 = w0, w1
        self.grid_cost, self.grid_energy = _grid_tables(p_x1, w0, w1)

    def cost(self, a, b):
        return self.p0 * binary_entropy(a) + self.p1 * binary_entropy(b)

    def energy(self, a, b):
        return energy_cost(a, b, self.w0, self.w1)

    def reduced(self, a, b, y):
        y0, ya, yb, ye = y
        return self.cost(a, b) - y0 - ya * a - yb * b - ye * self.energy(a, b)

    def price(self, y, n_best: int = 4) -> list[tuple[float, float, float]]:
        """Most negative reduced costs found on the grid, each refined by zooming."""
        y0, ya, yb, ye = y
        red = (self.grid_cost - y0 - ya * _GRID[:, None] - yb * _GRID[None, :]
               - ye * self.grid_energy)
        flat = np.argsort(red, axis=None)[: 64]
        picked: list[tuple[int, int]] = []
        for idx in flat:
            i, j = np.unravel_index(idx, red.shape)
            if all(abs(i - pi) > 6 or abs(j - pj) > 6 for pi, pj in picked):
                picked.append((i, j))
            if len(picked) == n_best:
                break
        out = []
        for i, j in picked:
            a, b = self._zoom(_GRID[i], _GRID[j], y)
            out.append((a, b, float(self.reduced(a, b, y))))
        return out

    def _zoom(self, a: float, b: float, y, rounds: int = 7, k: int = 13):
        half = 2.0 / len(_GRID)
        for _ in range(rounds):
            ga = np.clip(np.linspace(a - half, a + half, k), 0.0, 1.0)
            gb = np.clip(np.linspace(b - half, b + half, k), 0.0, 1.0)
            red = self.reduced(ga[:, None], gb[None, :], y)
            i, j = np.unravel_index(np.argmin(red), red.shape)
            a, b = float(ga[i]), float(gb[j])
            half *= 0.25
        return a, b


def _solve_lp(prob: _Problem, cols: np.ndarray, box, omega: float):
    (alo, ahi), (blo, bhi) = box
    a, b = cols[:, 0], cols[:, 1]
    ca, cb = 0.5 * (alo + ahi), 0.5 * (blo + bhi)
    c = np.concatenate([prob.cost(a, b), [ARTIFICIAL_COST]])
    e = np.concatenate([prob.energy(a, b), [0.0]])
    aa = np.concatenate([a, [ca]])
    bb = np.concatenate([b, [cb]])
    a_ub = np.vstack([e, aa, -aa, bb, -bb])
    b_ub = np.array([omega, ahi, -alo, bhi, -blo])
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=np.ones((1, len(c))), b_eq=[1.0],
                  bounds=(0, None), method="highs")
    if res.status != 0:
        raise NumericalFailureError(f"LP solver failed: {res.message}")
    y0 = float(res.eqlin.marginals[0])
    m = res.ineqlin.marginals
    ye = float(min(0.0, m[0]))
    ya = float(m[1] - m[2])
    yb = float(m[3] - m[4])
    return res, (y0, ya, yb, ye)


def _bnb_lower_bound(prob: _Problem, ya: float, yb: float, ye: float, tol: float = 1e-10,
                     max_rounds: int = 64, max_cells: int = 300_000,
                     init: int = 64) -> tuple[float, float, tuple[float, float]]:
    """Rigorous lower bound on ``min_{[0,1]^2} cost - ya a - yb b - ye energy``.

    Returns ``(lower_bound, best_value_seen, best_point)``.
    """
    p0, p1, w0, w1 = prob.p0, prob.p1, prob.w0, prob.w1
    c = -ye  # >= 0

    def g(bc):
        return energy_cost_from_bc(bc, w0, w1)

    def f1(a):
        return p0 * binary_entropy(a) - ya * a

    def f2(b):
        return p1 * binary_entropy(b) - yb * b

    def value(a, b):
        return f1(a) + f2(b) + c * energy_cost(a, b, w0, w1)

    edges = np.linspace(0.0, 1.0, init + 1)
    al, bl = np.meshgrid(edges[:-1], edges[:-1], indexing="ij")
    ah, bh = np.meshgrid(edges[1:], edges[1:], indexing="ij")
    al, ah, bl, bh = (v.ravel() for v in (al, ah, bl, bh))
    best = np.inf
    best_pt = (0.5, 0.5)
    retired_lb = np.inf

    for _ in range(max_rounds):
        ca, cb = 0.5 * (al + ah), 0.5 * (bl + bh)
        vals = value(ca, cb)
        k = int(np.argmin(vals))
        if vals[k] < best:
            best, best_pt = float(vals[k]), (float(ca[k]), float(cb[k]))
        # interval variant
        f1_min = np.minimum(f1(al), f1(ah))
        f2_min = np.minimum(f2(bl), f2(bh))
        bc_up = np.minimum(1.0, np.sqrt((1.0 - al) * (1.0 - bl)) + np.sqrt(ah * bh))
        lb = f1_min + f2_min + c * g(bc_up)
        if c > 0:
            # tangent plane of the concave BC at the centre, chord of the concave g
            with np.errstate(divide="ignore", invalid="ignore"):
                ga = 0.5 * (np.sqrt(cb / ca) - np.sqrt((1.0 - cb) / (1.0 - ca)))
                gb = 0.5 * (np.sqrt(ca / cb) - np.sqrt((1.0 - ca) / (1.0 - cb)))
            bcc = bhattacharyya(ca, cb)
            corners = [(al, bl), (al, bh), (ah, bl), (ah, bh)]
            t_max = np.max([bcc + ga * (x - ca) + gb * (y - cb) for x, y in corners], axis=0)
            b_hi = np.minimum(1.0, t_max)
            b_lo = np.min([bhattacharyya(x, y) for x, y in corners], axis=0)
            width = b_hi - b_lo
            g_hi, g_lo = g(b_hi), g(b_lo)
            ok = width > 1e-13
            slope = np.where(ok, (g_hi - g_lo) / np.where(ok, width, 1.0), 0.0)
            const = c * (g_hi + slope * (bcc - ga * ca - gb * cb - b_hi))
            la = c * slope * ga
            lb_b = c * slope * gb
            part_a = np.minimum(f1(al) + la * al, f1(ah) + la * ah)
            part_b = np.minimum(f2(bl) + lb_b * bl, f2(bh) + lb_b * bh)
            lb2 = part_a + part_b + const
            lb = np.where(ok & np.isfinite(lb2), np.maximum(lb, lb2), lb)
        keep = lb < best - tol
        if (~keep).any():
            retired_lb = min(retired_lb, float(np.min(lb[~keep])))
        al, ah, bl, bh, lb = al[keep], ah[keep], bl[keep], bh[keep], lb[keep]
        if len(al) == 0:
            break
        tiny = (ah - al) < 1e-14
        if tiny.any():
            retired_lb = min(retired_lb, float(np.min(lb[tiny])))
            al, ah, bl, bh, lb = al[~tiny], ah[~tiny], bl[~tiny], bh[~tiny], lb[~tiny]
            if len(al) == 0:
                break
        if 4 * len(al) > max_cells:
            order = np.argsort(lb)
            cut = max_cells // 4
            retired_lb = min(retired_lb, float(np.min(lb[order[cut:]])))
            sel = order[:cut]
            al, ah, bl, bh, lb = al[sel], ah[sel], bl[sel], bh[sel], lb[sel]
        ma, mb = 0.5 * (al + ah), 0.5 * (bl + bh)
        al, ah, bl, bh = (np.concatenate(v) for v in (
            (al, ma, al, ma), (ma, ah, ma, ah), (bl, bl, mb, mb), (mb, mb, bh, bh)))
    else:
        ca, cb = 0.5 * (al + ah), 0.5 * (bl + bh)
        if len(al):
            # unresolved cells keep their own (sound) bound
            f1_min = np.minimum(f1(al), f1(ah))
            f2_min = np.minimum(f2(bl), f2(bh))
            bc_up = np.minimum(1.0, np.sqrt((1.0 - al) * (1.0 - bl)) + np.sqrt(ah * bh))
            retired_lb = min(retired_lb, float(np.min(f1_min + f2_min + c * g(bc_up))))
    lower = min(retired_lb, best)
    # floating-point safety margin
    lower -= 1e-12 * (1.0 + abs(lower) + abs(ya) + abs(yb) + c)
    return lower, best, best_pt


def classical_reproducible(box) -> bool:
    """True when the box meets the diagonal ``p(1|0) = p(1|1)``."""
    (alo, ahi), (blo, bhi) = box
    return alo <= bhi and blo <= ahi


def min_energy_required(box, w0: float, w1: float) -> float:
    """Least energy over the box of any single strategy (upper bounds the mixture optimum)."""
    (alo, ahi), (blo, bhi) = box
    if classical_reproducible(box):
        return 0.0
    # closest corner to the diagonal
    if ahi < blo:
        return float(energy_cost(ahi, blo, w0, w1))
    return float(energy_cost(alo, bhi, w0, w1))


def certify_entropy(inp: CertInput, *, tol: float = 1e-10, max_iterations: int = 120
                    ) -> CertResult:
    """Lower bound on ``H(B|X,Lambda)`` valid for every compatible realization.

    Raises
    ------
    InfeasibleCorrelationsError
        If no strategy reproduces the statistics within the energy bound.
    NumericalFailureError
        If the LP solver fails.
    """
    box = inp.box()
    w0, w1 = input_weights(inp.p_x1, inp.energy_convention)
    if classical_reproducible(box):
        return CertResult(0.0, "analytic-fallback", lp_value=0.0)
    # the per-strategy energy cost is convex, so no mixture needs less energy
    # than the cheapest single strategy in the box
    need = min_energy_required(box, w0, w1)
    if need > inp.omega * (1.0 + 1e-12):
        raise InfeasibleCorrelationsError(
            f"statistics {inp.probs.as_tuple()} need energy above omega={inp.omega:g} "
            f"(single-strategy requirement {need:.4g})")
    prob = _Problem(inp.p_x1, w0, w1)

    (alo, ahi), (blo, bhi) = box
    g = np.linspace(0.0, 1.0, 9)
    seed_pts = [(x, y) for x in g for y in g]
    seed_pts += [(alo, blo), (alo, bhi), (ahi, blo), (ahi, bhi)]
    cols = np.array(seed_pts, dtype=float)
    res, y = _solve_lp(prob, cols, box, inp.omega)
    for _ in range(max_iterations):
        cands = [(a, b) for a, b, r in prob.price(y) if r < -tol]
        if not cands:
            break
        cols = np.vstack([cols, np.array(cands)])
        res, y = _solve_lp(prob, cols, box, inp.omega)
    art = res.x[-1]
    if art > 1e-7:
        raise InfeasibleCorrelationsError(
            f"statistics {inp.probs.as_tuple()} need energy above omega={inp.omega:g} "
            f"(single-strategy requirement {need:.4g})")

    for _ in range(8):
        y0, ya, yb, ye = y
        lower, best, pt = _bnb_lower_bound(prob, ya, yb, ye)
        if best - y0 > -1e-8:
            break
        # column missed by the grid pricing: add the branch-and-bound minimiser
        a_new, b_new = prob._zoom(pt[0], pt[1], y, rounds=10, k=9)
        cols = np.vstack([cols, [pt, (a_new, b_new)]])
        res, y = _solve_lp(prob, cols, box, inp.omega)
    lin = min(ya * alo, ya * ahi) + min(yb * blo, yb * bhi) + ye * inp.omega
    h = lower + lin
    support = tuple((float(cols[k, 0]), float(cols[k, 1]), float(res.x[k]))
                    for k in range(len(cols)) if res.x[k] > 1e-12)
    lp_value = float(res.fun)
    h_clipped = min(1.0, max(0.0, h))
    return CertResult(h_clipped, "convex-program", lp_value=lp_value,
                      certificate_gap=max(0.0, lp_value - h), support=support)


def certify_probs(p10: float, p11: float, omega: float, p_x1: float, **kw) -> CertResult:
    """Shorthand for :func:`certify_entropy` on bare probabilities."""
    convention = kw.pop("energy_convention", "sum")
    slack = kw.pop("slack", (0.0, 0.0))
    return certify_entropy(CertInput(CondProbs(p10, p11), omega, p_x1, convention, slack), **kw)
