"""Explicit classical-quantum strategies on a truncated Fock space."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..acquisition import CondProbs
from ..errors import InvariantViolation

TOL = 1e-9
CONVENTIONS = ("sum", "average")


def binary_entropy(p):
    """Binary Shannon entropy in bits (0 at p in {0, 1})."""
    p = np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(p * np.log2(p) + (1.0 - p) * np.log2(1.0 - p))
    h = np.where((p <= 0.0) | (p >= 1.0), 0.0, h)
    return float(h) if h.ndim == 0 else h


def number_operator(dim: int) -> np.ndarray:
    return np.diag(np.arange(dim, dtype=float))


def fock_projector(k: int, dim: int) -> np.ndarray:
    m = np.zeros((dim, dim), dtype=complex)
    m[k, k] = 1.0
    return m


def input_weights(p_x1: float, convention: str) -> tuple[float, float]:
    """Per-input weights of the energy functional."""
    if convention == "sum":
        return 1.0, 1.0
    if convention == "average":
        return 1.0 - p_x1, p_x1
    raise ValueError(f"energy convention must be one of {CONVENTIONS}, got {convention!r}")


def _check_psd(m: np.ndarray, what: str, tol: float) -> None:
    if not np.allclose(m, m.conj().T, atol=tol):
        raise InvariantViolation(f"{what} is not Hermitian")
    if np.linalg.eigvalsh(m).min() < -tol:
        raise InvariantViolation(f"{what} is not positive semidefinite")


@dataclass(frozen=True, eq=False)
class Realization:
    """Strategy ``{p(lam), rho_x^lam, M_b^lam}``.

    Attributes
    ----------
    weights : ndarray, shape (L,)
    states : ndarray, shape (2, L, d, d)
        ``states[x, lam]`` is the density operator sent for input ``x``.
    povms : ndarray, shape (L, 2, d, d)
        ``povms[lam, b]`` is the POVM element for outcome ``b``.
    """

    weights: np.ndarray
    states: np.ndarray
    povms: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        object.__setattr__(self, "states", np.asarray(self.states, dtype=complex))
        object.__setattr__(self, "povms", np.asarray(self.povms, dtype=complex))

    @property
    def dim(self) -> int:
        return self.states.shape[-1]

    @property
    def n_strategies(self) -> int:
        return len(self.weights)

    def validate(self, tol: float = TOL) -> "Realization":
        w, rho, m = self.weights, self.states, self.povms
        L = len(w)
        if rho.shape[:2] != (2, L) or m.shape[:2] != (L, 2):
            raise InvariantViolation("states must be (2, L, d, d) and povms (L, 2, d, d)")
        d = rho.shape[-1]
        if rho.shape[-2:] != (d, d) or m.shape[-2:] != (d, d):
            raise InvariantViolation("operators must be square and share one dimension")
        if (w < -tol).any() or abs(w.sum() - 1.0) > tol:
            raise InvariantViolation("weights must be non-negative and sum to 1")
        eye = np.eye(d)
        for lam in range(L):
            for x in range(2):
                r = rho[x, lam]
                _check_psd(r, f"state rho_{x}^{lam}", tol)
                if abs(np.trace(r).real - 1.0) > tol:
                    raise InvariantViolation(f"state rho_{x}^{lam} does not have unit trace")
            for b in range(2):
                _check_psd(m[lam, b], f"POVM element M_{b}^{lam}", tol)
            if not np.allclose(m[lam, 0] + m[lam, 1], eye, atol=tol):
                raise InvariantViolation(f"POVM {lam} does not sum to identity")
        return self

    def embed(self, dim: int) -> "Realization":
        """Same strategy on a larger truncation (zero-padded states, POVM completed)."""
        d = self.dim
        if dim < d:
            raise ValueError("can only embed into a larger space")
        L = self.n_strategies
        rho = np.zeros((2, L, dim, dim), dtype=complex)
        rho[..., :d, :d] = self.states
        m = np.zeros((L, 2, dim, dim), dtype=complex)
        m[..., :d, :d] = self.povms
        for k in range(d, dim):
            m[:, 0, k, k] = 1.0
        return Realization(self.weights.copy(), rho, m)


def strategy_click_probs(r: Realization) -> np.ndarray:
    """``p(b=1 | x, lam)`` as an array of shape (2, L)."""
    return np.einsum("xlij,lji->xl", r.states, r.povms[:, 1]).real


def strategy_energies(r: Realization) -> np.ndarray:
    """``Tr[rho_x^lam N]`` as an array of shape (2, L)."""
    n = np.arange(r.dim, dtype=float)
    return np.einsum("xlii,i->xl", r.states, n).real


def realization_predictions(r: Realization, p_x1: float, convention: str = "sum",
                            validate: bool = True) -> tuple[CondProbs, float]:
    """Observable ``p(1|x)`` and the energy functional of a strategy."""
    if validate:
        r.validate()
    w0, w1 = input_weights(p_x1, convention)
    clicks = np.clip(strategy_click_probs(r), 0.0, 1.0)
    p10, p11 = clicks @ r.weights
    e = strategy_energies(r)
    energy = float(r.weights @ (w0 * e[0] + w1 * e[1]))
    return CondProbs(float(min(1.0, max(0.0, p10))), float(min(1.0, max(0.0, p11)))), energy


def conditional_entropy_of_realization(r: Realization, p_x1: float,
                                       validate: bool = True) -> float:
    """``sum_lam p(lam) sum_x p(x) H2(p(1|x, lam))`` in bits."""
    if validate:
        r.validate()
    clicks = strategy_click_probs(r)
    h = (1.0 - p_x1) * binary_entropy(clicks[0]) + p_x1 * binary_entropy(clicks[1])
    return float(min(1.0, max(0.0, r.weights @ np.atleast_1d(h))))
