"""Finite-size conversion, input-entropy accounting and entropy sweeps."""
from __future__ import annotations

import math
from dataclasses import dataclass

from ..acquisition import CondProbs, energy_estimate
from ..errors import InvariantViolation, QRNGError
from ..photonics import balanced_probs
from .bound import CertInput, certify_entropy
from .realization import binary_entropy


@dataclass(frozen=True)
class FiniteSizeParams:
    """Block length, security parameters and the two correction constants.

    ``c`` and ``d`` have no defaults on purpose: they must come from the
    configuration.
    """

    n: int
    epsilon: float
    epsilon_prime: float
    c: float
    d: float

    def __post_init__(self):
        if not self.n >= 1:
            raise InvariantViolation(f"n must be >= 1, got {self.n}")
        for name in ("epsilon", "epsilon_prime"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise InvariantViolation(f"{name} must be in (0, 1), got {v}")
        for name in ("c", "d"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise InvariantViolation(f"{name} must be finite and >= 0, got {v}")

    @property
    def log_term(self) -> float:
        """``L = log2(2 / epsilon)``."""
        return math.log2(2.0 / self.epsilon)

    def with_n(self, n: int) -> "FiniteSizeParams":
        return FiniteSizeParams(int(n), self.epsilon, self.epsilon_prime, self.c, self.d)


def finite_size_penalty(fs: FiniteSizeParams) -> float:
    """Per-pulse deduction ``c sqrt(L/n) + d L/n``."""
    ratio = fs.log_term / fs.n
    return fs.c * math.sqrt(ratio) + fs.d * ratio


def finite_size_min_entropy(h: float, fs: FiniteSizeParams) -> float:
    """Smooth min-entropy of an ``n``-pulse block, ``n (h - c sqrt(L/n) - d L/n)``, floored at 0.

    Parameters
    ----------
    h : float
        Certified entropy per pulse in bits, in [0, 1].
    fs : FiniteSizeParams

    Returns
    -------
    float
        Total bits for the block.
    """
    if not 0.0 <= h <= 1.0:
        raise ValueError(f"h must be in [0, 1], got {h}")
    return max(0.0, fs.n * (h - finite_size_penalty(fs)))


def hoeffding_slack(n_x: int, epsilon: float) -> float:
    """Half-width of a two-sided Hoeffding interval on one conditional frequency.

    Failure probability ``epsilon / 2`` per input, so the box over both inputs
    holds except with probability ``epsilon``.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must be in (0, 1), got {epsilon}")
    if n_x <= 0:
        return 1.0
    return min(1.0, math.sqrt(math.log(4.0 / epsilon) / (2.0 * n_x)))


def input_min_entropy(p_x1: float, measure: str = "min") -> float:
    """Entropy spent on the input choice, ``-log2 max(p, 1-p)`` or the Shannon value."""
    if not 0.0 < p_x1 < 1.0:
        raise ValueError(f"p_x1 must be in (0, 1), got {p_x1}")
    if measure == "min":
        return -math.log2(max(p_x1, 1.0 - p_x1))
    if measure == "shannon":
        return float(binary_entropy(p_x1))
    raise ValueError(f"measure must be 'min' or 'shannon', got {measure!r}")


def net_entropy(p_x1: float, h_out: float, measure: str = "min") -> float:
    """Output entropy minus the entropy consumed by the input choice (bits per pulse)."""
    return h_out - input_min_entropy(p_x1, measure)


@dataclass(frozen=True)
class CurvePoint:
    value: float
    h: float
    h_min_per_pulse: float
    probs: tuple[float, float] = (math.nan, math.nan)
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def entropy_curve(values, *, variable: str = "mu", mu: float = 1e-2, p_x1: float = 0.16,
                  electronic_noise_variance: float, block_seconds: float,
                  f_rep: float = 12.5e6, epsilon: float, epsilon_prime: float | None = None,
                  c: float, d: float, omega_factor: float = 1.0,
                  energy_convention: str = "sum", statistical_slack: bool = True
                  ) -> list[CurvePoint]:
    """Per-pulse finite-size min-entropy along a sweep of ``mu`` or ``p_x1``.

    For every sweep value the analytic correlations at the balanced threshold
    are certified with energy bound ``omega_factor`` times the source energy.
    With ``statistical_slack`` the statistics are widened by the Hoeffding
    interval a block of ``block_seconds`` would have.  Failing points are
    flagged and the sweep continues.
    """
    values = list(values)
    if not values:
        raise ValueError("sweep must not be empty")
    if variable not in ("mu", "p_x1"):
        raise ValueError(f"variable must be 'mu' or 'p_x1', got {variable!r}")
    n = max(1, int(round(block_seconds * f_rep)))
    fs = FiniteSizeParams(n, epsilon, epsilon_prime or epsilon, c, d)
    out = []
    for v in values:
        m, p = (float(v), p_x1) if variable == "mu" else (mu, float(v))
        try:
            p10, p11, _ = balanced_probs(m, electronic_noise_variance)
            omega = omega_factor * energy_estimate(m, p, energy_convention)
            slack = (0.0, 0.0)
            if statistical_slack:
                slack = (hoeffding_slack(int(n * (1.0 - p)), epsilon),
                         hoeffding_slack(int(n * p), epsilon))
            res = certify_entropy(CertInput(CondProbs(p10, p11), omega, p,
                                            energy_convention, slack))
            out.append(CurvePoint(float(v), res.h, finite_size_min_entropy(res.h, fs) / n,
                                  (p10, p11)))
        except (QRNGError, ValueError) as exc:
            out.append(CurvePoint(float(v), math.nan, math.nan, error=str(exc)))
    return out
