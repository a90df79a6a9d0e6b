"""Threshold balancing and phase feedback."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

from .errors import ConvergenceError, InvariantViolation, NoCrossingError

ProbModel = Callable[[float], tuple[float, float]]


@dataclass(frozen=True)
class ThresholdTuner:
    target_balance_tolerance: float = 1e-9
    search_bounds: tuple[float, float] = (-10.0, 10.0)
    max_iterations: int = 200

    def __post_init__(self):
        lo, hi = self.search_bounds
        if not self.target_balance_tolerance > 0:
            raise InvariantViolation("target_balance_tolerance must be > 0")
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise InvariantViolation("search_bounds must be finite and ordered")
        if self.max_iterations < 1:
            raise InvariantViolation("max_iterations must be >= 1")


@dataclass(frozen=True)
class ThresholdResult:
    threshold: float
    balance: float
    iterations: int
    degenerate: bool = False


def _balance(prob_model: ProbModel, tau: float) -> float:
    p10, p11 = prob_model(tau)
    return (1.0 - p10) - p11


def tune_threshold(tuner: ThresholdTuner, prob_model: ProbModel) -> ThresholdResult:
    """Bisect the threshold until ``|p(0|0) - p(1|1)|`` is within tolerance.

    ``prob_model`` maps a threshold to ``(p(1|0), p(1|1))``.  If the balance
    function vanishes across the whole bracket (identical conditionals) the
    midpoint is returned and flagged as degenerate.
    """
    lo, hi = tuner.search_bounds
    tol = tuner.target_balance_tolerance
    f_lo, f_hi = _balance(prob_model, lo), _balance(prob_model, hi)
    mid = 0.5 * (lo + hi)
    f_mid = _balance(prob_model, mid)
    if max(abs(f_lo), abs(f_hi), abs(f_mid)) <= tol:
        return ThresholdResult(mid, f_mid, 0, degenerate=True)
    if abs(f_lo) <= tol:
        return ThresholdResult(lo, f_lo, 0)
    if abs(f_hi) <= tol:
        return ThresholdResult(hi, f_hi, 0)
    if f_lo * f_hi > 0:
        raise NoCrossingError(
            f"balance p(0|0)-p(1|1) has no sign change on [{lo}, {hi}] "
            f"(values {f_lo:.3g}, {f_hi:.3g})")
    for it in range(1, tuner.max_iterations + 1):
        mid = 0.5 * (lo + hi)
        f_mid = _balance(prob_model, mid)
        if abs(f_mid) <= tol:
            return ThresholdResult(mid, f_mid, it)
        if (f_mid < 0) == (f_lo < 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
        if hi - lo <= 4 * math.ulp(max(abs(lo), abs(hi), 1.0)):
            # bracket exhausted at float resolution: discontinuous model
            return ThresholdResult(mid, f_mid, it)
    raise ConvergenceError(
        f"threshold bisection did not reach tolerance {tol} in {tuner.max_iterations} steps")


@dataclass(frozen=True)
class PhaseController:
    """Hill-climbing phase corrector driven by one scalar metric per block."""

    actuator_phase: float = 0.0
    step_size: float = 0.1
    min_step: float = 1e-3
    max_step: float = 0.5
    direction: int = 1
    last_metric: float | None = None
    history: tuple[float, ...] = field(default=())
    history_length: int = 32

    def __post_init__(self):
        if not self.step_size > 0:
            raise InvariantViolation("step_size must be > 0")
        if not 0 < self.min_step <= self.max_step:
            raise InvariantViolation("need 0 < min_step <= max_step")


def phase_feedback_step(ctrl: PhaseController, metric: float) -> PhaseController:
    """One hill-climbing update.

    An improvement (or the first observation) keeps the search direction; a
    worse metric reverses it and halves the step, never below ``min_step``.
    Equal metrics count as no improvement.
    """
    if not math.isfinite(metric):
        raise ValueError(f"metric must be finite, got {metric}")
    history = (ctrl.history + (float(metric),))[-ctrl.history_length:]
    direction, step = ctrl.direction, ctrl.step_size
    if ctrl.last_metric is not None and metric <= ctrl.last_metric:
        direction = -direction
        step = max(ctrl.min_step, 0.5 * step)
    return replace(ctrl, actuator_phase=ctrl.actuator_phase + direction * step,
                   step_size=step, direction=direction, last_metric=float(metric),
                   history=history)
