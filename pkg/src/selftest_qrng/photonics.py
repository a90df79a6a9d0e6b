"""Source and homodyne-detector model.

Quadratures are expressed in shot-noise units: the vacuum quadrature has unit
variance and a coherent state of amplitude ``alpha`` is displaced by
``2 |alpha| cos(phi + arg alpha)``.  Electronic noise adds an independent
Gaussian term with variance ``electronic_noise_variance``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import integrate, optimize, special

from .errors import InvariantViolation

SHOT_VARIANCE = 1.0


@dataclass(frozen=True)
class SourceConfig:
    """Operating point of the on-off keyed pulsed source.

    Attributes
    ----------
    mu : float
        Mean photon number of the coherent (x=1) pulse.
    f_rep : float
        Repetition rate in Hz.
    delta_t : float
        Modulation (pulse) duration in seconds.
    nu_min : float
        Lower bound on the optical frequency in Hz.
    p_x1 : float
        Probability of sending x=1.
    background_power_ratio : float
        Power in the unseeded laser modes relative to the seeded mode.
    """

    mu: float = 1e-2
    f_rep: float = 12.5e6
    delta_t: float = 1e-9
    nu_min: float = 193.4e12
    p_x1: float = 0.16
    background_power_ratio: float = 10 ** (-13.47 / 10)

    def __post_init__(self):
        if not self.mu >= 0:
            raise InvariantViolation(f"mu must be >= 0, got {self.mu}")
        if not 0.0 <= self.p_x1 <= 1.0:
            raise InvariantViolation(f"p_x1 must be in [0, 1], got {self.p_x1}")
        if not self.f_rep > 0:
            raise InvariantViolation(f"f_rep must be > 0, got {self.f_rep}")
        if not 0 < self.delta_t <= 1.0 / self.f_rep:
            raise InvariantViolation(
                f"delta_t must satisfy 0 < delta_t <= 1/f_rep, got {self.delta_t}"
            )
        if not self.nu_min > 0:
            raise InvariantViolation(f"nu_min must be > 0, got {self.nu_min}")
        if not self.background_power_ratio >= 0:
            raise InvariantViolation("background_power_ratio must be >= 0")


@dataclass(frozen=True)
class HomodyneConfig:
    """Balanced homodyne detector and discriminator settings."""

    lo_phase: float = 0.0
    electronic_noise_variance: float = 0.0
    threshold: float = 0.0
    shot_variance: float = SHOT_VARIANCE

    def __post_init__(self):
        if self.shot_variance != SHOT_VARIANCE:
            raise InvariantViolation("shot_variance is fixed to 1 (shot-noise units)")
        if not self.electronic_noise_variance >= 0:
            raise InvariantViolation("electronic_noise_variance must be >= 0")
        if math.isnan(self.threshold):
            raise InvariantViolation("threshold must not be NaN")

    @property
    def total_std(self) -> float:
        return math.sqrt(self.shot_variance + self.electronic_noise_variance)

    def with_threshold(self, threshold: float) -> "HomodyneConfig":
        return replace(self, threshold=float(threshold))


@dataclass(frozen=True)
class DriftState:
    """Slowly varying interferometer state."""

    phase_offset: float = 0.0
    polarization_loss: float = 1.0
    time: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.polarization_loss <= 1.0:
            raise InvariantViolation(
                f"polarization_loss must be in [0, 1], got {self.polarization_loss}"
            )


@dataclass(frozen=True)
class DriftParams:
    """Drift dynamics: phase random walk plus polarization relaxation.

    ``phase_diffusion`` is the variance growth rate of the phase (rad^2/s);
    ``polarization_rate`` is the inverse time constant (1/s) with which the
    visibility factor relaxes toward ``polarization_floor``.
    """

    phase_diffusion: float = 0.0
    polarization_floor: float = 1.0
    polarization_rate: float = 0.0

    def __post_init__(self):
        if self.phase_diffusion < 0 or self.polarization_rate < 0:
            raise InvariantViolation("drift rates must be >= 0")
        if not 0.0 <= self.polarization_floor <= 1.0:
            raise InvariantViolation("polarization_floor must be in [0, 1]")

    @property
    def is_static(self) -> bool:
        return self.phase_diffusion == 0 and self.polarization_rate == 0


@dataclass(frozen=True)
class QuadratureSample:
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise InvariantViolation("quadrature sample must be finite")


def pulse_amplitude(src: SourceConfig, x: int, drift: DriftState) -> complex:
    """Coherent amplitude emitted for input ``x`` (vacuum for x=0)."""
    if not x:
        return 0j
    magnitude = math.sqrt(src.mu * drift.polarization_loss)
    return complex(magnitude * math.cos(drift.phase_offset),
                   magnitude * math.sin(drift.phase_offset))


def quadrature_mean(amp, lo_phase: float):
    """Mean homodyne outcome for amplitude(s) ``amp`` at LO phase ``lo_phase``."""
    amp = np.asarray(amp)
    return 2.0 * np.abs(amp) * np.cos(lo_phase + np.angle(amp))


def sample_quadrature(amp, hd: HomodyneConfig, rng: np.random.Generator, size=None):
    """Draw homodyne outcome(s) for amplitude ``amp``.

    With a scalar ``amp`` and ``size=None`` a :class:`QuadratureSample` is
    returned; otherwise an array of floats broadcast against ``amp``.
    """
    mean = quadrature_mean(amp, hd.lo_phase)
    if size is None and mean.ndim == 0:
        return QuadratureSample(float(mean + hd.total_std * rng.standard_normal()))
    shape = mean.shape if size is None else size
    return mean + hd.total_std * rng.standard_normal(shape)


def analytic_click_prob(amp, hd: HomodyneConfig):
    """Probability that the outcome exceeds the threshold (b=1)."""
    mean = quadrature_mean(amp, hd.lo_phase)
    z = (hd.threshold - mean) / hd.total_std
    p = special.ndtr(-z)
    return float(p) if np.ndim(p) == 0 else p


def step_drift(drift: DriftState, dt: float, params: DriftParams,
               rng: np.random.Generator) -> DriftState:
    """Advance the drift state by ``dt`` seconds."""
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    phase = drift.phase_offset
    if params.phase_diffusion > 0:
        phase += math.sqrt(params.phase_diffusion * dt) * rng.standard_normal()
    pol = drift.polarization_loss
    if params.polarization_rate > 0:
        floor = params.polarization_floor
        pol = floor + (pol - floor) * math.exp(-params.polarization_rate * dt)
        pol = min(1.0, max(min(floor, drift.polarization_loss), pol))
    return DriftState(phase_offset=phase, polarization_loss=pol, time=drift.time + dt)


def discrimination_error(mu: float, electronic_noise_variance: float) -> float:
    """``p(1|0) + p(0|1)`` at the error-minimizing (midpoint) threshold."""
    m = 2.0 * math.sqrt(mu)
    sd = math.sqrt(SHOT_VARIANCE + electronic_noise_variance)
    return float(2.0 * special.ndtr(-m / (2.0 * sd)))


def _flip_probability_for_mean(mean: float, tau: float, sigma_e: float) -> float:
    # P(sign(X - tau) != sign(X + N - tau)), X ~ N(mean, 1), N ~ N(0, sigma_e^2)
    if sigma_e == 0:
        return 0.0

    def pdf(u):
        return math.exp(-0.5 * (u - mean) ** 2) / math.sqrt(2 * math.pi)

    lo = integrate.quad(lambda u: pdf(u) * special.ndtr((u - tau) / sigma_e), -np.inf, tau)[0]
    hi = integrate.quad(lambda u: pdf(u) * special.ndtr((tau - u) / sigma_e), tau, np.inf)[0]
    return lo + hi


def flip_probability(mu: float, p_x1: float, electronic_noise_variance: float,
                     threshold: float | None = None) -> float:
    """Probability that electronic noise changes the discriminated bit.

    Averaged over inputs with ``p(x=1) = p_x1``; the threshold defaults to the
    balanced (midpoint) value.
    """
    m1 = 2.0 * math.sqrt(mu)
    tau = m1 / 2.0 if threshold is None else threshold
    sigma_e = math.sqrt(electronic_noise_variance)
    return ((1.0 - p_x1) * _flip_probability_for_mean(0.0, tau, sigma_e)
            + p_x1 * _flip_probability_for_mean(m1, tau, sigma_e))


def noise_variance_for_flip_probability(target: float, mu: float, p_x1: float,
                                        threshold: float | None = None) -> float:
    """Electronic noise variance giving flip probability ``target``."""
    if not 0.0 <= target < 0.5:
        raise ValueError(f"flip probability must be in [0, 0.5), got {target}")
    if target == 0.0:
        return 0.0

    def gap(log_var):
        return flip_probability(mu, p_x1, math.exp(log_var), threshold) - target

    log_var = optimize.brentq(gap, math.log(1e-12), math.log(1e6), xtol=1e-13)
    return math.exp(log_var)


def balanced_probs(mu: float, electronic_noise_variance: float, lo_phase: float = 0.0,
                   visibility: float = 1.0) -> tuple[float, float, float]:
    """Analytic ``(p(1|0), p(1|1), tau)`` at the balanced threshold.

    Both conditionals share the same variance, so ``p(0|0) = p(1|1)`` holds at
    the midpoint of the two means.
    """
    m1 = 2.0 * math.sqrt(mu * visibility) * math.cos(lo_phase)
    tau = 0.5 * m1
    sd = math.sqrt(SHOT_VARIANCE + electronic_noise_variance)
    p10 = float(special.ndtr(-tau / sd))
    p11 = float(special.ndtr((m1 - tau) / sd))
    return p10, p11, tau
