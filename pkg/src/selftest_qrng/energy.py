"""Trusted-side energy accounting: power-meter bound and window monitoring."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

from .acquisition import Block
from .errors import InvariantViolation

PLANCK = 6.62607015e-34  # J s, exact SI value


@dataclass(frozen=True)
class EnergyReading:
    """One power-meter window.

    ``eta`` is the operator-supplied monitor-to-output ratio, used as is.
    """

    p_in: float
    eta: float
    delta_t: float
    nu_min: float
    f_rep: float
    t_seconds: float = 0.0
    window: float = 1.0

    def __post_init__(self):
        for name in ("p_in", "eta", "delta_t", "nu_min", "f_rep", "window"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise InvariantViolation(f"{name} must be finite and > 0, got {v}")


def mean_photon_bound(r: EnergyReading) -> float:
    """``mu_bar = P_in eta dt / (h nu_min f_rep)``."""
    return (r.p_in * r.eta * r.delta_t) / (PLANCK * r.nu_min * r.f_rep)


def power_for_mean_photon(mu: float, eta: float, delta_t: float, nu_min: float,
                          f_rep: float, background_power_ratio: float = 0.0) -> float:
    """Monitor power that a source of mean photon number ``mu`` would show.

    Leakage from unseeded modes adds ``background_power_ratio`` times the
    seeded power, which makes the resulting bound conservative.
    """
    seeded = mu * PLANCK * nu_min * f_rep / (eta * delta_t)
    return seeded * (1.0 + background_power_ratio)


@dataclass
class EnergyLog:
    """Windowed ``mu_bar`` series with the violation record.

    Entries are ``(t_seconds, window, mu_bar)``; ``violations`` lists the
    start times of windows with ``mu_bar > omega``.
    """

    omega: float
    entries: list[tuple[float, float, float]] = field(default_factory=list)

    def __post_init__(self):
        if not self.omega > 0:
            raise InvariantViolation(f"omega must be > 0, got {self.omega}")

    @property
    def violations(self) -> list[float]:
        return [t for t, _, mu in self.entries if mu > self.omega]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t_seconds", "mu_bar", "omega", "violated"])
        for t, _, mu in self.entries:
            w.writerow([repr(t), repr(mu), repr(self.omega), int(mu > self.omega)])
        return buf.getvalue()


def _overlaps(block: Block, t0: float, t1: float) -> bool:
    return block.start_time < t1 and t0 < block.end_time


def monitor(readings, omega: float, blocks: list[Block] | None = None,
            log: EnergyLog | None = None, window: float = 1.0) -> EnergyLog:
    """Log ``mu_bar`` per window and invalidate blocks overlapping a violation.

    ``readings`` holds :class:`EnergyReading` objects or ``(t_seconds, mu_bar)``
    pairs, the latter for simulated windows of length ``window``.  A window
    violates the bound only when ``mu_bar > omega``.  Windows already present
    in ``log`` (same start time) are not added twice, so re-running is a no-op.
    """
    log = EnergyLog(omega) if log is None else log
    if log.omega != omega:
        raise ValueError("log was recorded against a different omega")
    seen = {t for t, _, _ in log.entries}
    for r in readings:
        if isinstance(r, EnergyReading):
            t, win, mu = r.t_seconds, r.window, mean_photon_bound(r)
        else:
            t, mu = float(r[0]), float(r[1])
            win = window
        if t not in seen:
            log.entries.append((t, win, mu))
            seen.add(t)
    for t, win, mu in log.entries:
        if mu > omega:
            for b in blocks or ():
                if _overlaps(b, t, t + win):
                    b.invalidate()
    return log
