"""Data behind the published figures, emitted as CSV text."""
from __future__ import annotations

import csv
import dataclasses
import io

import numpy as np

from .acquisition import energy_estimate
from .certify.finite_size import entropy_curve, input_min_entropy, net_entropy
from .config import PipelineConfig
from .energy import monitor
from .errors import UnknownExperimentError
from .pipeline import _energy_readings, resolve_noise_variance, run_pipeline

EXPERIMENTS = ("fig4", "fig5-stability", "fig6-energy", "fig7-net")


def _csv(header: list[str], rows, comments: list[str] = ()) -> str:
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def fig4_rows(cfg: PipelineConfig, mus=None, block_seconds=range(1, 11)):
    """``(mu, block_seconds, h_per_pulse)`` with the energy bound set to ``mu``."""
    mus = np.logspace(-4, 0, 25) if mus is None else np.asarray(mus, dtype=float)
    var = resolve_noise_variance(cfg)
    fsc = cfg.finite_size
    rows = []
    for sec in block_seconds:
        pts = entropy_curve(mus, variable="mu", p_x1=cfg.source.p_x1,
                            electronic_noise_variance=var, block_seconds=float(sec),
                            f_rep=cfg.source.f_rep, epsilon=fsc.epsilon,
                            epsilon_prime=fsc.epsilon_prime, c=fsc.c, d=fsc.d,
                            energy_convention=cfg.certification.energy_convention,
                            statistical_slack=cfg.certification.statistical_slack)
        rows += [(p.value, float(sec), p.h_min_per_pulse) for p in pts]
    return rows


def fig5_rows(cfg: PipelineConfig, total_seconds: float = 3 * 3600.0,
              block_seconds: float = 10.0, time_compression: float = 100.0):
    """Long drifting session with feedback: ``(t_seconds, h_per_pulse, phase_actuator)``.

    Only the certification side is run; no bits are extracted.
    """
    run = dataclasses.replace(cfg.run, block_seconds=block_seconds, total_seconds=total_seconds,
                              time_compression=time_compression)
    report, _, _ = run_pipeline(cfg.replace(run=run), extract=False)
    return [(b.t_start, b.h_min_per_pulse, b.actuator_phase) for b in report.blocks], report


def fig6_log(cfg: PipelineConfig, total_seconds: float | None = None):
    total = cfg.run.total_seconds if total_seconds is None else total_seconds
    return monitor(_energy_readings(cfg, 0.0, total), cfg.certification.omega,
                   window=cfg.energy.window_seconds)


def fig7_rows(cfg: PipelineConfig, ps=None, measure: str = "min"):
    """``(p_x1, h_out, h_min_in, difference)`` at the configured noise."""
    ps = np.linspace(0.01, 0.5, 50) if ps is None else np.asarray(ps, dtype=float)
    var = resolve_noise_variance(cfg)
    fsc, cert, src = cfg.finite_size, cfg.certification, cfg.source
    rows = []
    for p in ps:
        factor = cert.omega / energy_estimate(src.mu, p, cert.energy_convention)
        pt = entropy_curve([p], variable="p_x1", mu=src.mu, electronic_noise_variance=var,
                           block_seconds=cfg.run.block_seconds, f_rep=src.f_rep,
                           epsilon=fsc.epsilon, epsilon_prime=fsc.epsilon_prime, c=fsc.c,
                           d=fsc.d, omega_factor=factor, energy_convention=cert.energy_convention,
                           statistical_slack=cert.statistical_slack)[0]
        h_in = input_min_entropy(float(p), measure)
        rows.append((float(p), pt.h_min_per_pulse, h_in, net_entropy(float(p), pt.h_min_per_pulse,
                                                                      measure)))
    return rows


def sign_changes(rows) -> list[float]:
    """Sweep values between which the ``difference`` column changes sign."""
    out = []
    for (p0, *_, d0), (p1, *_, d1) in zip(rows, rows[1:]):
        if np.sign(d0) != np.sign(d1):
            out.append(0.5 * (p0 + p1))
    return out


def run_experiment(name: str, cfg: PipelineConfig, **options) -> str:
    """CSV text of one experiment."""
    if name == "fig4":
        rows = fig4_rows(cfg, **options)
        return _csv(["mu", "block_seconds", "h_per_pulse"], rows)
    if name == "fig5-stability":
        k = options.get("time_compression", 100.0)
        rows, report = fig5_rows(cfg, **options)
        return _csv(["t_seconds", "h_per_pulse", "phase_actuator"], rows,
                    [f"time_compression={k!r}",
                     f"fraction_above_threshold={report.fraction_above_threshold!r}"])
    if name == "fig6-energy":
        return fig6_log(cfg, **options).to_csv()
    if name == "fig7-net":
        rows = fig7_rows(cfg, **options)
        changes = sign_changes(rows)
        return _csv(["p_x1", "h_out", "h_min_in", "difference"], rows,
                    [f"sign_changes_near={changes!r}"])
    raise UnknownExperimentError(f"unknown experiment {name!r}; choose from {EXPERIMENTS}")
