"""End-to-end run: simulate, tune, certify, check energy, extract."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

from .acquisition import Block, CondProbs, estimate_cond_probs, run_block
from .certify.attack import best_attack
from .certify.bound import CertInput, certify_entropy
from .certify.finite_size import FiniteSizeParams, finite_size_min_entropy, hoeffding_slack
from .config import PipelineConfig
from .control import PhaseController, ThresholdTuner, phase_feedback_step, tune_threshold
from .energy import EnergyLog, EnergyReading, mean_photon_bound, monitor, power_for_mean_photon
from .errors import QRNGError
from .extract import ExtractorSpec, load_seed, output_length, pack_bits, toeplitz_fast
from .photonics import DriftParams, DriftState, HomodyneConfig, noise_variance_for_flip_probability

log = logging.getLogger(__name__)

EXTRACTOR_SEED_KEY = 0x5EED


@dataclass
class BlockRecord:
    block_id: int
    t_start: float
    duration: float
    n_simulated: int
    n_target: int
    counts: tuple
    p1_given_0: float
    p1_given_1: float
    threshold: float
    actuator_phase: float
    h: float
    h_min_per_pulse: float
    above_threshold: bool
    valid: bool
    m: int
    m_extracted: int = 0
    method: str = ""
    attack_gap: float | None = None
    error: str | None = None


@dataclass
class RunReport:
    blocks: list[BlockRecord]
    entropy_threshold: float
    omega: float
    f_rep: float
    extractor_seed_digest: str | None = None
    config: dict = field(default_factory=dict)

    @property
    def aggregate_bits(self) -> int:
        return sum(b.m for b in self.blocks if b.valid)

    @property
    def valid_duration(self) -> float:
        return sum(b.duration for b in self.blocks if b.valid)

    @property
    def rate(self) -> float:
        """Certified bits per second over valid blocks."""
        dur = self.valid_duration
        return self.aggregate_bits / dur if dur > 0 else 0.0

    @property
    def fraction_above_threshold(self) -> float:
        if not self.blocks:
            return 0.0
        return sum(b.above_threshold for b in self.blocks) / len(self.blocks)

    @property
    def extracted_bits(self) -> int:
        return sum(b.m_extracted for b in self.blocks if b.valid)

    def to_dict(self) -> dict:
        return {
            "aggregate_certified_bits": self.aggregate_bits,
            "certified_rate_bps": self.rate,
            "valid_duration_s": self.valid_duration,
            "fraction_above_threshold": self.fraction_above_threshold,
            "entropy_threshold": self.entropy_threshold,
            "omega": self.omega,
            "extracted_bits": self.extracted_bits,
            "extractor_seed_digest": self.extractor_seed_digest,
            "blocks": [dataclasses.asdict(b) for b in self.blocks],
            "config": self.config,
        }

    def blocks_csv(self) -> str:
        cols = ["block_id", "t_start", "duration", "n_simulated", "n_target", "p1_given_0",
                "p1_given_1", "threshold", "actuator_phase", "h", "h_min_per_pulse",
                "above_threshold", "valid", "m", "m_extracted"]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for b in self.blocks:
            row = [getattr(b, c) for c in cols]
            w.writerow([int(v) if isinstance(v, bool) else (repr(v) if isinstance(v, float) else v)
                        for v in row])
        return buf.getvalue()


def emit_report(report: RunReport, path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")


def resolve_noise_variance(cfg: PipelineConfig) -> float:
    n = cfg.noise
    if n.electronic_noise_variance is not None:
        return n.electronic_noise_variance
    return noise_variance_for_flip_probability(n.flip_probability, cfg.source.mu, cfg.source.p_x1)


def _block_rng(seed: int, block_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block_id,)))


def _fitted_prob_model(probs: CondProbs, tau: float, sd: float):
    """Gaussian model of both conditionals fitted to one block's frequencies."""
    q = np.clip([probs.p1_given_0, probs.p1_given_1], 1e-12, 1 - 1e-12)
    means = tau + sd * special.ndtri(q)

    def model(t):
        return (float(special.ndtr((means[0] - t) / sd)), float(special.ndtr((means[1] - t) / sd)))

    return model


def _nominal_prob_model(cfg: PipelineConfig, sd: float):
    m1 = 2.0 * math.sqrt(cfg.source.mu) * math.cos(cfg.noise.lo_phase)

    def model(t):
        return (float(special.ndtr(-t / sd)), float(special.ndtr((m1 - t) / sd)))

    return model


def _scaled_drift(params: DriftParams, k: float) -> DriftParams:
    return DriftParams(params.phase_diffusion * k, params.polarization_floor,
                       params.polarization_rate * k)


def extractor_seed(cfg: PipelineConfig, nbits: int) -> np.ndarray:
    """Seed bits from the configured file, or a reproducible stand-in derived from the run seed."""
    if cfg.extraction.seed_file:
        return load_seed(cfg.extraction.seed_file, nbits)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(EXTRACTOR_SEED_KEY,)))
    return rng.integers(0, 2, nbits, dtype=np.uint8)


def _energy_readings(cfg: PipelineConfig, t0: float, t1: float):
    src, en = cfg.source, cfg.energy
    w = en.window_seconds
    base = power_for_mean_photon(src.mu, en.eta, src.delta_t, src.nu_min, src.f_rep,
                                 src.background_power_ratio)
    k = math.ceil(t0 / w - 1e-9)
    while k * w < t1 - 1e-9:
        t = k * w
        factor = 1.0
        for inj in en.injected:
            if t <= inj.t_seconds < t + w:
                factor *= inj.factor
        if base > 0:
            mu_bar = mean_photon_bound(EnergyReading(base * factor, en.eta, src.delta_t,
                                                     src.nu_min, src.f_rep, t, w))
        else:
            mu_bar = 0.0
        yield (t, mu_bar)
        k += 1


def run_pipeline(cfg: PipelineConfig, out_dir=None, *, extract: bool = True
                 ) -> tuple[RunReport, EnergyLog, np.ndarray]:
    """Run all blocks of ``cfg`` and optionally write the outputs to ``out_dir``.

    With ``extract=False`` the certified lengths are still committed but no
    hashing is done and the returned bit array is empty.

    Returns the report, the energy log and the extracted bits.
    """
    src, run, cert, fsc = cfg.source, cfg.run, cfg.certification, cfg.finite_size
    var = resolve_noise_variance(cfg)
    hd = HomodyneConfig(lo_phase=cfg.noise.lo_phase, electronic_noise_variance=var)
    sd = hd.total_std
    tuner = ThresholdTuner(cfg.control.threshold_tolerance, cfg.control.search_bounds,
                           cfg.control.max_iterations)
    # initial calibration on the nominal model; calibration pulses are not part of any block
    hd = hd.with_threshold(tune_threshold(tuner, _nominal_prob_model(cfg, sd)).threshold)
    ctrl = PhaseController(step_size=cfg.control.step_size, min_step=cfg.control.min_step,
                           max_step=cfg.control.max_step)

    k = run.time_compression
    drift_params = _scaled_drift(cfg.drift.params(), k)
    n_blocks = int(math.floor(run.total_seconds / run.block_seconds + 1e-9))
    n_target = int(round(run.block_seconds * src.f_rep))
    sim_seconds = run.block_seconds / k
    fs = FiniteSizeParams(n_target, fsc.epsilon, fsc.epsilon_prime, fsc.c, fsc.d)
    thr = cfg.extraction.entropy_threshold
    m_commit = output_length(n_target * thr, cfg.extraction.epsilon_ext)

    drift = DriftState(phase_offset=cfg.drift.initial_phase_offset)
    energy_log = EnergyLog(cert.omega if cert.omega > 0 else 1e-300)
    blocks: list[Block] = []
    records: list[BlockRecord] = []
    for bid in range(n_blocks):
        t_start = bid * run.block_seconds
        block = run_block(src, hd, drift, sim_seconds, _block_rng(cfg.seed, bid),
                          drift_params=drift_params, actuator_phase=ctrl.actuator_phase,
                          chunk_size=run.chunk_size, drift_step_pulses=cfg.drift.step_pulses,
                          start_time=t_start, energy_convention=cert.energy_convention,
                          block_id=bid)
        drift = dataclasses.replace(block.final_drift, time=t_start + run.block_seconds)
        block.start_time, block.duration = t_start, run.block_seconds
        blocks.append(block)
        rec = _certify_block(cfg, block, hd, ctrl, fs, n_target, thr, m_commit)
        monitor(_energy_readings(cfg, t_start, t_start + run.block_seconds), energy_log.omega,
                [block], energy_log, cfg.energy.window_seconds)
        rec.valid = rec.valid and block.valid
        if not block.valid:
            rec.m = 0
        records.append(rec)
        if not extract:
            # raw bits are only needed for hashing; long sessions would otherwise hold them all
            block.inputs = block.outputs = np.zeros(0, dtype=np.uint8)

        if rec.error is None:
            probs = CondProbs(rec.p1_given_0, rec.p1_given_1)
            if cfg.control.retune_threshold:
                try:
                    res = tune_threshold(tuner, _fitted_prob_model(probs, hd.threshold, sd))
                    hd = hd.with_threshold(res.threshold)
                except QRNGError as exc:
                    log.warning("block %d: threshold retune failed: %s", bid, exc)
        if cfg.control.phase_feedback:
            ctrl = phase_feedback_step(ctrl, rec.h)

    # every block was already monitored; a final pass covers windows logged after
    # a block was certified (idempotent)
    monitor([], energy_log.omega, blocks, energy_log, cfg.energy.window_seconds)
    for rec, block in zip(records, blocks):
        if not block.valid:
            rec.valid, rec.m = False, 0

    if extract:
        bits, digest = _extract_all(cfg, blocks, records, n_target)
    else:
        bits, digest = np.zeros(0, dtype=np.uint8), None
    report = RunReport(records, thr, cert.omega, src.f_rep, digest, cfg.to_dict())
    if out_dir is not None:
        write_outputs(cfg, report, energy_log, bits, out_dir)
    return report, energy_log, bits


def _certify_block(cfg, block: Block, hd: HomodyneConfig, ctrl: PhaseController,
                   fs: FiniteSizeParams, n_target: int, thr: float, m_commit: int) -> BlockRecord:
    cert = cfg.certification
    base = dict(block_id=block.block_id, t_start=block.start_time, duration=block.duration,
                n_simulated=block.n, n_target=n_target, counts=block.tally.counts,
                threshold=hd.threshold, actuator_phase=ctrl.actuator_phase)
    try:
        probs = estimate_cond_probs(block.tally)
        slack = (0.0, 0.0)
        if cert.statistical_slack:
            scale = n_target / block.n
            slack = (hoeffding_slack(int(probs.n0 * scale), fs.epsilon),
                     hoeffding_slack(int(probs.n1 * scale), fs.epsilon))
        inp = CertInput(probs, cert.omega, cfg.source.p_x1, cert.energy_convention, slack)
        res = certify_entropy(inp)
        gap = None
        if cert.attack_check:
            h_att, _ = best_attack(inp, cert.d_t, cert.attack_budget,
                                   _block_rng(cfg.seed + 1, block.block_id),
                                   tolerance=cert.attack_tolerance)
            gap = None if math.isinf(h_att) else h_att - res.h
        h_min = finite_size_min_entropy(res.h, fs) / n_target
        above = h_min > thr
        return BlockRecord(**base, p1_given_0=probs.p1_given_0, p1_given_1=probs.p1_given_1,
                           h=res.h, h_min_per_pulse=h_min, above_threshold=above, valid=True,
                           m=m_commit if above else 0, method=res.method, attack_gap=gap)
    except QRNGError as exc:
        block.invalidate()
        nan = float("nan")
        return BlockRecord(**base, p1_given_0=nan, p1_given_1=nan, h=0.0, h_min_per_pulse=0.0,
                           above_threshold=False, valid=False, m=0, error=str(exc))


def _extract_all(cfg, blocks, records, n_target):
    jobs = []
    for block, rec in zip(blocks, records):
        if rec.valid and rec.m > 0:
            # scaled-down blocks extract proportionally fewer bits
            m_ext = min(block.n, int(rec.m * block.n // n_target))
            rec.m_extracted = m_ext
            if m_ext > 0:
                jobs.append((block, m_ext))
    if not jobs:
        return np.zeros(0, dtype=np.uint8), None
    n_max = max(b.n + m - 1 for b, m in jobs)
    seed = extractor_seed(cfg, n_max)
    digest = hashlib.sha256(pack_bits(seed)).hexdigest()

    def work(job):
        block, m_ext = job
        spec = ExtractorSpec(block.n, m_ext, seed[:block.n + m_ext - 1], cfg.extraction.epsilon_ext)
        return toeplitz_fast(spec, block.outputs)

    with ThreadPoolExecutor(max_workers=cfg.run.workers) as pool:
        outs = list(pool.map(work, jobs))
    return np.concatenate(outs), digest


def write_outputs(cfg: PipelineConfig, report: RunReport, energy_log: EnergyLog,
                  bits: np.ndarray, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    o = cfg.output
    paths = {"bits": out / o.bits_file, "report": out / o.report_file,
             "blocks": out / o.blocks_csv, "energy": out / o.energy_csv,
             "sidecar": out / (o.bits_file + ".json")}
    paths["bits"].write_bytes(pack_bits(bits))
    emit_report(report, paths["report"])
    paths["blocks"].write_text(report.blocks_csv())
    paths["energy"].write_text(energy_log.to_csv())
    sidecar = {
        "block_ids": [r.block_id for r in report.blocks if r.valid and r.m_extracted > 0],
        "m_per_block": [r.m_extracted for r in report.blocks if r.valid and r.m_extracted > 0],
        "seed_digest": report.extractor_seed_digest,
        "epsilon_ext": cfg.extraction.epsilon_ext,
        "bit_order": "lsb-first",
        "n_bits": int(len(bits)),
        "certification_report": o.report_file,
    }
    paths["sidecar"].write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return paths
