"""Input generation, threshold discrimination and conditional statistics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputNeverSentError, InvariantViolation
from .photonics import (DriftParams, DriftState, HomodyneConfig, QuadratureSample,
                        SourceConfig, step_drift)

DEFAULT_CHUNK = 2 ** 16


@dataclass(frozen=True)
class Tally:
    """Counts ``n[b][x]`` of output ``b`` given input ``x``."""

    counts: tuple[tuple[int, int], tuple[int, int]] = ((0, 0), (0, 0))

    def __post_init__(self):
        flat = [c for row in self.counts for c in row]
        if len(self.counts) != 2 or any(len(r) != 2 for r in self.counts):
            raise InvariantViolation("counts must be a 2x2 table n[b][x]")
        if any(c < 0 for c in flat):
            raise InvariantViolation("counts must be non-negative")

    @classmethod
    def from_array(cls, arr) -> "Tally":
        a = np.asarray(arr, dtype=np.int64)
        return cls(((int(a[0, 0]), int(a[0, 1])), (int(a[1, 0]), int(a[1, 1]))))

    @classmethod
    def from_sequences(cls, inputs, outputs) -> "Tally":
        x = np.asarray(inputs, dtype=np.int64)
        b = np.asarray(outputs, dtype=np.int64)
        if x.shape != b.shape:
            raise ValueError("inputs and outputs must have equal length")
        flat = np.bincount(2 * b + x, minlength=4)
        return cls.from_array(flat.reshape(2, 2))

    def as_array(self) -> np.ndarray:
        return np.array(self.counts, dtype=np.int64)

    @property
    def n_total(self) -> int:
        return sum(c for row in self.counts for c in row)

    def n_input(self, x: int) -> int:
        return self.counts[0][x] + self.counts[1][x]

    def __add__(self, other: "Tally") -> "Tally":
        return Tally.from_array(self.as_array() + other.as_array())


@dataclass(frozen=True)
class CondProbs:
    """Observed ``p(1|0)`` and ``p(1|1)`` with per-input sample sizes."""

    p1_given_0: float
    p1_given_1: float
    n0: int = 1
    n1: int = 1

    def __post_init__(self):
        for name in ("p1_given_0", "p1_given_1"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvariantViolation(f"{name} must be in [0, 1], got {v}")
        if self.n0 < 0 or self.n1 < 0 or self.n0 + self.n1 < 1:
            raise InvariantViolation("sample sizes must be >= 0 with n0 + n1 >= 1")

    def as_tuple(self) -> tuple[float, float]:
        return (self.p1_given_0, self.p1_given_1)


@dataclass
class Block:
    """One timed acquisition unit.

    ``valid`` can only be cleared (see :meth:`invalidate`), never set again.
    """

    inputs: np.ndarray
    outputs: np.ndarray
    tally: Tally
    duration: float
    start_time: float
    energy_estimate: float
    block_id: int = 0
    final_drift: DriftState | None = None
    _valid: bool = field(default=True, repr=False)

    def __post_init__(self):
        if len(self.inputs) != len(self.outputs):
            raise InvariantViolation("inputs and outputs must have equal length")

    @property
    def n(self) -> int:
        return len(self.inputs)

    @property
    def valid(self) -> bool:
        return self._valid

    @property
    def end_time(self) -> float:
        return self.start_time + self.duration

    def invalidate(self) -> None:
        self._valid = False

    def recompute_tally(self) -> Tally:
        return Tally.from_sequences(self.inputs, self.outputs)


def gen_input(rng: np.random.Generator, p_x1: float) -> int:
    if not 0.0 <= p_x1 <= 1.0:
        raise ValueError(f"p_x1 must be in [0, 1], got {p_x1}")
    return int(rng.random() < p_x1)


def discriminate(sample, threshold: float) -> int:
    """1 iff the sample lies strictly above the threshold."""
    value = sample.value if isinstance(sample, QuadratureSample) else sample
    return int(value > threshold)


def accumulate(tally: Tally, x: int, b: int) -> Tally:
    arr = tally.as_array()
    arr[int(b), int(x)] += 1
    return Tally.from_array(arr)


def estimate_cond_probs(tally: Tally) -> CondProbs:
    """Empirical ``p(1|x) = n[1][x] / (n[0][x] + n[1][x])`` for both inputs."""
    n0, n1 = tally.n_input(0), tally.n_input(1)
    if n0 == 0:
        raise InputNeverSentError("input x=0 never sent; p(b|0) undefined")
    if n1 == 0:
        raise InputNeverSentError("input x=1 never sent; p(b|1) undefined")
    return CondProbs(tally.counts[1][0] / n0, tally.counts[1][1] / n1, n0, n1)


def block_length(duration: float, f_rep: float) -> int:
    return int(round(duration * f_rep))


def energy_estimate(mu: float, input_freq: float, convention: str = "sum") -> float:
    """Source energy per the chosen convention: sum over inputs, or p(x)-average."""
    if convention == "sum":
        return mu
    if convention == "average":
        return mu * input_freq
    raise ValueError(f"unknown energy convention {convention!r}")


def run_block(src: SourceConfig, hd: HomodyneConfig, drift: DriftState, duration: float,
              rng: np.random.Generator, *, drift_params: DriftParams | None = None,
              actuator_phase: float = 0.0, chunk_size: int = DEFAULT_CHUNK,
              drift_step_pulses: int = DEFAULT_CHUNK, start_time: float | None = None,
              energy_convention: str = "sum", block_id: int = 0) -> Block:
    """Simulate ``round(duration * f_rep)`` pulses through source, detector and discriminator.

    The drift is held constant over segments of ``drift_step_pulses`` pulses
    and stepped between them, so ``chunk_size`` only sets the processing
    batch and does not change any sample.  Inputs, quadrature noise and drift
    use three independent streams spawned from ``rng``.
    """
    if not duration > 0:
        raise ValueError(f"duration must be > 0, got {duration}")
    if chunk_size < 1 or drift_step_pulses < 1:
        raise ValueError("chunk_size and drift_step_pulses must be >= 1")
    params = drift_params or DriftParams()
    n = block_length(duration, src.f_rep)
    x_rng, q_rng, d_rng = rng.spawn(3)
    inputs = np.empty(n, dtype=np.uint8)
    outputs = np.empty(n, dtype=np.uint8)
    sd = hd.total_std
    t0 = drift.time if start_time is None else start_time
    seg_dt = drift_step_pulses / src.f_rep

    state = drift
    seg_index = 0
    seg_end = drift_step_pulses
    pos = 0
    while pos < n:
        stop = min(n, pos + chunk_size)
        k = stop - pos
        x = x_rng.random(k) < src.p_x1
        noise = q_rng.standard_normal(k)
        mean = np.empty(k)
        i = pos
        while i < stop:
            while i >= seg_end:
                if not params.is_static:
                    state = step_drift(state, seg_dt, params, d_rng)
                seg_index += 1
                seg_end += drift_step_pulses
            j = min(stop, seg_end)
            m1 = 2.0 * math.sqrt(src.mu * state.polarization_loss) * math.cos(
                hd.lo_phase + state.phase_offset + actuator_phase)
            mean[i - pos:j - pos] = m1
            i = j
        q = np.where(x, mean, 0.0) + sd * noise
        inputs[pos:stop] = x
        outputs[pos:stop] = q > hd.threshold
        pos = stop
    # advance through the final (possibly partial) segment
    remaining = n - (seg_end - drift_step_pulses)
    if remaining > 0 and not params.is_static:
        state = step_drift(state, remaining / src.f_rep, params, d_rng)
    final = DriftState(state.phase_offset, state.polarization_loss, t0 + n / src.f_rep)

    tally = Tally.from_sequences(inputs, outputs)
    freq1 = tally.n_input(1) / n if n else 0.0
    return Block(inputs=inputs, outputs=outputs, tally=tally, duration=float(duration),
                 start_time=float(t0),
                 energy_estimate=energy_estimate(src.mu, freq1, energy_convention),
                 block_id=block_id, final_drift=final)


def pack_raw_pulses(inputs, outputs) -> bytes:
    """Pack (x, b) pairs: 2 bits per pulse, x in the lower bit, LSB-first in each byte."""
    x = np.asarray(inputs, dtype=np.uint8) & 1
    b = np.asarray(outputs, dtype=np.uint8) & 1
    codes = x | (b << 1)
    pad = (-len(codes)) % 4
    codes = np.concatenate([codes, np.zeros(pad, dtype=np.uint8)]).reshape(-1, 4)
    packed = codes[:, 0] | (codes[:, 1] << 2) | (codes[:, 2] << 4) | (codes[:, 3] << 6)
    return packed.astype(np.uint8).tobytes()


def unpack_raw_pulses(data: bytes, n: int) -> tuple[np.ndarray, np.ndarray]:
    arr = np.frombuffer(data, dtype=np.uint8)
    codes = np.stack([(arr >> s) & 3 for s in (0, 2, 4, 6)], axis=1).reshape(-1)[:n]
    return (codes & 1).astype(np.uint8), ((codes >> 1) & 1).astype(np.uint8)
