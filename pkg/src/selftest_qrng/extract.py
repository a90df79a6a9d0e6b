"""Seeded Toeplitz hashing over GF(2).

Matrix convention: ``T[i][j] = seed[i - j + n - 1]`` for an ``m x n`` matrix,
so ``seed[0:n]`` is the first row reversed and ``seed[n:n+m-1]`` continues
the first column.  Then ``(T x)_i`` is entry ``i + n - 1`` of the full
convolution of ``seed`` with ``x``, which the fast path evaluates with FFTs.
"""
from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import fft

from .errors import InvariantViolation

FFT_PIECE = 1 << 20


def output_length(h_min_total: float, epsilon_ext: float) -> int:
    """Leftover-hash output size ``floor(H - 2 log2(1/eps))``, clamped at 0."""
    if h_min_total < 0:
        raise ValueError(f"h_min_total must be >= 0, got {h_min_total}")
    if not 0.0 < epsilon_ext < 1.0:
        raise ValueError(f"epsilon_ext must be in (0, 1), got {epsilon_ext}")
    return max(0, math.floor(h_min_total - 2.0 * math.log2(1.0 / epsilon_ext)))


def _as_bits(bits) -> np.ndarray:
    arr = np.asarray(bits, dtype=np.uint8)
    if arr.ndim != 1:
        raise ValueError("bit strings must be one-dimensional")
    if arr.size and arr.max() > 1:
        raise ValueError("bit strings may only contain 0 and 1")
    return arr


@dataclass(frozen=True, eq=False)
class ExtractorSpec:
    n: int
    m: int
    seed: np.ndarray
    epsilon_ext: float

    def __post_init__(self):
        object.__setattr__(self, "seed", _as_bits(self.seed))
        if not 1 <= self.m <= self.n:
            raise InvariantViolation(f"need 1 <= m <= n, got m={self.m}, n={self.n}")
        if len(self.seed) != self.n + self.m - 1:
            raise InvariantViolation(
                f"seed must have n+m-1 = {self.n + self.m - 1} bits, got {len(self.seed)}")
        if not 0.0 < self.epsilon_ext < 1.0:
            raise InvariantViolation("epsilon_ext must be in (0, 1)")

    @property
    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.n}:{self.m}:".encode())
        h.update(pack_bits(self.seed))
        return h.hexdigest()

    def matrix(self) -> np.ndarray:
        """Dense ``m x n`` Toeplitz matrix (only for small sizes)."""
        i = np.arange(self.m)[:, None]
        j = np.arange(self.n)[None, :]
        return self.seed[i - j + self.n - 1]


@dataclass(frozen=True, eq=False)
class ExtractedBlock:
    bits: np.ndarray
    block_id: int
    spec_digest: str


def toeplitz_dense(spec: ExtractorSpec, x) -> np.ndarray:
    """Reference matrix-vector product over GF(2), bit by bit."""
    x = _as_bits(x)
    if len(x) != spec.n:
        raise ValueError(f"input has {len(x)} bits, extractor expects {spec.n}")
    t = spec.matrix().astype(np.int64)
    return ((t @ x.astype(np.int64)) & 1).astype(np.uint8)


def toeplitz_fast(spec: ExtractorSpec, x, piece: int = FFT_PIECE) -> np.ndarray:
    """FFT evaluation of ``T x`` over GF(2).

    The input is cut into pieces of at most ``piece`` bits, so every partial
    sum is an integer below ``piece`` and rounds exactly from floating point.
    """
    x = _as_bits(x)
    n, m = spec.n, spec.m
    if len(x) != n:
        raise ValueError(f"input has {len(x)} bits, extractor expects {n}")
    seed = spec.seed.astype(np.float64)
    parity = np.zeros(m, dtype=np.uint8)
    for j0 in range(0, n, piece):
        xp = x[j0:j0 + piece].astype(np.float64)
        p = len(xp)
        if not xp.any():
            continue
        lo = n - 1 - (j0 + p - 1)          # seed index for i = 0, j = j0 + p - 1
        seg = seed[lo:lo + m + p - 1]
        size = fft.next_fast_len(len(seg) + p - 1, real=True)
        conv = fft.irfft(fft.rfft(seg, size) * fft.rfft(xp, size), size)
        vals = conv[p - 1:p - 1 + m]
        rounded = np.rint(vals)
        if np.max(np.abs(vals - rounded), initial=0.0) > 0.25:
            raise ArithmeticError("FFT round-off too large for exact parity")
        parity ^= (rounded.astype(np.int64) & 1).astype(np.uint8)
    return parity


def toeplitz_extract(spec: ExtractorSpec, x, block_id: int = 0) -> ExtractedBlock:
    return ExtractedBlock(toeplitz_fast(spec, x), block_id, spec.digest)


def pack_bits(bits) -> bytes:
    """Pack bits into bytes, bit 0 of each byte first (least significant)."""
    return np.packbits(_as_bits(bits), bitorder="little").tobytes()


def unpack_bits(data: bytes, nbits: int) -> np.ndarray:
    arr = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")
    if nbits > len(arr):
        raise ValueError(f"need {nbits} bits, data holds {len(arr)}")
    return arr[:nbits].copy()


def load_seed(path, nbits: int) -> np.ndarray:
    """First ``nbits`` bits of a packed seed file."""
    data = Path(path).read_bytes()
    if 8 * len(data) < nbits:
        raise ValueError(f"seed file {path} holds {8 * len(data)} bits, need {nbits}")
    return unpack_bits(data, nbits)


def measure_throughput(n: int, m: int, rng: np.random.Generator, repeats: int = 1) -> float:
    """Input bits per second of :func:`toeplitz_fast` on random data."""
    spec = ExtractorSpec(n, m, rng.integers(0, 2, n + m - 1, dtype=np.uint8), 0.5)
    x = rng.integers(0, 2, n, dtype=np.uint8)
    start = time.perf_counter()
    for _ in range(repeats):
        toeplitz_fast(spec, x)
    return n * repeats / (time.perf_counter() - start)
