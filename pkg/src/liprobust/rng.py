"""PCG32 random number generator with Box-Muller Gaussian sampling.

The generator follows the reference ``pcg32_random_r`` (XSH-RR output on a
64-bit LCG state).  Draws are produced in vectorised blocks by jumping the
LCG ahead with precomputed multiplier/increment tables, so the stream is
bit-identical to the scalar reference while staying fast enough to fill
million-entry matrices.
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
PCG_MULT = 6364136223846793005
DEFAULT_STREAM = 54
_BLOCK = 1 << 16

_tables: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _jump_tables(inc: int) -> tuple[np.ndarray, np.ndarray]:
    # A[k] = a^k, C[k] = c * (a^(k-1) + ... + 1), both mod 2^64, for k in [0, _BLOCK]
    if inc in _tables:
        return _tables[inc]
    mult = np.zeros(_BLOCK + 1, dtype=np.uint64)
    incr = np.zeros(_BLOCK + 1, dtype=np.uint64)
    mult[0], incr[0] = 1, 0
    a_h, c_h = PCG_MULT, inc  # jump of length h (starts at h = 1)
    h = 1
    while h <= _BLOCK:
        end = min(2 * h, _BLOCK + 1)
        k = end - h
        mult[h:end] = mult[:k] * np.uint64(a_h)
        incr[h:end] = mult[:k] * np.uint64(c_h) + incr[:k]
        c_h = (a_h * c_h + c_h) & MASK64
        a_h = (a_h * a_h) & MASK64
        h *= 2
    _tables[inc] = (mult, incr)
    return mult, incr


def _output(old: np.ndarray) -> np.ndarray:
    xorshifted = (((old >> np.uint64(18)) ^ old) >> np.uint64(27)).astype(np.uint32)
    rot = (old >> np.uint64(59)).astype(np.uint32)
    return (xorshifted >> rot) | (xorshifted << ((np.uint32(32) - rot) & np.uint32(31)))


class Rng:
    """Seeded PCG32 stream.

    Parameters
    ----------
    seed : int
        Initial state seed; reduced modulo 2**64.
    stream : int
        Stream selector (the LCG increment is ``2 * stream + 1``).
    """

    def __init__(self, seed: int = 0, stream: int = DEFAULT_STREAM):
        self.seed = int(seed)
        self.stream = int(stream)
        self.inc = ((self.stream << 1) | 1) & MASK64
        self.state = 0
        self._advance(1)
        self.state = (self.state + (self.seed & MASK64)) & MASK64
        self._advance(1)

    def __repr__(self):
        return f"Rng(seed={self.seed}, stream={self.stream})"

    def _advance(self, k: int) -> None:
        self.state = (self.state * PCG_MULT + self.inc) & MASK64 if k == 1 else self._jump(k)

    def _jump(self, k: int) -> int:
        a, c = 1, 0
        step_a, step_c = PCG_MULT, self.inc
        while k:
            if k & 1:
                a, c = (a * step_a) & MASK64, (c * step_a + step_c) & MASK64
            step_c = (step_a * step_c + step_c) & MASK64
            step_a = (step_a * step_a) & MASK64
            k >>= 1
        return (a * self.state + c) & MASK64

    def next_uint32(self) -> int:
        """Scalar reference step; identical to one element of :meth:`uint32`."""
        old = self.state
        self.state = (old * PCG_MULT + self.inc) & MASK64
        xorshifted = (((old >> 18) ^ old) >> 27) & 0xFFFFFFFF
        rot = old >> 59
        return ((xorshifted >> rot) | (xorshifted << ((-rot) & 31))) & 0xFFFFFFFF

    def uint32(self, count: int) -> np.ndarray:
        """Return the next ``count`` raw 32-bit outputs."""
        count = int(count)
        out = np.empty(count, dtype=np.uint32)
        mult, incr = _jump_tables(self.inc)
        pos = 0
        while pos < count:
            k = min(_BLOCK, count - pos)
            old = mult[:k] * np.uint64(self.state) + incr[:k]
            out[pos:pos + k] = _output(old)
            self.state = (int(mult[k]) * self.state + int(incr[k])) & MASK64
            pos += k
        return out

    def uniform(self, size=None) -> np.ndarray | float:
        """Uniform doubles in [0, 1) with 53 random bits each."""
        shape = () if size is None else size
        n = int(np.prod(shape, dtype=np.int64))
        raw = self.uint32(2 * n).astype(np.uint64)
        hi = raw[0::2] >> np.uint64(5)
        lo = raw[1::2] >> np.uint64(6)
        u = (hi * np.float64(67108864.0) + lo) / np.float64(9007199254740992.0)
        return float(u[0]) if size is None else u.reshape(shape)

    def normal(self, size=None, std: float = 1.0) -> np.ndarray | float:
        """Gaussian draws via the Box-Muller transform (pairs interleaved)."""
        shape = () if size is None else size
        n = int(np.prod(shape, dtype=np.int64))
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs)
        radius = np.sqrt(-2.0 * np.log1p(-u[0::2]))
        angle = 2.0 * math.pi * u[1::2]
        z = np.empty(2 * pairs)
        z[0::2] = radius * np.cos(angle)
        z[1::2] = radius * np.sin(angle)
        z = z[:n] * std
        return float(z[0]) if size is None else z.reshape(shape)

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self.uniform(int(n)), kind="stable")

    def split(self, index: int) -> "Rng":
        """Independent child stream for trial ``index``: seed + index on a fresh stream."""
        return Rng(self.seed + int(index), stream=self.stream + 1 + int(index))


def as_rng(rng: Rng | int | None) -> Rng:
    if isinstance(rng, Rng):
        return rng
    return Rng(0 if rng is None else int(rng))
