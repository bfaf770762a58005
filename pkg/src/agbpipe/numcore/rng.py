"""Deterministic PRNG: splitmix64-seeded xoshiro256** lanes.

The generator runs a fixed bank of ``LANES`` independent xoshiro256** cores,
each seeded from one splitmix64 chain, and emits their outputs interleaved
lane 0..LANES-1 per step. The lane count is a constant of the stream
definition, so the sequence for a given seed is identical on every platform
and identical regardless of how draws are chunked (a buffer serves partial
requests). Vectorizing the step over lanes keeps bulk fills fast without
native code.

Substreams come from keyed derivation (``child``) or a split counter
(``split``); both are pure functions of the root seed, never of draw order.
"""

from __future__ import annotations

import math

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MASK64 = 0xFFFFFFFFFFFFFFFF


def _mix64(z: np.ndarray | np.uint64):
    """splitmix64 output mixer (Stafford variant 13). Wraps mod 2**64."""
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def _rotl(x: np.ndarray, k: int) -> np.ndarray:
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


_INV53 = float(2.0**-53)


class Prng:
    """Seeded deterministic generator with keyed substreams."""

    LANES = 4096

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        idx = np.arange(1, 4 * self.LANES + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            words = _mix64(np.uint64(self.seed) + idx * _GOLDEN)
        self._s = [words[j * self.LANES : (j + 1) * self.LANES].copy() for j in range(4)]
        self._buf = np.empty(0, dtype=np.uint64)
        self._split_count = 0

    # -- raw stream ---------------------------------------------------------

    def _step(self) -> np.ndarray:
        s0, s1, s2, s3 = self._s
        with np.errstate(over="ignore"):
            out = _rotl(s1 * np.uint64(5), 7) * np.uint64(9)
        t = s1 << np.uint64(17)
        s2 = s2 ^ s0
        s3 = s3 ^ s1
        s1 = s1 ^ s2
        s0 = s0 ^ s3
        s2 = s2 ^ t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return out

    def next_u64(self, n: int) -> np.ndarray:
        """Next ``n`` raw 64-bit words of the stream."""
        if n < 0:
            raise ValueError("n must be non-negative")
        chunks = [self._buf]
        have = self._buf.size
        while have < n:
            c = self._step()
            chunks.append(c)
            have += c.size
        flat = np.concatenate(chunks) if len(chunks) > 1 else self._buf
        self._buf = flat[n:]
        return flat[:n]

    # -- distributions ------------------------------------------------------

    def uniform(self, shape=(), lo: float = 0.0, hi: float = 1.0, dtype=np.float32) -> np.ndarray:
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * _INV53
        out = (lo + (hi - lo) * u).astype(dtype)
        return out.reshape(shape)

    def normal(self, shape=(), mean: float = 0.0, std: float = 1.0, dtype=np.float32) -> np.ndarray:
        """Box-Muller pairs from the uniform stream."""
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        m = (n + 1) // 2
        u1 = ((self.next_u64(m) >> np.uint64(11)).astype(np.float64) + 1.0) * _INV53  # (0, 1]
        u2 = (self.next_u64(m) >> np.uint64(11)).astype(np.float64) * _INV53  # [0, 1)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = (2.0 * math.pi) * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        return (mean + std * z).astype(dtype).reshape(shape)

    def trunc_normal(self, shape=(), std: float = 0.02, clip: float = 2.0, dtype=np.float32) -> np.ndarray:
        """Normal(0, std) truncated at +-clip standard deviations (rejection)."""
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        z = self.normal(n, dtype=np.float64)
        bad = np.abs(z) > clip
        while bad.any():
            z[bad] = self.normal(int(bad.sum()), dtype=np.float64)
            bad = np.abs(z) > clip
        return (std * z).astype(dtype).reshape(shape)

    def integers(self, n: int, high: int) -> np.ndarray:
        """n draws uniform on [0, high). Modulo bias is < 2**-32 for desk-scale high."""
        if high <= 0:
            raise ValueError("high must be positive")
        return (self.next_u64(n) % np.uint64(high)).astype(np.int64)

    def permutation(self, n: int) -> np.ndarray:
        """Deterministic permutation of range(n) via stable argsort of raw words."""
        return np.argsort(self.next_u64(n), kind="stable")

    def shuffled(self, seq):
        return [seq[i] for i in self.permutation(len(seq))]

    # -- substreams ----------------------------------------------------------

    def child(self, *keys: int) -> "Prng":
        """Independent stream derived from the root seed and integer keys only."""
        h = np.uint64(self.seed)
        with np.errstate(over="ignore"):
            for k in keys:
                h = _mix64(h ^ _mix64(np.uint64(int(k) & _MASK64) + _GOLDEN))
        return Prng(int(h))

    def split(self) -> "Prng":
        """Next substream under an internal counter (one per call)."""
        self._split_count += 1
        return self.child(0x5E11, self._split_count)
