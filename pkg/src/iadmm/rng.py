"""Portable deterministic random numbers.

All randomness in this package flows through xoshiro256** seeded by a
splitmix64 expansion of a single 64-bit seed.  The generators are specified
at the bit level so that matrices regenerated from a seed are identical
across platforms and library versions:

* splitmix64: z = (state += 0x9E3779B97F4A7C15);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EB; return z ^ (z >> 31)
* xoshiro256**: result = rotl(s1 * 5, 7) * 9 followed by the standard
  xor/shift state transition; the four state words are the first four
  splitmix64 outputs.
* uniforms in [0, 1): (u64 >> 11) * 2**-53
* standard normals: Box-Muller on uniform pairs, with the radius uniform
  shifted into (0, 1] to keep the logarithm finite.  Normals are emitted
  in pairs; matrix fills are row-major.
"""

from __future__ import annotations

import math

import numpy as np

_MASK = (1 << 64) - 1
_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15
_TWO_NEG_53 = 2.0**-53


def _splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step; returns (new_state, output)."""
    state = (state + _SPLITMIX_GAMMA) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK


class Xoshiro256StarStar:
    """Sequential xoshiro256** stream seeded via splitmix64."""

    __slots__ = ("_s0", "_s1", "_s2", "_s3")

    def __init__(self, seed: int):
        state = int(seed) & _MASK
        state, self._s0 = _splitmix64(state)
        state, self._s1 = _splitmix64(state)
        state, self._s2 = _splitmix64(state)
        state, self._s3 = _splitmix64(state)

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s0, self._s1, self._s2, self._s3
        result = (_rotl((s1 * 5) & _MASK, 7) * 9) & _MASK
        t = (s1 << 17) & _MASK
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s0, self._s1, self._s2, self._s3 = s0, s1, s2, s3
        return result

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * _TWO_NEG_53

    def uniforms(self, n: int) -> np.ndarray:
        nxt = self.next_u64
        return np.array([(nxt() >> 11) * _TWO_NEG_53 for _ in range(n)], dtype=float)

    def normals(self, shape: tuple[int, ...]) -> np.ndarray:
        """Standard normal fill, row-major, Box-Muller pairs."""
        n = int(np.prod(shape)) if shape else 1
        out = np.empty(n + (n & 1), dtype=float)
        nxt = self.next_u64
        two_pi = 2.0 * math.pi
        for j in range(0, len(out), 2):
            # radius uniform in (0, 1] so log() stays finite
            u1 = ((nxt() >> 11) + 1) * _TWO_NEG_53
            u2 = (nxt() >> 11) * _TWO_NEG_53
            r = math.sqrt(-2.0 * math.log(u1))
            out[j] = r * math.cos(two_pi * u2)
            out[j + 1] = r * math.sin(two_pi * u2)
        return out[:n].reshape(shape)

    def bernoulli_matrix(self, rows: int, cols: int, p: float) -> np.ndarray:
        """0/1 matrix with independent P(entry = 1) = p, filled row-major."""
        nxt = self.next_u64
        flat = np.array(
            [1.0 if (nxt() >> 11) * _TWO_NEG_53 < p else 0.0 for _ in range(rows * cols)],
            dtype=float,
        )
        return flat.reshape(rows, cols)


def derive_seed(master: int, *path: int) -> int:
    """Deterministic sub-seed for a nested experiment coordinate.

    Applies one splitmix64 scramble per path component, folding the
    component into the state first.  Stable across sessions and platforms.
    """
    state = int(master) & _MASK
    for component in path:
        state = (state ^ ((int(component) + 1) * _SPLITMIX_GAMMA)) & _MASK
        state, out = _splitmix64(state)
        state = out
    return state
