"""Deterministic random number generation with a fixed, portable algorithm.

Every stochastic component in this package (LSH hash draws, weight
initialization, synthetic data) runs off this generator so that a given seed
produces bit-identical results on any platform or in any reimplementation.

The exact byte-level algorithm, for cross-language reproduction:

* State update (splitmix64)::

      state  = (state + 0x9E3779B97F4A7C15) mod 2**64
      z      = state
      z      = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) mod 2**64
      z      = ((z ^ (z >> 27)) * 0x94D049BB133111EB) mod 2**64
      output = z ^ (z >> 31)

* ``uniform01`` maps one 64-bit output to a double in [0, 1)::

      uniform01 = (output >> 11) / 2**53

* ``gaussian`` consumes exactly two uniforms and uses the cosine branch of
  the Box-Muller transform (no caching of the sine branch)::

      gaussian = sqrt(-2 * ln(1 - u1)) * cos(2 * pi * u2)

* ``uniform(lo, hi)`` is ``lo + uniform01 * (hi - lo)``.
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class SplitMix64:
    """Sequential splitmix64 stream with Box-Muller Gaussian sampling."""

    def __init__(self, seed: int) -> None:
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def uniform01(self) -> float:
        """Uniform double in [0, 1) with 53 random mantissa bits."""
        return (self.next_u64() >> 11) * 2.0 ** -53

    def uniform(self, lo: float, hi: float) -> float:
        return lo + self.uniform01() * (hi - lo)

    def gaussian(self) -> float:
        """Standard normal draw; always consumes two uniforms."""
        u1 = self.uniform01()
        u2 = self.uniform01()
        return math.sqrt(-2.0 * math.log(1.0 - u1)) * math.cos(2.0 * math.pi * u2)

    def gaussians(self, n: int) -> list[float]:
        return [self.gaussian() for _ in range(n)]

    def derive(self, salt: int) -> "SplitMix64":
        """Child generator whose seed mixes the current state with ``salt``."""
        return SplitMix64(self.next_u64() ^ (salt & _MASK64))
