"""Seedable counter-based 64-bit generator (SplitMix64).

The k-th output is a fixed bijective mix of ``seed + k * GAMMA`` (mod 2**64),
so the whole stream is determined by one integer counter.  The compiled
kernel implements the identical recurrence; both backends draw the same
numbers for the same counter.

Generator version: ``splitmix64-v1``.  Changing anything here changes every
recorded trajectory, so bump ``RNG_VERSION`` with it.
"""

RNG_VERSION = "splitmix64-v1"

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """Stream of 64-bit words; ``counter`` is the complete state."""

    __slots__ = ("counter",)

    def __init__(self, seed: int = 0, counter: int | None = None):
        self.counter = (seed & MASK64) if counter is None else (counter & MASK64)

    def next_u64(self) -> int:
        self.counter = (self.counter + GAMMA) & MASK64
        return mix64(self.counter)

    def below(self, n: int) -> int:
        """Uniform integer in ``[0, n)`` by masked rejection (no modulo bias)."""
        if n <= 1:
            if n < 1:
                raise ValueError("below() needs n >= 1")
            return 0
        shift = 64 - (n - 1).bit_length()
        while True:
            x = self.next_u64() >> shift
            if x < n:
                return x

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)
