"""Deterministic PRNG used everywhere randomness is needed.

The generator is xoshiro256** with splitmix64 seeding. The exact state
transition is documented here so an independent implementation can
reproduce every dataset and training run from the same integer seed.

State: four unsigned 64-bit words ``s0..s3``, not all zero. All arithmetic
is modulo 2^64; ``rotl(x, k)`` rotates left.

Seeding from integer ``seed`` (splitmix64, four successive outputs fill
``s0..s3``)::

    z = (x + 0x9E3779B97F4A7C15) mod 2^64        # x is the running state
    z = ((z XOR (z >> 30)) * 0xBF58476D1CE4E5B9) mod 2^64
    z = ((z XOR (z >> 27)) * 0x94D049BB133111EB) mod 2^64
    output = z XOR (z >> 31)

Next-output step (xoshiro256**)::

    result = rotl(s1 * 5, 7) * 9
    t  = s1 << 17
    s2 ^= s0;  s3 ^= s1;  s1 ^= s2;  s0 ^= s3
    s2 ^= t
    s3  = rotl(s3, 45)

Derived values:

* ``next_float64()`` = ``(next_u64() >> 11) * 2**-53`` — uniform in [0,1).
* ``uniform_int(a, b)`` = ``a + floor(next_float64() * (b - a + 1))`` —
  uniform on the inclusive range [a, b].
* ``uniform(a, b)`` = ``a + (b - a) * next_float64()``.

These are the only consumption rules; no buffering or rejection, so the
stream position after n draws is identical across implementations.
"""

from __future__ import annotations

MASK64 = 0xFFFFFFFFFFFFFFFF


def _splitmix64(x: int) -> tuple[int, int]:
    """One splitmix64 step: returns (new state, output)."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return x, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class Rng:
    """xoshiro256** stream seeded from a Python int via splitmix64."""

    __slots__ = ("s0", "s1", "s2", "s3")

    def __init__(self, seed: int):
        x = seed & MASK64
        x, self.s0 = _splitmix64(x)
        x, self.s1 = _splitmix64(x)
        x, self.s2 = _splitmix64(x)
        x, self.s3 = _splitmix64(x)
        if self.s0 == self.s1 == self.s2 == self.s3 == 0:
            # all-zero state is the one fixed point; cannot happen from
            # splitmix64 expansion but guard anyway
            self.s0 = 1

    def next_u64(self) -> int:
        result = (_rotl((self.s1 * 5) & MASK64, 7) * 9) & MASK64
        t = (self.s1 << 17) & MASK64
        self.s2 ^= self.s0
        self.s3 ^= self.s1
        self.s1 ^= self.s2
        self.s0 ^= self.s3
        self.s2 ^= t
        self.s3 = _rotl(self.s3, 45)
        return result

    def next_float64(self) -> float:
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform(self, a: float, b: float) -> float:
        return a + (b - a) * self.next_float64()

    def uniform_int(self, a: int, b: int) -> int:
        """Uniform integer on [a, b] inclusive."""
        if b < a:
            raise ValueError(f"empty integer range [{a}, {b}]")
        return a + int(self.next_float64() * (b - a + 1))

    def choice(self, seq):
        if not seq:
            raise ValueError("choice from empty sequence")
        return seq[self.uniform_int(0, len(seq) - 1)]

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates, consuming len(items)-1 draws."""
        for i in range(len(items) - 1, 0, -1):
            j = self.uniform_int(0, i)
            items[i], items[j] = items[j], items[i]

    def floats(self, n: int) -> list[float]:
        return [self.next_float64() for _ in range(n)]
