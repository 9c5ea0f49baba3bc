"""Portable deterministic generator for codebook initialization.

splitmix64 (Steele, Lea & Flood): the state advances by the odd constant
0x9E3779B97F4A7C15 and each output is finalized with two xorshift-multiply
rounds. The whole stream is pinned by three integer constants, so another
implementation in any language reproduces the exact same center choices
from the same seed. Model training uses numpy's seeded generator instead;
only codebook initialization needs cross-implementation portability.
"""

_MASK64 = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def next_float(self) -> float:
        # top 53 bits -> uniform double in [0, 1)
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))
