"""SplitMix64 pseudo-random generator.

Every randomized experiment draws from this generator so that runs can be
reproduced bit-for-bit from a 64-bit seed, independently of numpy's RNG
implementation details.
"""

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    """Counter-based SplitMix64 stream.

    Parameters
    ----------
    seed : int
        Any integer; reduced modulo 2**64.
    """

    def __init__(self, seed=0):
        self.state = int(seed) & _MASK

    def next_u64(self, n=None):
        """Return the next ``n`` raw 64-bit outputs (a Python int when ``n`` is None)."""
        count = 1 if n is None else int(n)
        steps = np.arange(1, count + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            states = np.uint64(self.state) + steps * _GOLDEN
            out = _mix(states)
        self.state = (self.state + count * int(_GOLDEN)) & _MASK
        return int(out[0]) if n is None else out

    def random(self, n=None):
        """Uniform doubles in [0, 1) built from the top 53 bits."""
        raw = self.next_u64(1 if n is None else n)
        vals = (np.asarray(raw, dtype=np.uint64) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return float(vals[0]) if n is None else vals

    def uniform(self, low=0.0, high=1.0, size=None):
        if size is None:
            return low + (high - low) * self.random()
        shape = (size,) if np.isscalar(size) else tuple(size)
        u = self.random(int(np.prod(shape, dtype=np.int64)))
        return (low + (high - low) * u).reshape(shape)

    def normal(self, size):
        """Standard normal samples via Box-Muller."""
        shape = (size,) if np.isscalar(size) else tuple(size)
        n = int(np.prod(shape, dtype=np.int64))
        half = (n + 1) // 2
        u1 = 1.0 - self.random(half)  # in (0, 1]
        u2 = self.random(half)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])
        return z[:n].reshape(shape)

    def integers(self, low, high, size=None):
        """Integers in [low, high) by rejection-free multiply-shift (bias < 2**-53)."""
        u = self.random(size)
        return (low + np.floor(u * (high - low))).astype(np.int64) if size is not None else int(low + (high - low) * u)

    def spawn(self):
        """An independent child stream seeded from this one."""
        return SplitMix64(self.next_u64())
