"""Counter-based uniform streams for reproducible parallel simulation.

The generator is the splitmix64 output function applied to
``seed + (counter+1) * GAMMA`` (all arithmetic mod 2**64).  Because each draw
is a pure function of (stream seed, counter) the same trajectory can be
replayed from any entry point, and a vectorized batch over replications draws
bit-identical uniforms to the scalar path.

Constants are the published splitmix64 set: increment 0x9E3779B97F4A7C15 and
finalizer multipliers 0xBF58476D1CE4E5B9, 0x94D049BB133111EB with shifts
30/27/31.  Stream seeds for replication r are derived by finalizing
``master_seed ^ mix64((r+1) * GAMMA)`` so that nearby replication indices get
decorrelated streams.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

_U64_GAMMA = np.uint64(GAMMA)
_U64_M1 = np.uint64(_M1)
_U64_M2 = np.uint64(_M2)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV_2_53 = 2.0 ** -53


def mix64(x: int) -> int:
    """splitmix64 finalizer on a Python int, result in [0, 2**64)."""
    x &= MASK64
    x = ((x ^ (x >> 30)) * _M1) & MASK64
    x = ((x ^ (x >> 27)) * _M2) & MASK64
    return x ^ (x >> 31)


def stream_seed(master_seed: int, replication: int) -> int:
    """Derive the 64-bit stream seed for one replication index."""
    if replication < 0:
        raise ValueError(f"replication index must be nonnegative, got {replication}")
    return mix64((master_seed & MASK64) ^ mix64(((replication + 1) * GAMMA) & MASK64))


def uniform_at(seed: int, counter: int) -> float:
    """Uniform in [0, 1) for a given stream seed and draw counter."""
    word = mix64((seed + (counter + 1) * GAMMA) & MASK64)
    return (word >> 11) * _INV_2_53


def _mix64_array(x: np.ndarray) -> np.ndarray:
    # uint64 array ops wrap silently, which is exactly what we want here
    x = (x ^ (x >> _S30)) * _U64_M1
    x = (x ^ (x >> _S27)) * _U64_M2
    return x ^ (x >> _S31)


def stream_seeds(master_seed: int, start: int, count: int) -> np.ndarray:
    """Vector of stream seeds for replications start..start+count-1."""
    reps = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    mixed = _mix64_array(reps * _U64_GAMMA)
    return _mix64_array(np.uint64(master_seed & MASK64) ^ mixed)


def uniforms_at(seeds: np.ndarray, counter: int) -> np.ndarray:
    """One uniform per stream at a shared counter value (lockstep batches)."""
    offset = np.uint64(((counter + 1) * GAMMA) & MASK64)
    word = _mix64_array(seeds + offset)
    return (word >> _S11).astype(np.float64) * _INV_2_53


class CounterRng:
    """Scalar stream view: draw counter k of a fixed stream via ``u01(k)``."""

    def __init__(self, seed: int):
        self.seed = seed & MASK64

    def u01(self, counter: int) -> float:
        return uniform_at(self.seed, counter)
