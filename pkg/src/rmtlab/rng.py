"""Seeds, generators and per-trial stream derivation.

Every sampler takes either a 64-bit integer seed or an existing
:class:`numpy.random.Generator`.  Integer seeds key a Philox
(counter-based) bit generator, so a seed names one reproducible stream.
"""

import numbers

import numpy as np

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x):
    """One SplitMix64 step: a bijection on 64-bit integers."""
    z = (x + _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def check_seed(seed):
    if isinstance(seed, bool) or not isinstance(seed, numbers.Integral):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    seed = int(seed)
    if not 0 <= seed <= MASK64:
        raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
    return seed


def as_generator(seed):
    """Return a Generator for ``seed`` (int) or ``seed`` itself if it is one."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(key=check_seed(seed)))


def derive_trial_seed(master, trial_index):
    """Seed of trial ``trial_index`` under ``master``.

    The master seed is mixed first, then offset by ``(index + 1)`` times an
    odd constant and mixed again.  For a fixed master the map is injective
    in the index modulo 2**64, so consecutive trials never collide.
    """
    master = check_seed(master)
    if trial_index < 0:
        raise ValueError("trial_index must be non-negative")
    state = (splitmix64(master) + (int(trial_index) + 1) * _GOLDEN) & MASK64
    return splitmix64(state)
