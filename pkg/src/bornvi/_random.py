"""Seeded random streams.

Every stochastic call takes either an integer seed or a ready
``numpy.random.Generator``. Streams are Philox (counter based) keyed by the
master seed plus a tuple of integer counters, so the stream for, say,
``(seed, epoch, parameter)`` never depends on call order.
"""
import numpy as np

# stream tags
CLASSIFIER = 1
BORN = 2
INIT = 3
INSTANCE = 4
TRAIN = 5
DATA = 6
BOOTSTRAP = 7
MLP_INIT = 8
LOSS = 9


def stream(seed, *key):
    """Generator for ``seed`` and the counter path ``key``."""
    if isinstance(seed, np.random.Generator):
        if key:
            raise TypeError("cannot derive keyed streams from a Generator")
        return seed
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def child_seed(seed, *key):
    """A 64-bit integer seed derived from ``seed`` and ``key``."""
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
