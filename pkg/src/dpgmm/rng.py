"""Seeded counter-based randomness with keyed sub-streams.

One 64-bit seed drives every randomized operation in the package.  Named
sub-streams are derived with ``SeedSequence(entropy=seed, spawn_key=key)``
feeding a Philox counter generator, so per-class draws are independent of
scheduling order and the whole pipeline is reproducible byte for byte.
"""

import numpy as np

# Fixed stream identifiers; changing these changes every released artifact.
STREAM_MEAN = 0
STREAM_COV = 1
STREAM_WEIGHTS = 2
STREAM_TRIAL = 3
STREAM_KMEANS = 4
STREAM_SYNTHETIC = 5
STREAM_LAMBDA = 6
STREAM_AUDIT = 7
STREAM_SAMPLE = 8


def substream(seed, *key):
    """Generator for the sub-stream identified by ``key`` under ``seed``."""
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


def derive_seed(seed, *key):
    """A fresh 64-bit seed deterministically derived from (seed, key)."""
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return int(seq.generate_state(1, np.uint64)[0])
