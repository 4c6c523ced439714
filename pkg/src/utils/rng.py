"""
Seeded generator plumbing.

Every random draw in the library comes from a generator keyed by (run seed, stream, ...), so results
do not depend on call order across nodes or on scheduling.
"""
import numpy as np

# Named streams keep unrelated consumers of one run seed independent.
STREAM_INIT = 0
STREAM_DATA = 1
STREAM_FRAMES = 2
STREAM_EVAL = 3
STREAM_FALLBACK = 4
STREAM_AUDIT = 5
STREAM_JITTER = 6


def generator(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), *(int(k) for k in keys)])


def node_unit_vectors(seed: int, nodes: np.ndarray, salt: int = 0, d: int = 3) -> np.ndarray:
    """One reproducible random unit vector per node index."""
    out = np.empty((len(nodes), d))
    for row, node in enumerate(np.asarray(nodes, dtype=np.int64)):
        v = generator(seed, STREAM_FALLBACK, salt, node).standard_normal(d)
        out[row] = v / np.linalg.norm(v)
    return out
