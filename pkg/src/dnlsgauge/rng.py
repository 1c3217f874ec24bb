"""Counter-based random streams keyed by (seed, index).

Each sample or path draws from its own Philox stream, so an ensemble is the
same whether it is generated serially, in parallel, or in pieces.
"""

import numpy as np

_MASK64 = (1 << 64) - 1

# stream families; keep distinct so different consumers never share bits
RHO = 1
BRIDGE = 2
MCMC = 3
MOTION = 4


def stream(seed: int, index: int, family: int = 0) -> np.random.Generator:
    key = ((family & _MASK64) << 64) | (seed & _MASK64)
    counter = np.array([0, 0, 0, index & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def normals(seed: int, indices, shape, family: int = 0) -> np.ndarray:
    """Standard normals of the given per-index shape, one stream per index."""
    indices = np.atleast_1d(np.asarray(indices, dtype=np.int64))
    out = np.empty((len(indices),) + tuple(shape))
    for row, i in enumerate(indices):
        out[row] = stream(seed, int(i), family).standard_normal(shape)
    return out
