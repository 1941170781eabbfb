"""Counter-based Gaussian increments.

Every normal variate is a pure function of ``(key, step, component)``, where
``key`` identifies one trajectory.  Batches of trajectories can therefore be
advanced together, split into chunks or run one at a time without changing a
single bit of any path.  The mixing function is the SplitMix64 finalizer.
"""

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO_PI = 2.0 * np.pi
_INV_2_53 = 2.0**-53


def _mix(z):
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _mix_int(z: int) -> int:
    # Same finalizer on a python int; avoids array round trips in hot loops.
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(base_seed: int, index: int) -> int:
    """Seed of trajectory ``index`` in an ensemble started from ``base_seed``."""
    if index < 0:
        raise ValueError("trajectory index must be non-negative")
    return _mix_int(_mix_int(base_seed) + (index + 1) * _GOLDEN)


def derive_seeds(base_seed: int, n: int) -> np.ndarray:
    idx = np.arange(1, n + 1, dtype=np.uint64)
    base = np.uint64(_mix_int(base_seed))
    return _mix(base + idx * np.uint64(_GOLDEN))


def trajectory_keys(seeds) -> np.ndarray:
    """Map user seeds (python ints, possibly negative) to uint64 stream keys."""
    seeds = np.atleast_1d(seeds)
    if seeds.dtype != np.uint64:
        seeds = np.array([int(s) & _MASK for s in seeds], dtype=np.uint64)
    return _mix(seeds ^ np.uint64(0x5851F42D4C957F2D))


def _uniform(h):
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * _INV_2_53


def normals(keys: np.ndarray, step: int, dim: int) -> np.ndarray:
    """Standard normals of shape ``(len(keys), dim)`` for time step ``step``."""
    m = keys.shape[0]
    out = np.empty((m, dim))
    step_code = (step * _GOLDEN) & _MASK
    for pair in range((dim + 1) // 2):
        c = np.uint64(_mix_int(step_code ^ pair))
        h1 = _mix(keys ^ c)
        h2 = _mix(h1 + np.uint64(_GOLDEN))
        r = np.sqrt(-2.0 * np.log(_uniform(h1)))
        theta = _TWO_PI * _uniform(h2)
        out[:, 2 * pair] = r * np.cos(theta)
        if 2 * pair + 1 < dim:
            out[:, 2 * pair + 1] = r * np.sin(theta)
    return out


def normal_column(keys: np.ndarray, step: int) -> np.ndarray:
    """First column of ``normals(keys, step, dim)``, as a flat array."""
    c = np.uint64(_mix_int((step * _GOLDEN) & _MASK))
    h1 = _mix(keys ^ c)
    h2 = _mix(h1 + np.uint64(_GOLDEN))
    return np.sqrt(-2.0 * np.log(_uniform(h1))) * np.cos(_TWO_PI * _uniform(h2))
