"""Periodic finite-difference stencil, jitted when numba is usable.

Set ``ALMOSTHERMITIAN_NUMBA=0`` to force the numpy fallback and
``ALMOSTHERMITIAN_THREADS=k`` to cap numba's thread pool.
"""

import os

import numpy as np

try:
    import numba
    HAS_NUMBA = True
    # skip the TBB probe; the workqueue layer is always present
    if "NUMBA_THREADING_LAYER" not in os.environ:
        numba.config.THREADING_LAYER = "workqueue"
except ImportError:  # pragma: no cover
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and os.environ.get("ALMOSTHERMITIAN_NUMBA", "1") != "0"

if USE_NUMBA and os.environ.get("ALMOSTHERMITIAN_THREADS"):
    numba.set_num_threads(max(1, min(int(os.environ["ALMOSTHERMITIAN_THREADS"]),
                                     numba.config.NUMBA_NUM_THREADS)))

# one-sided weights w[k] for offsets +k; the stencils are antisymmetric
STENCILS = {
    "order2": np.array([1 / 2]),
    "order4": np.array([2 / 3, -1 / 12]),
    "order6": np.array([3 / 4, -3 / 20, 1 / 60]),
}


def _stencil_numpy(f, weights, axis):
    out = np.zeros_like(f)
    for k, w in enumerate(weights, start=1):
        out += w * (np.roll(f, -k, axis=axis) - np.roll(f, k, axis=axis))
    return out


if USE_NUMBA:
    @numba.njit(parallel=True, cache=True)
    def _stencil_3d(f, weights, out):
        pre, length, post = f.shape
        for p in numba.prange(pre):
            for i in range(length):
                for q in range(post):
                    acc = f[p, i, q] * 0
                    for k in range(weights.shape[0]):
                        acc += weights[k] * (f[p, (i + k + 1) % length, q]
                                             - f[p, (i - k - 1) % length, q])
                    out[p, i, q] = acc


def stencil(f, weights, axis, use_numba=None):
    """Antisymmetric periodic stencil along ``axis`` (unscaled by spacing)."""
    if use_numba is None:
        use_numba = USE_NUMBA
    if not use_numba or f.dtype not in (np.float64, np.complex128):
        return _stencil_numpy(f, weights, axis)
    axis %= f.ndim
    shape = f.shape
    f3 = np.ascontiguousarray(f).reshape(
        int(np.prod(shape[:axis])), shape[axis], int(np.prod(shape[axis + 1:])))
    out = np.empty_like(f3)
    _stencil_3d(f3, np.asarray(weights, dtype=np.float64), out)
    return out.reshape(shape)
