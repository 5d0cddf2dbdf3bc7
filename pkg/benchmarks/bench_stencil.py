"""Time the periodic finite-difference stencil: numba kernel against the numpy fallback.

    python3 benchmarks/bench_stencil.py --extent 16 --components 16

With ALMOSTHERMITIAN_NUMBA=0 only the numpy path is timed.
"""

import argparse
import timeit

import numpy as np

from almosthermitian import _kernels


def run(extent, components, scheme, repeat, number):
    rng = np.random.default_rng(0)
    shape = (extent,) * 4 + (components,)
    f = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    w = _kernels.STENCILS[scheme]
    paths = {"numpy": False}
    if _kernels.USE_NUMBA:
        paths["numba"] = True
        _kernels.stencil(f, w, 0, use_numba=True)  # compile outside the timing
    ref = {axis: _kernels.stencil(f, w, axis, use_numba=False) for axis in range(4)}
    rows = []
    for name, flag in paths.items():
        err = max(np.abs(_kernels.stencil(f, w, axis, use_numba=flag) - ref[axis]).max()
                  for axis in range(4))
        best = min(timeit.repeat(
            lambda: [_kernels.stencil(f, w, axis, use_numba=flag) for axis in range(4)],
            repeat=repeat, number=number)) / number
        rows.append((name, best, err))
    return rows


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--extent", type=int, default=16)
    p.add_argument("--components", type=int, default=16)
    p.add_argument("--scheme", choices=sorted(_kernels.STENCILS), default="order4")
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--number", type=int, default=3)
    a = p.parse_args(argv)
    rows = run(a.extent, a.components, a.scheme, a.repeat, a.number)
    print(f"field {a.extent}^4 x {a.components} complex, {a.scheme}, all four axes")
    base = rows[0][1]
    for name, t, err in rows:
        print(f"  {name:6s} {t * 1e3:9.2f} ms  speedup {base / t:5.1f}x  max diff {err:.1e}")
    if not _kernels.USE_NUMBA:
        print("  numba path disabled (ALMOSTHERMITIAN_NUMBA=0 or numba missing)")


if __name__ == "__main__":
    main()
