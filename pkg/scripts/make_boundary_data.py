"""Regenerate the boundary data files in src/almosthermitian/data.

The n = 3 examples are left-invariant structures on five-dimensional contact
Lie algebras.  The complex structure on the contact distribution is a
rational symplectic conjugate of the obvious one, which makes it
non-integrable (and, for su(2) + aff(R), not invariant under the Reeb flow).
"""

import itertools
import json
from fractions import Fraction
from pathlib import Path

import numpy as np
import sympy as sp

from almosthermitian.ach_model import TWBoundaryData

OUT = Path(__file__).resolve().parents[1] / "src" / "almosthermitian" / "data"


def lie_algebra(brackets, dim=5):
    """Structure constants from ``{(i, j): vector}`` on the basis ``(T, h1..h4)``."""
    c = {}
    for (i, j), vec in brackets.items():
        c[i, j] = sp.Matrix(vec)
        c[j, i] = -sp.Matrix(vec)

    def br(x, y):
        out = sp.zeros(dim, 1)
        for (i, j), vec in c.items():
            out += x[i] * y[j] * vec
        return out

    E = sp.eye(dim)
    for a, b, d in itertools.combinations(range(dim), 3):
        jac = (br(E[:, a], br(E[:, b], E[:, d])) + br(E[:, b], br(E[:, d], E[:, a]))
               + br(E[:, d], br(E[:, a], E[:, b])))
        assert jac == sp.zeros(dim, 1), "not a Lie algebra"
    return br


def frame_brackets(br, signs, dim=5):
    """Brackets of ``T, Z_1, Z_2, Zbar_1, Zbar_2`` for a sheared complex structure."""
    E = sp.eye(dim)

    def omega(x, y):
        return -br(x, y)[0]

    def shear(v, t):
        return sp.Matrix(dim, dim, lambda r, q: E[r, q] + t * omega(v, E[:, q]) * v[r])

    S = shear(sp.Matrix([0, 1, 0, 1, 0]), 1) * shear(sp.Matrix([0, 0, 1, 0, 1]), sp.Rational(1, 2))
    z = [S * (E[:, 1] - signs[0] * sp.I * E[:, 2]), S * (E[:, 3] - signs[1] * sp.I * E[:, 4])]
    P = sp.Matrix.hstack(E[:, 0], *z, *[v.conjugate() for v in z])
    Pinv = P.inv()
    C = np.empty((dim,) * 3, dtype=object)
    for a in range(dim):
        for b in range(dim):
            x = sp.expand(Pinv * br(P[:, a], P[:, b]))
            for k in range(dim):
                C[k, a, b] = (Fraction(str(sp.re(x[k]))), Fraction(str(sp.im(x[k]))))
    return C


def e(**kw):
    names = ["T", "h1", "h2", "h3", "h4"]
    out = [0] * 5
    for k, v in kw.items():
        out[names.index(k)] = v
    return out


def su2_plus_aff():
    # u1, u2, u3 = T span su(2); a1, a2 span aff(R); h4 = a2 + u3 is horizontal
    return lie_algebra({(1, 2): e(T=1), (3, 4): e(h4=1, T=-1), (1, 4): e(h2=-1),
                        (2, 4): e(h1=1), (0, 1): e(h2=1), (0, 2): e(h1=-1)})


def aff_plus_aff_extended():
    # central extension of aff(R) + aff(R) by its symplectic form
    return lie_algebra({(1, 2): e(h2=1, T=-1), (3, 4): e(h4=1, T=-1)})


def dump(tw, name):
    tw.check()
    with open(OUT / name, "w", encoding="utf-8") as fh:
        json.dump(tw.to_json(), fh, indent=1)
        fh.write("\n")


def main():
    dump(TWBoundaryData.heisenberg(2), "heisenberg_n2.json")
    dump(TWBoundaryData.heisenberg(3), "heisenberg_n3.json")
    dump(TWBoundaryData.from_json({"n": 2, "levi": [["1/2"]], "tw_torsion": [[["1/3", "1/5"]]],
                                   "cr_nijenhuis": [[["0"]]],
                                   "tw_connection": [[["0"], ["0"], ["0"]]]}), "torsion_n2.json")
    dump(TWBoundaryData.from_brackets(3, frame_brackets(su2_plus_aff(), (-1, 1))), "torsion_n3.json")
    dump(TWBoundaryData.from_brackets(3, frame_brackets(aff_plus_aff_extended(), (1, 1))),
         "nijenhuis_n3.json")


if __name__ == "__main__":
    main()
