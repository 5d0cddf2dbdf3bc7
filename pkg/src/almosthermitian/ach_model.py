"""Complex hyperbolic / ACH model: boundary data, model frame, indicial data.

The model frame near the boundary is ``Z_0 = 1/2 x d_x + i x^2 T`` and
``Z_a = x Z_a`` (``Z_a`` a (1,0)-frame of the boundary CR structure), with
full-frame order ``Z_0, Z_1.., Zbar_0, Zbar_1..``.  Everything is computed on
the series backend with constant-coefficient (homogeneous) boundary data.

Boundary data use the contact frame ``T, Z_1.., Zbar_1..`` with coframe
``theta, theta^a, theta^abar`` and the structure equations

    d theta     = i h_{a bbar} theta^a ^ theta^bbar,
    d theta^c   = theta^b ^ omega_b^c - A_abar^c theta^abar ^ theta
                  + 1/2 N^c_{abar bbar} theta^abar ^ theta^bbar,

where ``h`` is the Levi form.  The metric block of the model metric in the
model frame is ``hhat = h / 2``; ``TWBoundaryData.levi`` stores ``hhat``.
"""

import functools
import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import sympy

from . import connections as cn
from . import variational as va
from .backends import SeriesBackend, gauss_to_pair


def _entry(v):
    if isinstance(v, (list, tuple)):
        return complex(float(Fraction(v[0])), float(Fraction(v[1]))), \
            (Fraction(v[0]), Fraction(v[1]))
    return complex(float(Fraction(v))), (Fraction(v), Fraction(0))


def _exact_array(doc, shape):
    arr = np.empty(shape, dtype=object)
    for idx in np.ndindex(shape):
        item = doc
        for i in idx:
            item = item[i]
        arr[idx] = _entry(item)[1]
    return arr


def _serialize(arr):
    """Nested lists of ``[re, im]`` strings (exact rationals)."""
    if isinstance(arr, np.ndarray) and arr.ndim:
        return [_serialize(a) for a in arr]
    re, im = arr if isinstance(arr, tuple) else gauss_to_pair(arr)
    return [str(re), str(im)]


@dataclass
class TWBoundaryData:
    """Constant Tanaka-Webster data of a homogeneous compatible almost CR boundary.

    Entries are exact ``(re, im)`` Fraction pairs in object arrays:

    * ``levi[a, b]``: model metric block ``hhat_{a bbar}`` (Levi form is ``2 hhat``);
    * ``tw_torsion[a, b]``: ``A_{ab}``, symmetric;
    * ``cr_nijenhuis[c, a, b]``: ``N^cbar_{ab}``, skew in ``a, b``;
    * ``tw_connection[c, mu, b]``: coefficient of ``Z_c`` in ``nabla_{Y_mu} Z_b``
      with ``Y = (T, Z_1.., Zbar_1..)``.
    """

    n: int
    levi: np.ndarray
    tw_torsion: np.ndarray
    cr_nijenhuis: np.ndarray
    tw_connection: np.ndarray

    @property
    def m(self):
        return self.n - 1

    @classmethod
    def heisenberg(cls, n):
        m = n - 1
        zero = (Fraction(0), Fraction(0))
        levi = np.empty((m, m), dtype=object)
        for a in range(m):
            for b in range(m):
                levi[a, b] = (Fraction(1, 2) if a == b else Fraction(0), Fraction(0))
        return cls(n, levi, _filled((m, m), zero), _filled((m, m, m), zero),
                   _filled((m, 2 * m + 1, m), zero))

    @classmethod
    def from_json(cls, doc):
        if isinstance(doc, str):
            doc = json.loads(doc)
        n = int(doc["n"])
        if n < 2:
            raise ValueError("boundary data need n >= 2")
        m = n - 1
        return cls(n, _exact_array(doc["levi"], (m, m)),
                   _exact_array(doc["tw_torsion"], (m, m)),
                   _exact_array(doc["cr_nijenhuis"], (m, m, m)),
                   _exact_array(doc["tw_connection"], (m, 2 * m + 1, m)))

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def to_json(self):
        return {"n": self.n, "levi": _serialize(self.levi),
                "tw_torsion": _serialize(self.tw_torsion),
                "cr_nijenhuis": _serialize(self.cr_nijenhuis),
                "tw_connection": _serialize(self.tw_connection)}

    def arrays(self, be):
        """The four data arrays converted to backend scalars."""
        return tuple(be.convert(a) for a in
                     (self.levi, self.tw_torsion, self.cr_nijenhuis, self.tw_connection))

    def consistency(self):
        """Exact residuals of the algebraic conditions on the data (all must vanish)."""
        be = SeriesBackend(self.n, 0)
        hhat, A, Nh, _ = self.arrays(be)
        conj = be.conj
        res = {"levi_hermitian": be.maxabs(hhat - conj(hhat).T),
               "torsion_symmetric": be.maxabs(A - A.T),
               "nijenhuis_skew": be.maxabs(Nh + np.swapaxes(Nh, 1, 2))}
        eig = np.linalg.eigvalsh(be.to_complex(hhat))
        res["levi_positive"] = 0.0 if eig.min() > 0 else float(-eig.min() + 1)
        gam = _boundary_connection(self, be)
        lev = _levi_full(self, be)
        # nabla h = 0: Y_mu(h(Z_b, Zbar_c)) - h(nabla Z_b, Zbar_c) - h(Z_b, nabla Zbar_c)
        res["metric_compatible"] = be.maxabs(np.einsum("dab,dc->abc", gam, lev)
                                             + np.einsum("dac,bd->abc", gam, lev))
        C = boundary_brackets(self, be)
        res["jacobi"] = be.maxabs(jacobi_residual(C))
        return res

    @classmethod
    def from_brackets(cls, n, C):
        """Recover the data of a homogeneous structure from its brackets.

        ``C[c, a, b]`` are the structure constants of the frame ``(T, Z.., Zbar..)``.
        The Levi block is read off ``[Z_a, Zbar_b]``; connection, torsion and
        Nijenhuis tensor solve the (real-linear) structure equations exactly.
        Raises ``ValueError`` if the brackets are not of that form.
        """
        m = n - 1
        be = SeriesBackend(n, 0)
        C = be.convert(C)
        i = be.scalar(1j)
        levi = C[0, 1:m + 1, m + 1:] * i / be.scalar(2)
        shapes = ((m, 2 * m + 1, m), (m, m), (m, m, m))
        sizes = [int(np.prod(sh)) for sh in shapes]
        zero = (Fraction(0), Fraction(0))

        def build(x):
            parts, k = [], 0
            for sh, sz in zip(shapes, sizes):
                arr = _filled(sh, zero)
                for idx in np.ndindex(sh):
                    arr[idx] = (x[2 * k], x[2 * k + 1])
                    k += 1
                parts.append(arr)
            lv = _filled((m, m), zero)
            for idx in np.ndindex(lv.shape):
                lv[idx] = gauss_to_pair(levi[idx])
            tw = cls(n, lv, parts[1], parts[2], parts[0])
            A, Nh = be.convert(parts[1]), be.convert(parts[2])
            gam = _boundary_connection(tw, be)
            lev = _levi_full(tw, be)
            res = [boundary_brackets(tw, be) - C, A - A.T, Nh + np.swapaxes(Nh, 1, 2),
                   np.einsum("dab,dc->abc", gam, lev) + np.einsum("dac,bd->abc", gam, lev)]
            flat = []
            for r in res:
                for v in r.ravel():
                    re, im = gauss_to_pair(v)
                    flat += [re, im]
            return tw, flat

        nvar = 2 * sum(sizes)
        _, r0 = build([Fraction(0)] * nvar)
        cols = []
        for j in range(nvar):
            e = [Fraction(0)] * nvar
            e[j] = Fraction(1)
            cols.append([a - b for a, b in zip(build(e)[1], r0)])
        M = sympy.Matrix(len(r0), nvar, lambda r, c: sympy.Rational(cols[c][r]))
        rhs = sympy.Matrix([-sympy.Rational(v) for v in r0])
        try:
            sol, free = M.gauss_jordan_solve(rhs)
        except ValueError:
            raise ValueError("brackets are not those of a compatible almost CR structure") from None
        if free.shape[0]:
            sol = sol.subs({f: 0 for f in free})
        x = [Fraction(int(v.p), int(v.q)) for v in sol]
        tw = build(x)[0]
        tw.check()
        return tw

    def check(self):
        bad = {k: v for k, v in self.consistency().items() if v != 0}
        if bad:
            raise ValueError(f"inconsistent boundary data: {bad}")


def _filled(shape, value):
    out = np.empty(shape, dtype=object)
    for idx in np.ndindex(shape):
        out[idx] = value
    return out


def _bar_index(m):
    """Conjugation permutation of boundary indices ``(T, Z.., Zbar..)``."""
    return np.array([0] + list(range(m + 1, 2 * m + 1)) + list(range(1, m + 1)))


def _levi_full(tw, be):
    """Levi form ``h(Y_a, Y_b) = 2 hhat`` on the mixed blocks, zero elsewhere (bilinear)."""
    m = tw.m
    hhat = be.convert(tw.levi)
    two = be.scalar(2)
    out = be.zeros((2 * m + 1, 2 * m + 1))[0]
    out[1:m + 1, m + 1:] = hhat * two
    out[m + 1:, 1:m + 1] = hhat.T * two
    return out


def _boundary_connection(tw, be):
    """``gam[c, a, b]``: coefficient of ``Y_c`` in ``nabla_{Y_a} Y_b`` (T is parallel)."""
    m = tw.m
    conn = be.convert(tw.tw_connection)
    gam = be.zeros((2 * m + 1,) * 3)[0]
    bar = _bar_index(m)
    gam[1:m + 1, :, 1:m + 1] = conn
    gam[m + 1:, :, m + 1:] = be.conj(conn)[:, bar, :]
    return gam


def boundary_brackets(tw, be):
    """``C[c, a, b]`` with ``[Y_a, Y_b] = C[c, a, b] Y_c`` from the structure equations."""
    m = tw.m
    size = 2 * m + 1
    hhat, A, Nh, _ = tw.arrays(be)
    i = be.scalar(1j)
    h = hhat * be.scalar(2)
    hinv = be.inv(be.lift(h))[0]  # hinv[b, a] inverse of h[a, b]
    # A_a^cbar = A_{ab} h^{b cbar}; index the result [a, c]
    a_up = np.einsum("ab,bc->ac", A, hinv.T)
    theta = be.zeros((size,) * 3)[0]
    U = slice(1, m + 1)
    B = slice(m + 1, size)
    theta[0, U, B] = i * h
    theta[0, B, U] = -i * h.T
    # Theta^cbar(Z_a, T) = -A_a^cbar and conjugate
    theta[B, U, 0] = -a_up.T
    theta[B, 0, U] = a_up.T
    theta[U, B, 0] = -be.conj(a_up).T
    theta[U, 0, B] = be.conj(a_up).T
    theta[B, U, U] = Nh
    theta[U, B, B] = be.conj(Nh)
    gam = _boundary_connection(tw, be)
    return gam - np.swapaxes(gam, 1, 2) - theta


def jacobi_residual(C):
    """``J[e, a, b, c] = sum_cyclic C[e, a, d] C[d, b, c]`` for constant structure constants."""
    x = np.einsum("ead,dbc->eabc", C, C)
    return x + np.einsum("eabc->ebca", x) + np.einsum("eabc->ecab", x)


def model_brackets(tw, be):
    """Structure functions ``C0[nu, mu, rho]`` of the model frame as a series (degrees 0..2)."""
    n = tw.n
    Cb = boundary_brackets(tw, be)
    dim = 2 * n
    C0 = be.zeros((dim,) * 3)
    half, i = be.scalar(Fraction(1, 2)), be.scalar(1j)
    one = be.scalar(1)
    z0, zb0 = 0, n
    # model index of boundary H-index: Z_a -> a, Zbar_a -> n + a
    hidx = list(range(1, n)) + list(range(n + 1, 2 * n))

    def put(deg, nu, mu, rho, v):
        if deg <= be.max_degree:
            C0[deg, nu, mu, rho] = C0[deg, nu, mu, rho] + v
            C0[deg, nu, rho, mu] = C0[deg, nu, rho, mu] - v

    put(0, z0, z0, zb0, -one)
    put(0, zb0, z0, zb0, one)
    for bi, mb in enumerate(hidx, start=1):
        put(0, mb, z0, mb, half)
        put(0, mb, zb0, mb, half)
        for ci, mc in enumerate(hidx, start=1):
            put(2, mc, z0, mb, i * Cb[ci, 0, bi])
            put(2, mc, zb0, mb, -i * Cb[ci, 0, bi])
    inv2i = be.scalar(Fraction(1, 2)) / i
    for ai, ma in enumerate(hidx, start=1):
        for bi, mb in enumerate(hidx, start=1):
            if ai >= bi:
                continue
            t = Cb[0, ai, bi]
            put(0, z0, ma, mb, t * inv2i)
            put(0, zb0, ma, mb, -t * inv2i)
            for ci, mc in enumerate(hidx, start=1):
                put(1, mc, ma, mb, Cb[ci, ai, bi])
    return C0


def model_metric(tw, be):
    """Gram matrix of the model metric in the model frame (constant)."""
    n = tw.n
    hhat = be.convert(tw.levi)
    G = be.zeros((2 * n, 2 * n))
    one = be.scalar(1)
    G[0, 0, n] = one
    G[0, n, 0] = one
    G[0, 1:n, n + 1:] = hhat
    G[0, n + 1:, 1:n] = hhat.T
    return G


def model_geometry(tw, max_degree=None, exact=True, frame=None, metric=None):
    """Series ``Geometry`` of the model (or of ``frame``/``metric`` over the model frame)."""
    n = tw.n
    be = SeriesBackend(n, 2 * n if max_degree is None else max_degree, exact=exact)
    C0 = model_brackets(tw, be)
    G0 = model_metric(tw, be) if metric is None else be.coerce(metric)
    M = be.identity(2 * n) if frame is None else be.coerce(frame)
    G = be.einsum("am,mn,bn->ab", M, G0, M)
    return cn.Geometry(be, n, M, G, C0=C0)


def structure(geom):
    """Ehresmann-Libermann data of a series geometry as a ``variational.Structure``."""
    el, tors = cn.ehresmann_libermann(geom)
    return va.Structure(geom, el, tors)


# -- complex hyperbolic space -------------------------------------------------

def chn_data(n):
    if n < 2:
        raise ValueError("complex hyperbolic model needs n >= 2")
    return TWBoundaryData.heisenberg(n)


def chn_christoffels(n):
    """Ehresmann-Libermann (= Chern) coefficients of CH^n in the model frame, exact."""
    geom = model_geometry(chn_data(n), max_degree=0)
    el, _ = cn.ehresmann_libermann(geom)
    return el


def einstein_defect(struct, lam):
    """``Ric - lam g`` on the mixed block, as a series array."""
    n = struct.n
    ric = cn.curvature(struct.el).ricci[..., :n, n:]
    return ric - struct.geom.G[..., :n, n:] * struct.be.scalar(lam)


# -- indicial data ------------------------------------------------------------

@dataclass
class IndicialData:
    n: int
    polynomials: dict
    roots: dict
    radius: float
    exact_roots: dict

    def to_json(self):
        return {"n": self.n, "polynomials": self.polynomials,
                "roots": {k: [float(r) for r in v] for k, v in self.roots.items()},
                "exact_roots": self.exact_roots, "radius": self.radius}


def indicial_constants(n):
    """Constant terms ``c`` in ``s^2 - 2ns - c`` for the (0,a) and (a,b) blocks."""
    return {"0a": 2 * n + 5, "ab": 8}


# P_S(x^s A) = INDICIAL_SCALE * (s^2 - 2ns - c) x^s A on CH^n, up to tangential terms
INDICIAL_SCALE = Fraction(-1, 8)


def indicial_data(n):
    if n < 2:
        raise ValueError("indicial data need n >= 2")
    s = sympy.Symbol("s")
    polys, roots, exact = {}, {}, {}
    for block, c in indicial_constants(n).items():
        p = s ** 2 - 2 * n * s - c
        polys[block] = [1, -2 * n, -c]
        rs = sorted(sympy.solve(p, s), key=lambda r: float(r))
        roots[block] = [float(r) for r in rs]
        exact[block] = [str(r) for r in rs]
    radius = min(abs(r - n) for rs in roots.values() for r in rs)
    return IndicialData(n, polys, roots, float(radius), exact)


def _shifted_connection(el, s):
    be = el.geom.be
    exact = isinstance(s, (int, Fraction))
    if exact != be.exact:
        raise ValueError("rational s needs the exact backend, real s the float backend")
    geom = el.geom.with_backend(be.with_offset(s))
    return cn.ConnectionData(geom, el.gamma, el.name)


@functools.lru_cache(maxsize=None)
def _model_connection(n, exact):
    geom = model_geometry(chn_data(n), max_degree=0, exact=exact)
    return cn.ehresmann_libermann(geom)


def indicial_operator(n, s, exact=None):
    """The map ``A0 -> P_S(x^s A0)`` at CH^n, returned as a callable on (2,0) blocks.

    The output is the coefficient of ``x^s``; tangential derivatives vanish
    because ``A0`` is constant in the model frame.
    """
    if exact is None:
        exact = isinstance(s, (int, Fraction))
    el, tors = _model_connection(n, exact)
    shifted = _shifted_connection(el, s)
    struct = va.Structure(shifted.geom, shifted, tors)
    be = shifted.geom.be
    lam = -(n + 1)

    def apply(block):
        a = struct.real_full(be.lift(block))
        return va.linearized_ps(struct, a, lam=lam)[0]

    return apply, be


def radial_indicial_check(n, s, scale=INDICIAL_SCALE):
    """Residuals of ``P_S(x^s A) - scale (s^2 - 2ns - c) x^s A`` for unit A in each block.

    Returns ``{"0a": r, "ab": r}``; the (a,b) block needs two tangential indices
    and is reported as ``None`` when ``n = 2``.
    """
    apply, be = indicial_operator(n, s)
    consts = indicial_constants(n)
    out = {}
    for block, (i, j) in (("0a", (0, 1)), ("ab", (1, 2))):
        if j >= n:
            out[block] = None
            continue
        a0 = np.zeros((n, n), dtype=object)
        a0[...] = 0
        a0[i, j], a0[j, i] = 1, -1
        a0 = be.convert(a0)
        poly = be.scalar(s) * be.scalar(s) - be.scalar(2 * n) * be.scalar(s) - be.scalar(consts[block])
        expected = a0 * (poly * be.scalar(scale))
        out[block] = be.maxabs(apply(a0) - expected)
    return out


def indicial_value(n, s, block="0a"):
    """The scalar ``k`` with ``P_S(x^s A) = k x^s A`` for a unit A in ``block``."""
    apply, be = indicial_operator(n, s)
    i, j = (0, 1) if block == "0a" else (1, 2)
    a0 = np.zeros((n, n), dtype=object)
    a0[...] = 0
    a0[i, j], a0[j, i] = 1, -1
    return apply(be.convert(a0))[i, j]


# -- model structure -----------------------------------------------------------

@dataclass
class ModelStructure:
    tw: TWBoundaryData
    geometry: object
    struct: object
    einstein_constant: int

    @property
    def connection(self):
        return self.struct.el

    @property
    def torsion(self):
        return self.struct.tors

    def s_series(self):
        return va.s_tensor(self.struct)


def model_structure(tw, max_degree=None):
    """Model pair ``(g_{theta,gamma}, J_{theta,gamma})`` of the boundary data, on series."""
    tw.check()
    geom = model_geometry(tw, max_degree=max_degree)
    st = structure(geom)
    return ModelStructure(tw, geom, st, -(tw.n + 1))


def torsion_table(ms):
    """The predicted low-order torsion: ``N^cbar_{0b} = i x^2 A_b^cbar``, ``N^cbar_{ab} = x Nhat``."""
    be = ms.geometry.be
    tw = ms.tw
    n = tw.n
    hhat, A, Nh, _ = tw.arrays(be)
    h = hhat * be.scalar(2)
    hinv = be.inv(be.lift(h))[0]
    a_up = np.einsum("ab,bc->ac", A, hinv.T)  # A_b^cbar as [b, c]
    dim = 2 * n
    N = be.zeros((dim,) * 3)
    i = be.scalar(1j)
    for b in range(1, n):
        for c in range(1, n):
            N[2, n + c, 0, b] = i * a_up[b - 1, c - 1]
            N[2, n + c, b, 0] = -i * a_up[b - 1, c - 1]
            for a in range(1, n):
                N[1, n + c, a, b] = Nh[c - 1, a - 1, b - 1]
    # conjugate block N^c_{abar bbar}
    bar = np.r_[n:dim, 0:n]
    return N + be.conj(N)[:, bar][:, :, bar][:, :, :, bar]
