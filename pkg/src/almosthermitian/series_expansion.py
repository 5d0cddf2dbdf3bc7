"""Order-by-order construction of critical almost complex structures near the boundary.

Everything lives on the exact series backend in the model frame ``Z`` of
:mod:`ach_model`.  A metric series is the Gram matrix ``g[a, b] = g(Z_a, Z_b)``;
an almost complex structure series is the endomorphism ``J[rho, nu]`` with
``J Z_nu = J[rho, nu] Z_rho``.  The model structure is ``J0 = diag(i, .., -i, ..)``.

Given ``J``, the adapted frame is ``E_i = 1/2 (1 - iJ) Z_i`` (and conjugates),
which equals ``Z`` at degree 0, so (2,0) tensors of ``J`` and of ``J0`` agree
in their leading coefficient.
"""

import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import ach_model as am
from . import connections as cn
from . import variational as va
from .backends import SeriesBackend


@dataclass
class SeriesTensor:
    """Series of constant frame arrays: ``data[k]`` multiplies ``x**k``."""

    data: np.ndarray
    be: SeriesBackend

    @property
    def max_degree(self):
        return self.be.max_degree

    @property
    def coefficients(self):
        return {k: self.data[k] for k in range(len(self.data))}

    def __add__(self, other):
        return SeriesTensor(self.data + other.data, self.be)

    def __sub__(self, other):
        return SeriesTensor(self.data - other.data, self.be)

    def __matmul__(self, other):
        return SeriesTensor(self.be.matmul(self.data, other.data), self.be)

    def truncated(self, degree):
        return SeriesTensor(self.be.truncate(self.data, degree), self.be)

    def lowest_degree(self):
        degs = self.be.nonzero_degrees(self.data)
        return min(degs) if degs else None

    def to_json(self):
        return {"max_degree": self.max_degree,
                "coefficients": {str(k): am._serialize(self.data[k])
                                 for k in self.be.nonzero_degrees(self.data)}}

    @classmethod
    def from_json(cls, doc, be=None, shape=None):
        if isinstance(doc, str):
            doc = json.loads(doc)
        coeffs = doc["coefficients"]
        if be is None:
            raise ValueError("a series backend is needed to read a series")
        if shape is None:
            shape = np.shape(next(iter(coeffs.values())))[:-1] if coeffs else None
        out = be.zeros(shape)
        for k, c in coeffs.items():
            k = int(k)
            if k > be.max_degree:
                continue
            out[k] = be.convert(am._exact_array(c, shape))
        return cls(out, be)


@dataclass
class ExpansionState:
    l: int
    J: np.ndarray
    S: np.ndarray
    orders: list = field(default_factory=list)


# -- basic series objects -----------------------------------------------------

def _bar(n):
    return np.r_[n:2 * n, 0:n]


def model_j(be, n):
    dim = 2 * n
    j0 = np.zeros((dim, dim), dtype=complex)
    j0[:n, :n] = 1j * np.eye(n)
    j0[n:, n:] = -1j * np.eye(n)
    return be.lift(j0)


def adapted_frame(J, be, n):
    """``M[a, mu]`` of ``E_i = 1/2 (1 - iJ) Z_i`` and ``E_ibar = conj(E_i)``."""
    proj = (be.identity(2 * n) - J * be.scalar(1j)) * be.scalar(Fraction(1, 2))
    M = be.zeros((2 * n, 2 * n))
    M[:, :n, :] = np.swapaxes(proj, 1, 2)[:, :n, :]
    M[:, n:, :] = be.conj(M[:, :n, :])[:, :, _bar(n)]
    return M


def geometry(J, g, tw, be):
    n = tw.n
    M = adapted_frame(J, be, n)
    G = be.einsum("am,mn,bn->ab", M, g, M)
    return cn.Geometry(be, n, M, G, C0=am.model_brackets(tw, be))


def structure(J, g, tw, be):
    return am.structure(geometry(J, g, tw, be))


def s_series(J, g, tw, be):
    """(2,0) block of ``S`` for ``(g, J)``, in the adapted frame of ``J``."""
    return va.s_tensor(structure(J, g, tw, be))


def model_metric_series(tw, max_degree=None):
    be = SeriesBackend(tw.n, 2 * tw.n if max_degree is None else max_degree)
    return am.model_metric(tw, be)


def perturbed_metric(tw, degrees, seed=0, amplitude=Fraction(1, 10), max_degree=None):
    """Model metric plus random real symmetric rational terms at the given degrees.

    The perturbations are not J0-Hermitian, so the compatibility correction has
    work to do.  Reproducible for a fixed seed.
    """
    n = tw.n
    be = SeriesBackend(n, 2 * n if max_degree is None else max_degree)
    g = am.model_metric(tw, be)
    rng = np.random.default_rng(seed)
    for d in degrees:
        X = np.empty((2 * n, 2 * n), dtype=object)
        for idx in np.ndindex(X.shape):
            X[idx] = tuple(Fraction(int(rng.integers(-4, 5)), int(rng.integers(1, 5)))
                           for _ in range(2))
        X = be.convert(X)
        X = X + X.T
        X = X + be.conj(X)[_bar(n)][:, _bar(n)]
        g[d] = g[d] + X * be.scalar(amplitude)
    return g


def compatibility_residuals(J, g, be):
    """``J^2 + 1`` and ``g(J., J.) - g`` as series."""
    dim = J.shape[-1]
    sq = be.matmul(J, J) + be.identity(dim)
    gjj = be.einsum("ra,rs,sb->ab", J, g, J) - g
    return sq, gjj


# -- the three steps of one order ----------------------------------------------

def compatibility_correction(J_trc, g, l, be):
    """Degree-``l`` correction ``B`` making ``J_trc + x^l B`` metric-compatible at degree ``l``.

    With ``D`` the degree-``l`` coefficient of ``g(J.,J.) - g``, ``B`` is the
    unique endomorphism with ``g(J0., B.)`` symmetric and equal to ``-D/2``.
    """
    if any(d < l for d in be.nonzero_degrees(compatibility_residuals(J_trc, g, be)[1])):
        raise ValueError("J_trc is not compatible below the requested degree")
    D = compatibility_residuals(J_trc, g, be)[1][l]
    j0, g0inv = J_trc[0], be.inv(be.lift(g[0]))[0]
    return np.einsum("ab,bc,cd->ad", j0, g0inv, D) * be.scalar(Fraction(-1, 2))


def project_compatible(J1, g, be):
    """Nearest compatible almost complex structure ``J_s (-J_s^2)^(-1/2)``.

    ``J_s`` is the g-skew part of ``J1``; the square root is a binomial series,
    so only degrees where ``J1`` fails to be compatible are changed.
    """
    dim = J1.shape[-1]
    ginv = be.inv(g)
    js = (J1 - be.einsum("ab,cb,cd->ad", ginv, J1, g)) * be.scalar(Fraction(1, 2))
    nil = -be.matmul(js, js) - be.identity(dim)
    root = be.identity(dim)
    term = be.identity(dim)
    coeff = Fraction(1)
    for k in range(1, be.max_degree + 1):
        term = be.matmul(term, nil)
        if not be.nonzero_degrees(term):
            break
        coeff *= Fraction(-1, 2) - (k - 1)
        coeff /= k
        root = root + term * be.scalar(coeff)
    return be.matmul(js, root)


def indicial_denominators(n, l):
    c = am.indicial_constants(n)
    return {block: l * l - 2 * n * l - cst for block, cst in c.items()}


def order_reduction(S, n, l, be):
    """(2,0) block ``A`` at degree ``l`` with ``S_l + P_S(x^l A)_l = 0``.

    The linear response at degree ``l`` is the indicial multiple
    ``INDICIAL_SCALE (l^2 - 2nl - c)``, with ``c`` depending on the block.
    """
    if not 1 <= l:
        raise ValueError("order reduction needs l >= 1")
    if any(d < l for d in be.nonzero_degrees(S)):
        raise ValueError(f"S does not vanish below degree {l}")
    den = indicial_denominators(n, l)
    assert all(v != 0 for v in den.values()), den
    scale = am.INDICIAL_SCALE
    A = np.array(S[l], dtype=object if be.exact else complex)
    for i in range(n):
        for j in range(n):
            block = "0a" if 0 in (i, j) else "ab"
            A[i, j] = S[l][i, j] * be.scalar(Fraction(-1) / (scale * den[block]))
    return A


def retract_series(J, g, A, l, tw, be):
    """Move ``J`` along the real 2-form with (2,0) block ``x^l A`` (adapted frame of ``J``).

    ``J' = Q J Q^-1`` with ``Q = exp(K)``, ``K = -1/2 Jdot J``, ``Jdot = g^-1 a``;
    ``Q`` is g-orthogonal, so ``J'`` stays exactly compatible.
    """
    n = tw.n
    M = adapted_frame(J, be, n)
    theta = be.inv(M)  # theta[mu, a]
    full = be.zeros((2 * n, 2 * n))[0]
    full[:n, :n] = A
    full[n:, n:] = be.conj(A)
    a = be.shift(be.lift(full), l)
    a_model = be.einsum("ma,nb,ab->mn", theta, theta, a)
    jdot = be.einsum("rs,ns->rn", be.inv(g), a_model)
    K = be.matmul(jdot, J) * be.scalar(Fraction(-1, 2))
    Q, Qinv = be.expm(K), be.expm(-K)
    return be.matmul(be.matmul(Q, J), Qinv)


# -- the recursion -------------------------------------------------------------

def solve_expansion(g_series, tw, split="truncate", max_degree=None):
    """Build ``J`` with ``S = O(x^{2n})`` for the metric series ``g_series``.

    ``split="truncate"`` follows the textbook recursion: at each order the
    current ``J`` is truncated below ``l``, corrected by ``B`` and projected back
    to a compatible structure before the order reduction.  ``split="carry"``
    keeps all degrees of the previous ``J`` and only projects it.  Both
    must give the same result modulo ``x^{2n}``.
    """
    tw.check()
    n = tw.n
    be = SeriesBackend(n, 2 * n if max_degree is None else max_degree)
    g = be.coerce(g_series) if np.ndim(g_series) == 3 else be.lift(g_series)
    J = model_j(be, n)
    orders = []
    top = min(2 * n - 1, be.max_degree)
    for l in range(1, top + 1):
        rec = {"l": l}
        if split == "truncate":
            J_trc = be.truncate(J, l - 1)
            B = compatibility_correction(J_trc, g, l, be)
            J1 = J_trc + be.shift(be.lift(B), l)
            J = project_compatible(J1, g, be)
            rec["B"] = B
        elif split == "carry":
            J = project_compatible(J, g, be)
        else:
            raise ValueError(f"unknown split {split!r}")
        S = s_series(J, g, tw, be)
        A = order_reduction(S, n, l, be)
        rec["S_l"] = S[l]
        rec["A"] = A
        J = retract_series(J, g, A, l, tw, be)
        orders.append(rec)
    S = s_series(J, g, tw, be)
    return ExpansionState(top + 1, J, S, orders)


def verify_state(state, g_series, tw):
    """Independent checks of a final state: compatibility and vanishing of ``S``.

    ``S`` is recomputed from ``J`` alone on a fresh backend.
    """
    n = tw.n
    be = SeriesBackend(n, len(state.J) - 1)
    g = be.coerce(g_series) if np.ndim(g_series) == 3 else be.lift(g_series)
    J = be.coerce(state.J)
    sq, gjj = compatibility_residuals(J, g, be)
    S = s_series(J, g, tw, be)
    upto = state.l - 1
    low = [d for d in be.nonzero_degrees(S) if d <= upto]
    return {"J_squared": be.maxabs(sq), "metric_invariance": be.maxabs(gjj),
            "S_low_degrees_nonzero": low, "S_vanishes": not low,
            "S_lowest_degree": min(be.nonzero_degrees(S), default=None)}


def second_variation_samples(n, degrees=(1, 2, 3), seed=0):
    """Second-variation samples at CH^n for fitting ``fit_second_variation_table``.

    For each degree ``s`` and block, ``J`` is moved along ``x^s A0`` by
    ``+-h`` and the Euler-Lagrange terms are differenced.  At the critical
    model every term vanishes, so no frame change is needed, and the
    degree-``s`` coefficient is linear in ``h``: the difference is exact up to
    rounding.  Returns ``[(eddot, basis), ...]`` with degree-``s`` coefficients.
    """
    tw = am.TWBoundaryData.heisenberg(n)
    rng = np.random.default_rng(seed)
    lam = -(n + 1)
    h = 1e-3
    out = []
    for s in degrees:
        be = SeriesBackend(n, s + 1, exact=False)
        g = am.model_metric(tw, be)
        J = model_j(be, n)
        blocks = [(0, j) for j in range(1, n)] + [(i, j) for i in range(1, n)
                                                  for j in range(i + 1, n)]
        for i, j in blocks:
            a0 = np.zeros((n, n), dtype=complex)
            v = complex(*rng.standard_normal(2))
            a0[i, j], a0[j, i] = v, -v
            el = {}
            for sign in (1, -1):
                el[sign] = va.termwise_el(structure(retract_series(J, g, sign * h * a0, s, tw, be),
                                                    g, tw, be))
            eddot = {k: (el[1][k] - el[-1][k])[s] / (2 * h) for k in el[1]}
            full = be.zeros((2 * n, 2 * n))[0]
            full[:n, :n] = a0
            full[n:, n:] = a0.conj()
            st0 = structure(J, g, tw, be)
            basis = va.second_variation_basis(st0, be.shift(be.lift(full), s), lam=lam)
            out.append((eddot, {k: v[s] for k, v in basis.items()}))
    return out
