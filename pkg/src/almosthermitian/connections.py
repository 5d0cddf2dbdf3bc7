"""Hermitian connections of an almost Hermitian structure, torsion and curvature.

Everything is computed in an adapted frame ``E_a`` (``a < n`` spans the
(1,0)-vectors, ``a >= n`` their conjugates) over a scalar backend, so the
same code serves lattice fields and exact formal series.

Index conventions for full-frame arrays:

* ``gamma[c, a, b]`` is the coefficient of ``E_c`` in ``nabla_{E_a} E_b``.
* ``C[c, a, b]`` are structure functions, ``[E_a, E_b] = C[c, a, b] E_c``.
* torsion ``theta[c, a, b] = gamma[c, a, b] - gamma[c, b, a] - C[c, a, b]``.
* ``R[i, j, a, b]`` is the coefficient of ``E_j`` in
  ``(nabla_a nabla_b - nabla_b nabla_a - nabla_[E_a, E_b]) E_i``.
* ``N[c, a, b]`` and ``T[c, a, b]`` carry the upper index first; indices are
  raised and lowered in place, so ``n_low[a, b, c] = G[a, d] N[d, b, c]``
  and likewise ``t_low``.
"""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .backends import LatticeBackend

LETTERS = "pqrstuvwxyz"


def types(n):
    return np.array([0] * n + [1] * n)


def type_mask(n, pattern):
    """0/1 array over full indices whose entries keep the given type pattern.

    ``pattern`` is a string over ``U``/``B`` (fixed type) or lowercase letters
    (positions with the same letter share a type, different letters differ).
    """
    t = types(n)
    rank = len(pattern)
    grids = np.meshgrid(*([t] * rank), indexing="ij")
    mask = np.ones((2 * n,) * rank, dtype=bool)
    letters = {}
    for pos, ch in enumerate(pattern):
        if ch == "U":
            mask &= grids[pos] == 0
        elif ch == "B":
            mask &= grids[pos] == 1
        elif ch == "*":
            continue
        else:
            letters.setdefault(ch, []).append(pos)
    for ch, positions in letters.items():
        for p in positions[1:]:
            mask &= grids[p] == grids[positions[0]]
    names = list(letters)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            mask &= grids[letters[a][0]] != grids[letters[b][0]]
    return mask.astype(int)


class Geometry:
    """Frame ``E_a = M[a, mu] D_mu`` with Gram matrix ``G[a, b] = g(E_a, E_b)``.

    ``D_mu`` are the backend's basic derivations with constant structure
    functions ``C0[nu, mu, rho]`` (zero for coordinate vector fields).
    """

    def __init__(self, backend, n, M, G, C0=None, constant_metric=False):
        be = self.be = backend
        self.n = n
        self.M = M
        self.G = G
        self.Ginv = be.inv(G)
        self.Minv = be.inv(M)
        EM = self.d(M)  # E_a(M[b, nu])
        cv = EM - np.swapaxes(EM, be.nlead, be.nlead + 1)
        if C0 is not None:
            cv = cv + be.einsum("am,br,nmr->abn", M, M, C0)
        self.C = be.einsum("abn,nc->cab", cv, self.Minv)
        self.dG = None if constant_metric else self.d(G)
        self.half = be.scalar(Fraction(1, 2))
        self.i = be.scalar(1j)

    @property
    def dim(self):
        return 2 * self.n

    def rank(self, t):
        return np.ndim(t) - self.be.nlead

    def d(self, f):
        """Frame derivatives ``out[a, ...] = E_a(f[...])``."""
        r = self.rank(f)
        idx = LETTERS[:r]
        return self.be.einsum(f"am,m{idx}->a{idx}", self.M, self.be.grad(f))

    def const(self, c):
        """Constant array usable in elementwise products with backend fields."""
        if self.be.exact:
            return self.be.convert(c)
        return np.asarray(c)

    def lower(self, t, slot):
        r = self.rank(t)
        idx = list(LETTERS[:r])
        src = "".join(idx)
        idx[slot] = "z"
        return self.be.einsum(f"z{src[slot]},{src}->{''.join(idx)}", self.G, t)

    def raise_(self, t, slot):
        r = self.rank(t)
        idx = list(LETTERS[:r])
        src = "".join(idx)
        idx[slot] = "z"
        return self.be.einsum(f"z{src[slot]},{src}->{''.join(idx)}", self.Ginv, t)

    def with_backend(self, backend):
        """Same geometric data used with another backend (e.g. a shifted series)."""
        new = object.__new__(Geometry)
        new.__dict__.update(self.__dict__)
        new.be = backend
        return new


def lattice_geometry(pair, scheme="order4"):
    be = LatticeBackend(pair.lattice, scheme)
    return Geometry(be, pair.n, pair.frame, pair.frame_metric(), constant_metric=True)


def as_geometry(obj, scheme="order4"):
    if isinstance(obj, Geometry):
        return obj
    return lattice_geometry(obj, scheme)


@dataclass
class ConnectionData:
    geom: Geometry
    gamma: np.ndarray
    name: str = ""

    @property
    def C(self):
        return self.geom.C

    def torsion(self):
        return torsion_of(self.geom, self.gamma)

    def nabla(self, t, variances):
        return covariant_derivative(t, self, variances)

    def block(self, pattern):
        """Coefficient block ``gamma^c_ab`` for a bar pattern such as ``"UBU"`` (c, a, b)."""
        return block(self.gamma, pattern, self.geom.n)


@dataclass
class TorsionData:
    N: np.ndarray
    T: np.ndarray
    tau: np.ndarray
    n_low: np.ndarray
    t_low: np.ndarray

    def blocks(self, n):
        """Declared blocks as ``FrameTensor`` fields: N^kbar_ij, T^k_ij, tau_i."""
        from .frame_tensor import from_full, sig
        return (from_full(self.N, sig("U_d_d"), n), from_full(self.T, sig("u_d_d"), n),
                from_full(self.tau, sig("d"), n))


def torsion_of(geom, gamma):
    return gamma - np.swapaxes(gamma, -1, -2) - geom.C


def levi_civita(pair, scheme="order4"):
    """Levi-Civita coefficients in the adapted frame via the Koszul formula."""
    geom = as_geometry(pair, scheme)
    be = geom.be
    Clow = be.einsum("cd,dab->cab", geom.G, geom.C)
    low = Clow - np.einsum("...bac->...cab", Clow) - np.einsum("...abc->...cab", Clow)
    if geom.dG is not None:
        dG = geom.dG  # dG[a, b, c] = E_a G[b, c]
        low = low + np.einsum("...abc->...cab", dG) + np.einsum("...bac->...cab", dG) - dG
    low = low * geom.half
    gamma = be.einsum("cd,dab->cab", geom.Ginv, low)
    return ConnectionData(geom, gamma, "levi-civita")


def lichnerowicz(pair, scheme="order4", lc=None):
    """Projection of Levi-Civita onto type-preserving coefficients."""
    lc = lc or levi_civita(pair, scheme)
    n = lc.geom.n
    mask = type_mask(n, "x*x")
    return ConnectionData(lc.geom, lc.gamma * mask, "lichnerowicz")


def _torsion_blocks(geom, lich_torsion):
    """N and T (full real tensors) from the Lichnerowicz torsion."""
    n = geom.n
    be = geom.be
    N = lich_torsion * type_mask(n, "yxx")
    low = be.einsum("dc,cab->dab", geom.G, lich_torsion)
    t_low = 2 * np.einsum("...bac->...abc", low) * type_mask(n, "xyy")
    T = be.einsum("cd,dab->cab", geom.Ginv, t_low)
    n_low = be.einsum("ad,dbc->abc", geom.G, N)
    tau = be.einsum("cac->a", T)
    return TorsionData(N, T, tau, n_low, t_low)


def ehresmann_libermann(pair, scheme="order4", lich=None):
    """Hermitian connection with vanishing (1,1) torsion, plus its torsion data."""
    lich = lich or lichnerowicz(pair, scheme)
    geom = lich.geom
    be = geom.be
    tors = _torsion_blocks(geom, lich.torsion())
    # D[c,a,b] = -1/2 T[c,b,a] + 1/2 T_b^c_a
    t_mixed = be.einsum("cd,bda->cab", geom.Ginv, tors.t_low)
    corr = (t_mixed - np.swapaxes(tors.T, -1, -2)) * geom.half
    return ConnectionData(geom, lich.gamma + corr, "ehresmann-libermann"), tors


def tau_up(geom, tors):
    return geom.be.einsum("ab,b->a", geom.Ginv, tors.tau)


def covariant_derivative(t, conn, variances):
    """``out[a, ...] = nabla_a t[...]``; ``variances`` is a string of 'u'/'d' per slot."""
    geom = conn.geom
    be = geom.be
    out = geom.d(t)
    r = len(variances)
    idx = LETTERS[:r]
    for s, v in enumerate(variances):
        rep = idx[:s] + "z" + idx[s + 1:]
        if v == "u":
            out = be.add(out, be.einsum(f"{idx[s]}az,{rep}->a{idx}", conn.gamma, t))
        elif v == "d":
            out = be.sub(out, be.einsum(f"za{idx[s]},{rep}->a{idx}", conn.gamma, t))
        else:
            raise ValueError(f"variance must be 'u' or 'd', got {v!r}")
    return out


@dataclass
class CurvatureData:
    R: np.ndarray
    ricci: np.ndarray
    scalar: np.ndarray


def curvature(conn):
    geom = conn.geom
    be = geom.be
    G = conn.gamma
    dG = geom.d(G)  # dG[a, c, x, y] = E_a gamma[c, x, y]
    R = (np.einsum("...ajbi->...ijab", dG) - np.einsum("...bjai->...ijab", dG)
         + be.einsum("jac,cbi->ijab", G, G) - be.einsum("jbc,cai->ijab", G, G)
         - be.einsum("cab,jci->ijab", geom.C, G))
    n = geom.n
    ricci = be.einsum("kkab->ab", R[..., :n, :n, :, :])
    scalar = be.einsum("ab,ba->", ricci[..., :n, n:], geom.Ginv[..., n:, :n])
    return CurvatureData(R, ricci, scalar)


def cyclic3(x, slots):
    """Sum over cyclic permutations of three slots (no normalizing factor)."""
    nl = x.ndim - 4
    a, b, c = (nl + s for s in slots)
    axes = list(range(x.ndim))
    out = x
    for shift in (1, 2):
        perm = list(axes)
        src = [a, b, c]
        dst = src[shift:] + src[:shift]
        for s, d in zip(src, dst):
            perm[s] = d
        out = out + np.transpose(x, perm)
    return out


def block(x, pattern, n):
    sl = tuple(slice(0, n) if ch == "U" else slice(n, 2 * n) for ch in pattern)
    return x[(Ellipsis,) + sl]


def bianchi_residuals(curv, tors, conn):
    """Max-norm residuals of the four first Bianchi identities (by bidegree)."""
    geom = conn.geom
    be = geom.be
    n = geom.n
    R, N, T = curv.R, tors.N, tors.T
    dT = covariant_derivative(T, conn, "udd")
    dN = covariant_derivative(N, conn, "udd")
    x30 = R - dT - be.einsum("ipj,pkl->jikl", T, T)
    r30 = block(cyclic3(x30, (0, 2, 3)), "UUUU", n)
    r21 = (R - np.einsum("...jikl->...kijl", R)
           - np.einsum("...lijk->...jikl", dT)
           - be.einsum("iql,qjk->jikl", N, N))
    r21 = block(r21, "UUUB", n)
    r12 = R - dN - be.einsum("pkl,ipj->jikl", N, T)
    r12 = block(r12, "UUBB", n)
    x03 = np.einsum("...jikl->...jikl", dN) + be.einsum("ipj,pkl->jikl", N, T)
    r03 = block(cyclic3(x03, (0, 2, 3)), "BUBB", n)
    return {"bianchi_30": be.maxabs(r30), "bianchi_21": be.maxabs(r21),
            "bianchi_12": be.maxabs(r12), "bianchi_03": be.maxabs(r03)}


def fundamental_form(geom):
    """``F[a, b] = g(J E_a, E_b)`` in the adapted frame."""
    n = geom.n
    phase = geom.const(np.array([1j] * n + [-1j] * n)[:, None])
    return geom.G * phase


def exterior_derivative_2form(geom, F):
    """``dF(E_a, E_b, E_c)`` from the invariant formula (no connection needed)."""
    be = geom.be
    dF = geom.d(F)  # dF[a, b, c] = E_a F[b, c]
    CF = be.einsum("dab,dc->abc", geom.C, F)  # F([E_a, E_b], E_c)
    return (dF - np.einsum("...bac->...abc", dF) + np.einsum("...cab->...abc", dF)
            - CF + np.einsum("...acb->...abc", CF) - np.einsum("...bca->...abc", CF))


def alternation_sum(c):
    """Evaluate ``sum c_{abc} theta^a ^ theta^b ^ theta^c`` on frame triples."""
    perms = [("abc", 1), ("bca", 1), ("cab", 1), ("bac", -1), ("acb", -1), ("cba", -1)]
    out = 0
    for p, s in perms:
        out = out + s * np.einsum(f"...{p}->...abc", c)
    return out


def df_closed_form(geom, tors):
    """Closed expression of ``dF`` through N and T, evaluated on frame triples.

    ``dF = -(i/2)(N_ijk th^ijk - T_ibar,j,k th^ibar,j,k + T_i,jbar,kbar th^i,jbar,kbar
    - N_ibar,jbar,kbar th^ibar,jbar,kbar)`` with the determinant wedge convention.
    """
    n = geom.n
    i = geom.i * geom.half
    c = (tors.n_low * type_mask(n, "UUU") - tors.t_low * type_mask(n, "BUU")
         + tors.t_low * type_mask(n, "UBB") - tors.n_low * type_mask(n, "BBB"))
    return alternation_sum(-i * c)


def codifferential_2form(conn_lc, beta):
    """``(d* beta)_b = -g^{ac} nabla_c beta_{ab}`` for the Levi-Civita connection."""
    geom = conn_lc.geom
    d = covariant_derivative(beta, conn_lc, "dd")
    return -geom.be.einsum("ac,cab->b", geom.Ginv, d)


def codifferential_11(el, tors, beta):
    """``(d* beta)_a = (nabla^b + tau^b) beta_{ab}`` for a (1,1)-form, via EL."""
    geom = el.geom
    be = geom.be
    d = covariant_derivative(beta, el, "dd")  # d[c, a, b]
    return be.einsum("bc,cab->a", geom.Ginv, d) + be.einsum("b,ab->a", tau_up(geom, tors), beta)


def form_identities(pair, scheme="order4", rng=None, alpha=None):
    """Residuals of the dF, d*F and divergence identities on a lattice pair."""
    from .lattice import integrate, trig_field
    lc = levi_civita(pair, scheme)
    lich = lichnerowicz(pair, lc=lc)
    el, tors = ehresmann_libermann(pair, lich=lich)
    geom = lc.geom
    be = geom.be
    n = geom.n
    F = fundamental_form(geom)
    dF = exterior_derivative_2form(geom, F)
    closed = df_closed_form(geom, tors)
    r_df = be.maxabs(dF - closed)
    dstar = codifferential_2form(lc, F)
    i = geom.i
    # d*F = i(tau_i th^i - tau_ibar th^ibar), d* the formal adjoint of d
    target = i * tors.tau * geom.const(np.array([1] * n + [-1] * n))
    r_dstar = be.maxabs(dstar - target)
    tau_from_dstar = block(dstar, "U", n) * -1j
    r_tau = be.maxabs(tau_from_dstar - block(tors.tau, "U", n))
    if alpha is None:
        rng = rng or np.random.default_rng(0)
        lat = pair.lattice
        a = trig_field(lat, rng, (n,), modes=((0, 0), (1, 0), (0, 1), (1, -1)),
                       amplitude=1.0)
        alpha = np.concatenate([a, np.zeros_like(a)], axis=-1)
    grad_alpha = covariant_derivative(alpha, el, "d")
    tup = tau_up(geom, tors)
    integrand = be.einsum("ac,ca->", geom.Ginv, grad_alpha) + be.einsum("a,a->", tup, alpha)
    scale = integrate(np.abs(be.full_shape(be.einsum("ac,ca->", geom.Ginv, grad_alpha))),
                      pair.lattice)
    total = integrate(integrand.real, pair.lattice) + 1j * integrate(integrand.imag, pair.lattice)
    r_div = abs(total) / scale
    return {"dF": r_df, "dstarF": r_dstar, "tau_from_dstarF": r_tau, "divergence": r_div}


def change_frame_connection(gamma_t, P, R, geom0):
    """Coefficients in the frame ``E0 = R E_t`` of a connection known in ``E_t = P E0``.

    ``gamma0[c,a,b] = R[a,d] (E_t,d(R[b,f]) + R[b,e] gamma_t[f,d,e]) P[f,c]``.
    """
    be = geom0.be
    # E_t,d = P[d, m] E0_m
    dR = be.einsum("dm,mbf->dbf", P, geom0.d(R))
    inner = dR + be.einsum("be,fde->dbf", R, gamma_t)
    return be.einsum("ad,dbf,fc->cab", R, inner, P)


def change_frame_tensor(t, P, R, variances, be):
    """Components of a tensor in the frame ``E0 = R E_t`` given them in ``E_t``."""
    r = len(variances)
    idx = LETTERS[:r]
    out = t
    for s, v in enumerate(variances):
        rep = idx[:s] + "z" + idx[s + 1:]
        if v == "d":
            out = be.einsum(f"{idx[s]}z,{rep}->{idx}", R, out)
        else:
            out = be.einsum(f"z{idx[s]},{rep}->{idx}", P, out)
    return out
