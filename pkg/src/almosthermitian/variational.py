"""Energies, Euler-Lagrange tensors, variations and a descent driver.

Tensors are full-frame arrays with indices raised and lowered in place:
``nl[a, b, c] = g_{a d} N^d_{b c}``, ``tl`` likewise for T, and a 2-form
``A[a, b] = A(E_a, E_b)``.  A skew tensor like S is returned as its
(2,0) block ``S[i, j]``; ``real_full`` rebuilds the real 2-form.
"""

from dataclasses import dataclass, field

import numpy as np

from . import connections as cn
from .lattice import check_two_form, frame_transition, integrate, retract

LETTERS = cn.LETTERS


class Structure:
    """Ehresmann-Libermann data of one pair plus index gymnastics."""

    def __init__(self, geom, el, tors):
        self.geom = geom
        self.be = geom.be
        self.el = el
        self.tors = tors
        self.n = geom.n
        self.half = geom.half
        self.i = geom.i
        self.Ginv = geom.Ginv
        self.nl = tors.n_low
        self.tl = tors.t_low
        self.tau_up = cn.tau_up(geom, tors)

    @classmethod
    def of_pair(cls, pair, scheme="order4"):
        el, tors = cn.ehresmann_libermann(pair, scheme)
        return cls(el.geom, el, tors)

    # -- helpers ---------------------------------------------------------
    def mask(self, x, pattern):
        return x * cn.type_mask(self.n, pattern)

    def raise_(self, x, *slots):
        for s in slots:
            x = self.geom.raise_(x, s)
        return x

    def nabla(self, x, variances):
        return cn.covariant_derivative(x, self.el, variances)

    def bar(self, x):
        """Components of the complex conjugate tensor (swap barred and unbarred)."""
        r = self.geom.rank(x)
        out = self.be.conj(x)
        for ax in range(out.ndim - r, out.ndim):
            out = np.roll(out, self.n, axis=ax)
        return out

    def realify(self, x):
        return x + self.bar(x)

    def alt(self, x):
        """Weight-one antisymmetrization in the last two slots."""
        return (x - np.swapaxes(x, -1, -2)) * self.half

    def uu(self, x):
        n = self.n
        return x[..., :n, :n]

    def real_full(self, block):
        """Real skew 2-form from its (2,0) block."""
        x = self.be.zeros((2 * self.n, 2 * self.n), lead=block.shape[:block.ndim - 2])
        x[..., :self.n, :self.n] = block
        return self.realify(x)

    def pair_with(self, e_block, a_full):
        """Pointwise ``2 Re(E^{ij} A_ij)`` for a (2,0) block E and a real 2-form A."""
        e = self.raise_(self.real_full(e_block), 0, 1)
        return self.be.einsum("ab,ab->", e, a_full)

    def half_norm(self, x_low):
        """``x_{abc} x^{abc}`` over one type class, i.e. half of the full contraction."""
        r = self.geom.rank(x_low)
        up = self.raise_(x_low, *range(r))
        idx = LETTERS[:r]
        return self.be.einsum(f"{idx},{idx}->", x_low, up) * self.half


def _integral(struct, density, lattice):
    d = struct.be.full_shape(density)
    return integrate(np.real(d), lattice)


# -- energies ---------------------------------------------------------------

@dataclass(frozen=True)
class EnergyCoefficients:
    a: float = 1.0
    b: float = 1.0
    c: float = 0.0
    d: float = 0.5

    def as_tuple(self):
        return (self.a, self.b, self.c, self.d)


STANDARD = EnergyCoefficients()


@dataclass
class DensityRecord:
    n2: np.ndarray
    nsym2: np.ndarray
    nskew2: np.ndarray
    t2: np.ndarray
    tau2: np.ndarray
    ncross: np.ndarray
    lam: float = None

    def combination(self, coeffs):
        return (coeffs.a * self.nsym2 + coeffs.b * self.nskew2 + coeffs.c * self.t2
                + coeffs.d * self.tau2)


def n_parts(struct):
    nl = struct.nl
    swapped = np.swapaxes(nl, -3, -2)
    return (nl + swapped) * struct.half, (nl - swapped) * struct.half


def densities(struct, lam=None):
    nsym, nskew = n_parts(struct)
    be = struct.be
    n2 = struct.half_norm(struct.nl)
    nup = struct.raise_(struct.nl, 0, 1, 2)
    ncross = be.einsum("ijk,jik->", struct.nl, nup) * struct.half
    tau2 = be.einsum("a,a->", struct.tors.tau, struct.tau_up) * struct.half
    return DensityRecord(n2, struct.half_norm(nsym), struct.half_norm(nskew),
                         struct.half_norm(struct.tl), tau2, ncross, lam)


def energy(pair, coeffs=STANDARD, scheme="order4", struct=None):
    struct = struct or Structure.of_pair(pair, scheme)
    return _integral(struct, densities(struct).combination(coeffs), pair.lattice)


# -- Euler-Lagrange tensors --------------------------------------------------

def _div_up(struct, x_low, slot):
    """``(nabla^k + tau^k) x_{... k ...}`` contracting the given slot."""
    be = struct.be
    r = struct.geom.rank(x_low)
    idx = LETTERS[:r]
    d = struct.nabla(x_low, "d" * r)
    out_idx = idx[:slot] + idx[slot + 1:]
    k = idx[slot]
    return (be.einsum(f"{k}z,z{idx}->{out_idx}", struct.Ginv, d)
            + be.einsum(f"{k},{idx}->{out_idx}", struct.tau_up, x_low))


def termwise_el(struct):
    """(2,0) blocks of the Euler-Lagrange tensors of |N_sym|^2, |N_skew|^2, |T|^2, |tau|^2, |N|^2."""
    be = struct.be
    h, i = struct.half, struct.i
    q = h * h
    nl, tl = struct.nl, struct.tl
    nsym, nskew = n_parts(struct)
    t_up = struct.raise_(tl, 1, 2)  # T_j^{kl}
    div_n_first = _div_up(struct, nl, 0)  # (nabla^k + tau^k) N_kij
    div_nskew = _div_up(struct, nskew, 2)  # (nabla^k + tau^k) N_[ij]k
    div_t = _div_up(struct, tl, 0)  # (nabla^kbar + tau^kbar) T_kbar ij

    def nt(x):  # x_[i|kl T_|j]^kl
        return struct.alt(be.einsum("ikl,jkl->ij", x, t_up))

    e_nsym = i * (-q * div_n_first + q * div_nskew + h * nt(nsym))
    e_nskew = i * (q * div_n_first + 3 * q * div_nskew + h * nt(nskew))
    e_t = i * (-div_t + struct.alt(be.einsum("kli,jkl->ij", nl, t_up)) - h * nt(nl))
    dtau = struct.nabla(struct.tors.tau, "d")
    e_tau = i * (struct.alt(dtau)
                 - h * be.einsum("kij,k->ij", nl, struct.tau_up)
                 + h * be.einsum("kij,k->ij", struct.tors.T, struct.tors.tau))
    e_n = i * (div_nskew + h * nt(nl))
    uu = struct.uu
    return {"nsym": uu(e_nsym), "nskew": uu(e_nskew), "T": uu(e_t), "tau": uu(e_tau),
            "N": uu(e_n)}


def s_tensor(struct):
    """(2,0) block of S, assembled directly from its five terms."""
    be = struct.be
    h, i = struct.half, struct.i
    q = h * h
    _, nskew = n_parts(struct)
    t_up = struct.raise_(struct.tl, 1, 2)
    dtau = struct.nabla(struct.tors.tau, "d")
    s = i * (_div_up(struct, nskew, 2)
             + h * struct.alt(dtau)
             + h * struct.alt(be.einsum("ikl,jkl->ij", struct.nl, t_up))
             - q * be.einsum("kij,k->ij", struct.nl, struct.tau_up)
             + q * be.einsum("kij,k->ij", struct.tors.T, struct.tors.tau))
    return struct.uu(s)


def combine_el(terms, coeffs):
    return (coeffs.a * terms["nsym"] + coeffs.b * terms["nskew"] + coeffs.c * terms["T"]
            + coeffs.d * terms["tau"])


def gateaux(struct, e_block, a_full, lattice):
    """``integral 2 Re(E^{ij} A_ij) dV``."""
    return _integral(struct, struct.pair_with(e_block, a_full), lattice)


# -- first variations --------------------------------------------------------

def first_variations(struct, a_full):
    """Derivatives of Gamma (fixed frame), N, T and tau along a variation ``Jdot ~ A``.

    Returns full real arrays in the base frame.
    """
    be = struct.be
    if not be.exact:
        check_two_form(a_full, struct.n, tol=1e-10)
    h, i = struct.half, struct.i
    N, T = struct.tors.N, struct.tors.T
    a = a_full
    a_r1 = struct.raise_(a, 0)  # A^k_lbar
    a_r2 = struct.raise_(a, 1)  # A_j^kbar
    da = struct.nabla(a, "dd")
    da_r2 = struct.nabla(a_r2, "du")
    grad_up_a = be.einsum("kc,cij->kij", struct.Ginv, da)  # nabla^k A_ij
    n_up3 = struct.raise_(N, 2)
    t_up3 = struct.raise_(T, 2)
    nl_r3 = struct.raise_(struct.nl, 2)
    nl_r23 = struct.raise_(struct.nl, 1, 2)
    tl_r23 = struct.raise_(struct.tl, 1, 2)
    m = struct.mask

    g1 = np.einsum("...abc->...cab", da_r2) * (h * i)
    g3 = (-np.einsum("...jik->...kij", da_r2) + be.einsum("kil,jl->kij", n_up3, a)
          + be.einsum("kjl,il->kij", t_up3, a)) * (h * i)
    g4 = -(h * i) * (grad_up_a - be.einsum("jil,kl->kij", nl_r3, a_r1)
                     - be.einsum("jkl,il->kij", tl_r23, a))
    gamma = struct.realify(m(g1, "B*U") + m(g3, "UBU") + m(g4, "UUU"))

    n1 = -(h * i) * be.einsum("lij,kl->kij", N, a_r1)
    n2 = -(h * i) * be.einsum("kjl,il->kij", n_up3, a)
    n2 = m(n2, "UUB")
    n2 = n2 - np.swapaxes(n2, -1, -2)
    n3 = -i * (struct.alt(np.einsum("...ijk->...kij", da_r2))
               - h * be.einsum("lij,kl->kij", T, a_r1))
    n_dot = struct.realify(m(n1, "UUU") + n2 + m(n3, "UBB"))

    t1 = -i * (grad_up_a + struct.alt(be.einsum("ijl,kl->kij", nl_r3, a_r1))
               + struct.alt(be.einsum("ikl,jl->kij", tl_r23, a))
               - h * be.einsum("lij,kl->kij", N, a_r1))
    t2 = -(h * i) * be.einsum("kil,jl->kij", T, a_r2)
    t2 = m(t2, "UUB")
    t2 = t2 - np.swapaxes(t2, -1, -2)
    t3 = -(h * i) * be.einsum("lij,kl->kij", T, a_r1)
    t_dot = struct.realify(m(t1, "UUU") + t2 + m(t3, "UBB"))

    tau1 = -i * (be.einsum("jc,cij->i", struct.Ginv, da)
                 + h * be.einsum("ijk,jk->i", nl_r23, a)
                 + h * be.einsum("ijk,jk->i", tl_r23, a))
    tau_dot = struct.realify(m(tau1, "U"))
    return {"gamma": gamma, "N": n_dot, "T": t_dot, "tau": tau_dot}


def _in_base_frame(base, moved, scheme):
    """EL coefficients and torsion of ``moved`` expressed in the frame of ``base``."""
    geom0 = cn.lattice_geometry(base, scheme)
    el, tors = cn.ehresmann_libermann(moved, scheme)
    P = frame_transition(base, moved)
    R = np.linalg.inv(P)
    be = geom0.be
    out = {"gamma": cn.change_frame_connection(el.gamma, P, R, geom0)}
    out["N"] = cn.change_frame_tensor(tors.N, P, R, "udd", be)
    out["T"] = cn.change_frame_tensor(tors.T, P, R, "udd", be)
    out["tau"] = cn.change_frame_tensor(tors.tau, P, R, "d", be)
    return out


def termwise_el_in_base(base, moved, scheme="order4"):
    """(2,0) blocks of ``termwise_el`` of ``moved`` in the unitary frame of ``base``."""
    st = Structure.of_pair(moved, scheme)
    P = frame_transition(base, moved)
    R = np.linalg.inv(P)
    n = base.n
    return {k: cn.change_frame_tensor(st.real_full(v), P, R, "dd", st.be)[..., :n, :n]
            for k, v in termwise_el(st).items()}


def fd_second_variations(pair, a_full, t=1e-3, scheme="order4"):
    """Central differences of ``termwise_el`` along ``retract(pair, a_full, t)``."""
    plus = termwise_el_in_base(pair, retract(pair, a_full, t), scheme)
    minus = termwise_el_in_base(pair, retract(pair, a_full, -t), scheme)
    return {k: (plus[k] - minus[k]) / (2 * t) for k in plus}


def fd_variations(pair, a_full, t=1e-3, scheme="order4"):
    """Central differences of the quantities returned by ``first_variations``."""
    plus = _in_base_frame(pair, retract(pair, a_full, t), scheme)
    minus = _in_base_frame(pair, retract(pair, a_full, -t), scheme)
    return {k: (plus[k] - minus[k]) / (2 * t) for k in plus}


# -- linearization at Kahler-Einstein points -------------------------------

class NotKahlerError(ValueError):
    pass


def kahler_defect(struct):
    return struct.be.maxabs(struct.tors.N), struct.be.maxabs(struct.tors.T)


def require_kahler(struct, tol=1e-9):
    nn, tn = kahler_defect(struct)
    if nn > tol or tn > tol:
        raise NotKahlerError(f"base is not Kahler: |N| = {nn:.3e}, |T| = {tn:.3e} (tol {tol:g})")


def einstein_constant(struct, tol=1e-8):
    """Ratio Ric/g at the base; raises unless it is constant to ``tol``."""
    n = struct.n
    ric = cn.curvature(struct.el).ricci[..., :n, n:]
    g = struct.geom.G[..., :n, n:]
    g_full = np.broadcast_to(g, np.broadcast_shapes(np.shape(g), np.shape(ric)))
    lam = np.vdot(g_full, ric).real / np.vdot(g_full, g_full).real
    resid = struct.be.maxabs(ric - lam * g)
    if resid > tol * max(1.0, abs(lam)):
        raise NotKahlerError(f"base is not Einstein: |Ric - lambda g| = {resid:.3e}")
    return float(lam)


def _laplacian(struct, a, kind="holo", variances="dd"):
    """``nabla_k nabla^k`` (kind 'holo') or ``nabla_kbar nabla^kbar`` of a 2-tensor."""
    n = struct.n
    dd = struct.nabla(struct.nabla(a, variances), "d" + variances)
    U, B = slice(0, n), slice(n, 2 * n)
    first, second = (U, B) if kind == "holo" else (B, U)
    return struct.be.einsum("km,kmij->ij", struct.Ginv[..., first, second],
                            dd[..., first, second, :, :])


def _grad_div(struct, a):
    """``nabla_[i nabla^k A_j]k`` on the full frame."""
    div = struct.be.einsum("kc,cjk->j", struct.Ginv, struct.nabla(a, "dd"))
    return struct.alt(struct.nabla(div, "d"))


def linearized_ps(struct, a_full, lam=None):
    require_kahler(struct)
    lam = einstein_constant(struct) if lam is None else lam
    lap = _laplacian(struct, a_full)
    return struct.uu(-(lap + lam * a_full) * struct.half)


def dolbeault(struct, a_full):
    """``(Delta A)_ibar^j`` as the (0,1)x(1,0) block [ibar, j]."""
    require_kahler(struct)
    n = struct.n
    a_r2 = struct.raise_(a_full, 1)
    lap = _laplacian(struct, a_r2, kind="anti", variances="du")
    ric = cn.curvature(struct.el).ricci
    ric_up = struct.be.einsum("kl,lj->kj", ric, struct.Ginv)  # R_k^j
    curv = struct.be.einsum("kj,ik->ij", ric_up[..., :n, :n], a_r2[..., n:, :n])
    return -(lap[..., n:, :n] + curv)


def dolbeault_as_two_form(struct, a_full):
    """Lower the vector index of ``dolbeault`` and return the (2,0) block of the 2-form."""
    n = struct.n
    d = dolbeault(struct, a_full)  # [ibar, j]
    low = struct.be.einsum("il,lj->ij", d, struct.geom.G[..., :n, n:])  # [ibar, jbar]
    return struct.be.conj(low)


def dolbeault_pairing(struct, a_full, lattice):
    """``(Delta A, A) = integral Re((Delta A)_ibar^j A^ibar_j)``."""
    n = struct.n
    d = dolbeault(struct, a_full)
    a_r1 = struct.raise_(a_full, 0)[..., n:, :n]
    return _integral(struct, struct.be.einsum("ij,ij->", d, a_r1), lattice)


def second_variations(struct, a_full, lam=None):
    require_kahler(struct)
    lam = einstein_constant(struct) if lam is None else lam
    q = struct.half * struct.half / 2
    lap = _laplacian(struct, a_full)
    gd = _grad_div(struct, a_full)
    a = a_full
    uu = struct.uu
    return {"nsym": uu(-q * lap - 3 * q * lam * a + q * gd),
            "nskew": uu(-3 * q * lap - q * lam * a - 5 * q * gd),
            "T": uu(-lap), "tau": uu(gd)}


def second_variation_basis(struct, a_full, lam=None):
    """The three building blocks: nabla_k nabla^k A, lambda A, nabla_[i nabla^k A_j]k."""
    lam = einstein_constant(struct) if lam is None else lam
    return {"lap": struct.uu(_laplacian(struct, a_full)), "lam": struct.uu(lam * a_full),
            "graddiv": struct.uu(_grad_div(struct, a_full))}


# -- the one-parameter family -------------------------------------------------

# rows: coefficients of (lap, lam A, grad div) in Eddot for nsym, nskew, T, tau
SECOND_VARIATION_TABLE = np.array([
    [-1 / 8, -3 / 8, 1 / 8],
    [-3 / 8, -1 / 8, -5 / 8],
    [-1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0],
])
TARGET = np.array([-0.5, -0.5, 0.0])  # P_S = -1/2 (lap + lam)


@dataclass(frozen=True)
class FamilyLine:
    """Affine line ``base + s * direction`` in (a, b, c, d) space."""
    base: tuple
    direction: tuple

    def at(self, s):
        return EnergyCoefficients(*(b + s * d for b, d in zip(self.base, self.direction)))

    def contains(self, coeffs, tol=1e-12):
        v = np.asarray(coeffs.as_tuple() if isinstance(coeffs, EnergyCoefficients) else coeffs,
                       dtype=float)
        return bool(np.max(np.abs(v @ SECOND_VARIATION_TABLE - TARGET)) <= tol)


def characterize_family(table=SECOND_VARIATION_TABLE):
    """Solve ``coeffs @ table = target`` for (a, b, c, d): a point plus the kernel direction."""
    import sympy
    m = sympy.Matrix(table.T.tolist()).applyfunc(sympy.nsimplify)
    rhs = sympy.Matrix(TARGET.tolist()).applyfunc(sympy.nsimplify)
    sol, params = m.gauss_jordan_solve(rhs)
    if len(params) != 1:
        raise ValueError(f"expected a one-parameter family, got {len(params)} parameters")
    p = params[0]
    base = sol.subs(p, 0)
    direction = sol.subs(p, 1) - base
    # normalize so the T coefficient is the parameter
    scale = direction[2] if direction[2] != 0 else 1
    return FamilyLine(tuple(float(x) for x in base - direction * (base[2] / scale)),
                      tuple(float(x / scale) for x in direction))


def fit_second_variation_table(samples):
    """Least-squares table from samples ``[(eddot_dict, basis_dict), ...]``."""
    rows = []
    for key in ("nsym", "nskew", "T", "tau"):
        cols = []
        rhs = []
        for eddot, basis in samples:
            cols.append(np.stack([np.ravel(basis[b]) for b in ("lap", "lam", "graddiv")], axis=1))
            rhs.append(np.ravel(eddot[key]))
        design = np.concatenate(cols)
        target = np.concatenate(rhs)
        keep = np.linalg.norm(design, axis=0) > 0
        coef = np.zeros(3)
        sol = np.linalg.lstsq(np.concatenate([design[:, keep].real, design[:, keep].imag]),
                              np.concatenate([target.real, target.imag]), rcond=None)[0]
        coef[keep] = sol
        rows.append(coef)
    return np.array(rows)


# -- descent --------------------------------------------------------------------

def s_norm(struct, s_block, lattice):
    s_full = struct.real_full(s_block)
    dens = struct.half_norm(s_full)
    return float(np.sqrt(max(_integral(struct, dens, lattice), 0.0)))


@dataclass
class Trajectory:
    records: list = field(default_factory=list)
    pair: object = None
    halted: bool = False
    diagnostic: str = ""

    def to_json(self):
        return {"records": self.records, "halted": self.halted, "diagnostic": self.diagnostic}


def gradient_descend(pair, steps, rate, scheme="spectral", coeffs=STANDARD, patience=5):
    """Explicit descent ``A = -rate * S`` re-retracted from the running base each step."""
    if rate <= 0:
        raise ValueError("rate must be positive")
    traj = Trajectory(pair=pair)
    increases = 0
    prev = None
    for step in range(steps + 1):
        struct = Structure.of_pair(pair, scheme)
        e = _integral(struct, densities(struct).combination(coeffs), pair.lattice)
        grad = combine_el(termwise_el(struct), coeffs)
        traj.records.append({"step": step, "E": e, "S_norm": s_norm(struct, grad, pair.lattice)})
        if not np.isfinite(e):
            traj.halted = True
            traj.diagnostic = "energy is no longer finite; reduce the rate"
            break
        if prev is not None and e > prev:
            increases += 1
            if increases >= patience:
                traj.halted = True
                traj.diagnostic = (f"energy increased for {patience} consecutive steps "
                                   f"(last E = {e:.6e}); reduce the rate")
                break
        else:
            increases = 0
        prev = e
        if step == steps:
            break
        step_form = struct.real_full(-rate * grad)
        step_form = (step_form - np.swapaxes(step_form, -1, -2)) / 2  # drop roundoff asymmetry
        pair = retract(pair, step_form)
    traj.pair = pair
    return traj


def record(test, residual, tolerance):
    residual = float(residual)
    return {"test": test, "residual": residual, "tolerance": tolerance,
            "pass": bool(residual <= tolerance)}
