import numpy as np
import pytest

from almosthermitian import connections as cn
from almosthermitian.lattice import TorusLattice, flat_pair, integrate, random_pair, trig_field


def mx(x):
    return float(np.max(np.abs(x)))


@pytest.fixture(scope="module")
def perturbed():
    lat = TorusLattice(2, 16)
    pair = random_pair(lat, np.random.default_rng(11), amplitude=0.3)
    lc = cn.levi_civita(pair, "spectral")
    lich = cn.lichnerowicz(pair, lc=lc)
    el, tors = cn.ehresmann_libermann(pair, lich=lich)
    return pair, lc, lich, el, tors


def test_flat_torus_everything_vanishes():
    pair = flat_pair(TorusLattice(2, 8))
    lc = cn.levi_civita(pair)
    el, tors = cn.ehresmann_libermann(pair)
    assert mx(lc.gamma) == 0 and mx(el.gamma) == 0
    assert mx(tors.N) == 0 and mx(tors.T) == 0 and mx(tors.tau) == 0
    assert mx(cn.curvature(el).R) == 0
    assert all(v == 0 for v in cn.bianchi_residuals(cn.curvature(el), tors, el).values())
    res = cn.form_identities(pair)
    assert res["dF"] == 0 and res["dstarF"] == 0


def test_type_mask():
    m = cn.type_mask(1, "x*x")
    assert m[0, 1, 0] == 1 and m[0, 0, 1] == 0 and m[1, 0, 1] == 1
    assert cn.type_mask(1, "UB").tolist() == [[0, 1], [0, 0]]


def test_levi_civita_matches_frame_derivative_oracle(perturbed):
    # flat coordinate metric: nabla_{E_a} E_b = E_a(M[b, nu]) d_nu
    pair, lc, *_ = perturbed
    geom = lc.geom
    oracle = np.einsum("...abn,...nc->...cab", geom.d(pair.frame), geom.Minv)
    assert mx(lc.gamma - oracle) < 1e-12


def test_levi_civita_torsion_free_and_compatible(perturbed):
    _, lc, lich, el, _ = perturbed
    assert mx(lc.torsion()) < 1e-12
    for conn in (lc, lich, el):
        assert mx(cn.covariant_derivative(lc.geom.G, conn, "dd")) < 1e-12


def test_hermitian_connections_preserve_types(perturbed):
    _, lc, lich, el, _ = perturbed
    off = 1 - cn.type_mask(2, "x*x")
    assert mx(lc.gamma * off) > 1e-2
    assert mx(lich.gamma * off) == 0
    assert mx(el.gamma * off) < 1e-14


def test_nijenhuis_from_torsion_equals_bracket(perturbed):
    _, lc, _, _, tors = perturbed
    # N^kbar_ij = -theta^kbar([Z_i, Z_j])
    bracket = -cn.block(lc.geom.C, "BUU", 2)
    assert mx(bracket) > 1e-2
    assert mx(cn.block(tors.N, "BUU", 2) - bracket) < 1e-12


def test_T_from_levi_civita_mixed_block(perturbed):
    # levi-civita gamma^k_{i jbar} = -1/2 T_i^k_jbar
    _, lc, _, _, tors = perturbed
    geom = lc.geom
    t_mixed = np.einsum("...kd,...idj->...kij", geom.Ginv, tors.t_low)
    assert mx(cn.block(t_mixed, "UUB", 2)) > 1e-2
    assert mx(cn.block(lc.gamma + 0.5 * t_mixed, "UUB", 2)) < 1e-12


def test_torsion_blocks_symmetries(perturbed):
    *_, tors = perturbed
    assert mx(tors.N + np.swapaxes(tors.N, -1, -2)) == 0
    assert mx(tors.T + np.swapaxes(tors.T, -1, -2)) < 1e-12
    assert mx(tors.tau - np.einsum("...cac->...a", tors.T)) == 0
    # real tensors: barred blocks are conjugates
    n = 2
    assert mx(np.conj(tors.T[..., :n, :n, :n]) - tors.T[..., n:, n:, n:]) < 1e-12
    assert mx(np.conj(tors.N[..., n:, :n, :n]) - tors.N[..., :n, n:, n:]) < 1e-12


def test_el_torsion_structure(perturbed):
    _, _, lich, el, tors = perturbed
    th = el.torsion()
    mixed = cn.type_mask(2, "*xy")
    assert mx(th * mixed) < 1e-12
    assert mx(lich.torsion() * mixed) > 1e-2  # Lichnerowicz keeps 1/2 T there
    assert mx(cn.block(th - tors.T, "UUU", 2)) < 1e-12
    assert mx(cn.block(th - tors.N, "UBB", 2)) < 1e-12


def test_el_correction_formula(perturbed):
    _, _, lich, el, tors = perturbed
    geom = el.geom
    diff = el.gamma - lich.gamma
    # gamma^j_ki - L gamma^j_ki = -1/2 T^j_ik
    assert mx(cn.block(diff + 0.5 * np.swapaxes(tors.T, -1, -2), "UUU", 2)) < 1e-12
    t_mixed = np.einsum("...jd,...idk->...jki", geom.Ginv, tors.t_low)
    assert mx(cn.block(diff - 0.5 * t_mixed, "UBU", 2)) < 1e-12


def test_covariant_derivative_kronecker_and_leibniz(perturbed):
    pair, _, _, el, _ = perturbed
    geom = el.geom
    delta = np.eye(4).reshape((1,) * 4 + (4, 4))
    assert mx(cn.covariant_derivative(delta, el, "ud")) < 1e-14
    rng = np.random.default_rng(3)
    # constant component fields: the derivative part vanishes, Leibniz tests the Gamma terms
    t = rng.standard_normal((1, 1, 1, 1, 4)) + 1j
    s = rng.standard_normal((1, 1, 1, 1, 4))
    lhs = cn.covariant_derivative(np.einsum("...a,...b->...ab", t, s), el, "ud")
    rhs = (np.einsum("...ca,...b->...cab", cn.covariant_derivative(t, el, "u"), s)
           + np.einsum("...a,...cb->...cab", t, cn.covariant_derivative(s, el, "d")))
    assert mx(lhs - rhs) < 1e-12
    with pytest.raises(ValueError):
        cn.covariant_derivative(t, el, "x")


def test_commutation_identity(perturbed):
    pair, _, _, el, _ = perturbed
    rng = np.random.default_rng(4)
    V = trig_field(pair.lattice, rng, (4,), modes=((0, 0), (1, 0), (0, 1)))
    dV = cn.covariant_derivative(V, el, "u")  # dV[b, i]
    ddV = cn.covariant_derivative(dV, el, "du")  # ddV[a, b, i]
    lhs = ddV - np.swapaxes(ddV, -2, -3)
    R = cn.curvature(el).R
    rhs = (np.einsum("...jiab,...j->...abi", R, V)
           - np.einsum("...cab,...ci->...abi", el.torsion(), dV))
    assert mx(lhs) > 1e-2
    assert mx(lhs - rhs) < 1e-7


def test_ricci_hermitian(perturbed):
    *_, el, _ = perturbed
    ric = cn.curvature(el).ricci
    n = 2
    r_ij = ric[..., :n, n:]
    # R_{jbar i} := conj(R_{i jbar}) equals R_{i jbar} with indices exchanged
    assert mx(r_ij) > 1e-2
    assert mx(np.conj(r_ij) - np.swapaxes(r_ij, -1, -2)) < 1e-8
    # as a 2-form the (1,1) block is skew
    assert mx(ric[..., n:, :n] + np.swapaxes(r_ij, -1, -2)) < 1e-12


def test_bianchi_spectral(perturbed):
    _, _, _, el, tors = perturbed
    res = cn.bianchi_residuals(cn.curvature(el), tors, el)
    assert max(res.values()) < 1e-7


def test_form_identities_and_codifferential(perturbed):
    pair, lc, _, el, tors = perturbed
    res = cn.form_identities(pair, "spectral")
    assert max(res.values()) < 1e-7
    F = cn.fundamental_form(lc.geom)
    d_lc = cn.codifferential_2form(lc, F)
    assert mx(d_lc) > 1e-2
    assert mx(cn.codifferential_11(el, tors, F) - d_lc) < 1e-12


def test_codifferential_is_adjoint_of_d(perturbed):
    pair, lc, *_ = perturbed
    geom = lc.geom
    rng = np.random.default_rng(5)
    a_coord = trig_field(pair.lattice, rng, (4,), modes=((0, 0), (1, 0), (0, 1), (1, 1))).real
    alpha = np.einsum("...am,...m->...a", pair.frame, a_coord)
    d_alpha = geom.d(alpha)
    d_alpha = d_alpha - np.swapaxes(d_alpha, -1, -2) - np.einsum("...cab,...c->...ab", geom.C, alpha)
    F = cn.fundamental_form(geom)
    lhs = 0.5 * np.einsum("...ab,...cd,...ac,...bd->...", d_alpha, F, geom.Ginv, geom.Ginv)
    rhs = np.einsum("...a,...b,...ab->...", alpha, cn.codifferential_2form(lc, F), geom.Ginv)
    full = geom.be.full_shape
    ref = integrate(full(lhs).real, pair.lattice)
    assert abs(ref) > 1
    assert abs(ref - integrate(full(rhs).real, pair.lattice)) < 1e-9 * abs(ref)


def test_df_closed_form_halving():
    # the closed N/T form with coefficient -i/2 matches the invariant exterior derivative
    pair = random_pair(TorusLattice(2, 8), np.random.default_rng(6), amplitude=0.2)
    el, tors = cn.ehresmann_libermann(pair)
    geom = el.geom
    dF = cn.exterior_derivative_2form(geom, cn.fundamental_form(geom))
    closed = cn.df_closed_form(geom, tors)
    assert mx(dF) > 1e-2
    assert mx(dF - closed) < 1e-12
    assert mx(dF - 2 * closed) > 1e-2


def test_order4_residuals_converge():
    res = []
    for extent in (8, 16):
        pair = random_pair(TorusLattice(2, extent), np.random.default_rng(0), amplitude=0.1)
        el, tors = cn.ehresmann_libermann(pair, scheme="order4")
        res.append(cn.bianchi_residuals(cn.curvature(el), tors, el)["bianchi_12"])
    slope = np.log2(res[0] / res[1])
    assert abs(slope - 4) < 0.5
