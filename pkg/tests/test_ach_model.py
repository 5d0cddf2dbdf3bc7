import json
import random
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from almosthermitian import ach_model as am
from almosthermitian.backends import SeriesBackend

DATA = Path(am.__file__).parent / "data"


def table_entry(n, k, i, j):
    """Expected CH^n coefficient Gamma^k_{ij} for unbarred k, j (i any)."""
    half = Fraction(1, 2)
    bar = i >= n
    ii = i - n if bar else i
    if k == 0 and j == 0:
        return {(0, False): -1, (0, True): 1}.get((ii, bar), 0)
    if k > 0 and j == 0:
        return -1 if (not bar and ii == k) else 0
    if k == 0 and j > 0:
        return half if (bar and ii == j) else 0
    # k, j tangential
    if ii == 0 and k == j:
        return half if bar else -half
    return 0


@pytest.mark.parametrize("n", [2, 3])
def test_chn_christoffel_table(n):
    el = am.chn_christoffels(n)
    be = el.geom.be
    gam = el.gamma[0]
    for k in range(n):
        for i in range(2 * n):
            for j in range(n):
                assert gam[k, i, j] == be.scalar(table_entry(n, k, i, j)), (k, i, j)
    assert be.is_zero(el.gamma[1:])


def test_chn_table_spot_values():
    gam = am.chn_christoffels(2).gamma[0]
    assert gam[0, 0, 0] == am.SeriesBackend(2, 0).scalar(-1)
    assert gam[1, 2, 1] == am.SeriesBackend(2, 0).scalar(Fraction(1, 2))


@pytest.mark.parametrize("n", [2, 3])
def test_chn_is_kahler_einstein(n):
    geom = am.model_geometry(am.chn_data(n), max_degree=2)
    st = am.structure(geom)
    be = geom.be
    assert be.is_zero(am.einstein_defect(st, -(n + 1)))
    assert be.is_zero(st.tors.N) and be.is_zero(st.tors.T)
    # metric compatibility of the table: nabla g = 0
    G = geom.G[0]
    gam = st.el.gamma[0]
    comp = np.einsum("dab,dc->abc", gam, G) + np.einsum("dac,bd->abc", gam, G)
    assert be.maxabs(comp) == 0


def test_chn_needs_n_at_least_two():
    with pytest.raises(ValueError):
        am.chn_christoffels(1)


@pytest.mark.parametrize("n,radius", [(2, np.sqrt(12)), (3, np.sqrt(17)), (4, np.sqrt(24))])
def test_indicial_data(n, radius):
    d = am.indicial_data(n)
    assert abs(d.radius - radius) < 1e-12
    r = np.sqrt(n * n + 2 * n + 5), np.sqrt(n * n + 8)
    assert np.allclose(d.roots["0a"], [n - r[0], n + r[0]], atol=1e-12, rtol=0)
    assert np.allclose(d.roots["ab"], [n - r[1], n + r[1]], atol=1e-12, rtol=0)
    for block, c in am.indicial_constants(n).items():
        for s in d.roots[block]:
            assert abs(s * s - 2 * n * s - c) < 1e-12
    # the recursion needs no integer root in 1..2n-1
    for l in range(1, 2 * n):
        assert all(abs(l - s) > 1e-9 for rs in d.roots.values() for s in rs)


def test_indicial_data_n2_roots():
    d = am.indicial_data(2)
    assert d.exact_roots["0a"] == ["2 - sqrt(13)", "2 + sqrt(13)"]
    assert d.exact_roots["ab"] == ["2 - 2*sqrt(3)", "2 + 2*sqrt(3)"]


@pytest.mark.parametrize("n", [2, 3, 4])
def test_radial_indicial_check_exact(n):
    rng = random.Random(n)
    for s in [0, 1, Fraction(3, 2)] + [Fraction(rng.randint(-20, 60), 10) for _ in range(2)]:
        res = am.radial_indicial_check(n, s)
        assert res["0a"] == 0
        assert res["ab"] == (None if n == 2 else 0)


@pytest.mark.parametrize("n", [2, 3])
def test_indicial_roots_annihilate(n):
    d = am.indicial_data(n)
    for block, roots in d.roots.items():
        if block == "ab" and n == 2:
            continue
        for s in roots:
            assert am.radial_indicial_check(n, s)[block] <= 1e-12
            assert abs(am.indicial_value(n, s, block)) <= 1e-12


def test_indicial_scale_at_zero():
    # P_S(A_0a) at s = 0, n = 2 is -1/8 (0 - 0 - 9) A
    be = SeriesBackend(2, 0)
    assert am.indicial_value(2, 0) == be.scalar(Fraction(9, 8))
    assert am.radial_indicial_check(2, 0, scale=Fraction(-1, 4))["0a"] == pytest.approx(9 / 8)


def test_heisenberg_model_is_chn():
    for n in (2, 3):
        ms = am.model_structure(am.TWBoundaryData.heisenberg(n), max_degree=2 * n)
        be = ms.geometry.be
        assert be.maxabs(ms.connection.gamma[0] - am.chn_christoffels(n).gamma[0]) == 0
        assert be.is_zero(ms.connection.gamma[1:])
        assert be.is_zero(ms.torsion.N) and be.is_zero(ms.torsion.T)
        assert be.is_zero(ms.s_series())


@pytest.mark.parametrize("name", ["torsion_n2.json", "torsion_n3.json", "nijenhuis_n3.json"])
def test_model_structure_torsion_table(name):
    tw = am.TWBoundaryData.load(DATA / name)
    ms = am.model_structure(tw, max_degree=4)
    be = ms.geometry.be
    N = ms.torsion.N
    assert be.maxabs(N - am.torsion_table(ms)) == 0
    assert be.is_zero(ms.torsion.T)
    assert be.is_zero(ms.s_series()[:1])
    n = tw.n
    # mixed-type torsion blocks vanish for the Ehresmann-Libermann connection
    assert be.is_zero(N[:, :n, :n, n:]) and be.is_zero(N[:, :n, :n, :n])


def test_torsion_n2_entry():
    # N^1bar_{01} at x^2 is i A_1^1bar with A_11 = 1/3 + i/5 and h = 1
    tw = am.TWBoundaryData.load(DATA / "torsion_n2.json")
    ms = am.model_structure(tw, max_degree=2)
    assert ms.torsion.N[2, 3, 0, 1] == ms.geometry.be.scalar((Fraction(-1, 5), Fraction(1, 3)))


def test_nonzero_examples_are_nontrivial():
    be = SeriesBackend(3, 0)
    t3 = am.TWBoundaryData.load(DATA / "torsion_n3.json")
    assert be.maxabs(be.convert(t3.tw_torsion)) > 0
    n3 = am.TWBoundaryData.load(DATA / "nijenhuis_n3.json")
    assert be.maxabs(be.convert(n3.cr_nijenhuis)) > 0


def test_consistency_detects_bad_data():
    doc = am.TWBoundaryData.heisenberg(3).to_json()
    doc["tw_torsion"][0][0] = ["1", "0"]
    tw = am.TWBoundaryData.from_json(doc)
    res = tw.consistency()
    assert res["jacobi"] > 0
    with pytest.raises(ValueError, match="inconsistent"):
        am.model_structure(tw)
    doc = am.TWBoundaryData.heisenberg(2).to_json()
    doc["levi"][0][0] = ["-1", "0"]
    assert am.TWBoundaryData.from_json(doc).consistency()["levi_positive"] > 0


def test_json_round_trip_and_from_brackets(tmp_path):
    tw = am.TWBoundaryData.load(DATA / "torsion_n3.json")
    path = tmp_path / "tw.json"
    path.write_text(json.dumps(tw.to_json()))
    assert am.TWBoundaryData.load(path).to_json() == tw.to_json()
    C = am.boundary_brackets(tw, SeriesBackend(3, 0))
    assert am.TWBoundaryData.from_brackets(3, C).to_json() == tw.to_json()
