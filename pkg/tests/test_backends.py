import numpy as np
import pytest
from sympy.polys.domains import QQ_I

from almosthermitian.backends import ZERO, SeriesBackend, _sparse_einsum, _split


def random_exact(shape, rng, density=0.4):
    out = np.empty(shape, dtype=object)
    for idx in np.ndindex(shape):
        if rng.random() < density:
            out[idx] = QQ_I(int(rng.integers(-4, 5)), int(rng.integers(-4, 5))) / QQ_I(
                int(rng.integers(1, 4)), 0)
        else:
            out[idx] = ZERO
    return out


@pytest.mark.parametrize("subscripts,shapes", [
    ("ij,jk->ik", [(3, 4), (4, 2)]),
    ("kij,k->ij", [(3, 3, 3), (3,)]),
    ("ab,cb,cd->ad", [(3, 3), (3, 3), (3, 3)]),
    ("ii->", [(4, 4)]),
    ("iij,j->i", [(3, 3, 2), (2,)]),
    ("ab,ab->", [(2, 3), (2, 3)]),
    ("ijk->kji", [(2, 3, 4)]),
    ("ij,kl->ijkl", [(2, 2), (2, 2)]),
    ("abc,cde,ea->bd", [(3, 3, 3), (3, 3, 3), (3, 3)]),
])
def test_sparse_einsum_matches_dense(subscripts, shapes):
    rng = np.random.default_rng(len(subscripts))
    ops = [random_exact(s, rng) for s in shapes]
    parts, out = _split(subscripts)
    got = _sparse_einsum(parts, out, ops, ZERO)
    want = np.einsum(subscripts, *ops)
    assert np.shape(got) == np.shape(want)
    assert all(a == b for a, b in zip(np.ravel(got), np.ravel(want)))


def test_sparse_einsum_all_zero_operand():
    rng = np.random.default_rng(0)
    a = random_exact((3, 3), rng, density=0.0)
    got = _sparse_einsum(["ij", "jk"], "ik", [a, random_exact((3, 2), rng)], ZERO)
    assert got.shape == (3, 2) and all(v == ZERO for v in got.flat)


def test_series_product_truncates():
    be = SeriesBackend(1, 2)
    x = be.shift(be.identity(2), 1)
    assert be.nonzero_degrees(be.matmul(x, x)) == [2]
    assert be.is_zero(be.matmul(be.matmul(x, x), x))


@pytest.mark.parametrize("subscripts", ["am,mpq->apq", "ad,dbf,fc->cab", "kc,cij->kij",
                                        "ab,ab->", "a,b->ab", "abc,ab->abc", "ikl,jkl->ij",
                                        "kij,k->ij", "ab,cb,cd->ad", "iab,jb->ij"])
def test_lattice_einsum_matches_numpy(subscripts):
    from almosthermitian.lattice import TorusLattice
    be = TorusLattice(1, 8).backend()
    rng = np.random.default_rng(len(subscripts))
    parts, out = _split(subscripts)
    leads = [(8, 1), (1, 8), (8, 8)]
    ops = [rng.standard_normal(leads[i % 3] + (3,) * len(p))
           + 1j * rng.standard_normal(leads[i % 3] + (3,) * len(p)) for i, p in enumerate(parts)]
    want = np.einsum(",".join("..." + p for p in parts) + "->..." + out, *ops)
    got = be.einsum(subscripts, *ops)
    assert got.shape == want.shape
    assert np.allclose(got, want, rtol=1e-13, atol=1e-12)
