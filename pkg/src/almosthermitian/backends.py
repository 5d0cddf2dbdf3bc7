"""Scalar backends for the connection engine.

A backend fixes what a "scalar" is.  Arrays always carry the backend's
leading axes first and frame indices after them:

* ``LatticeBackend``: one leading axis per real coordinate of the torus
  (size-1 axes broadcast, which lets a field ignore some coordinates).
* ``SeriesBackend``: one leading degree axis; entry ``k`` is the coefficient
  of ``x**(k + offset)``.  Products are truncated at ``max_degree``.

Derivations: ``grad(f)`` inserts an axis of length ``nderiv`` right after
the leading axes, holding ``D_mu f`` for the backend's basic derivations.
On the lattice these are coordinate derivatives.  On the series backend
they are the model frame vectors, which act on a homogeneous coefficient
``x**k`` by ``k/2`` in the two radial directions and by zero otherwise.
"""

from fractions import Fraction
from itertools import product
from math import factorial

import numpy as np
import scipy.linalg
from sympy.polys.domains import QQ_I
from sympy.polys.domains.gaussiandomains import GaussianRational
from sympy.polys.matrices import DomainMatrix

from . import _kernels

ZERO = QQ_I(0, 0)
ONE = QQ_I(1, 0)


class ExactScalar(GaussianRational):
    """Gaussian rational that defers to numpy when combined with an array.

    Combined with an array element the result is a plain ``QQ_I`` element, so
    arrays never fill up with this subclass (mixed-class arithmetic in sympy
    goes through a slow conversion).  Scalar-with-scalar results stay exact
    scalars.
    """

    __slots__ = ()

    def _defer(op):
        base = getattr(GaussianRational, op)

        def method(self, other):
            if isinstance(other, np.ndarray):
                return NotImplemented
            if type(other) is GaussianRational:
                return base(GaussianRational.new(self.x, self.y), other)
            return base(self, other)
        method.__name__ = op
        return method

    for _op in ("__add__", "__radd__", "__sub__", "__rsub__", "__mul__", "__rmul__",
                "__truediv__"):
        locals()[_op] = _defer(_op)
    del _op, _defer


# elementwise sums that skip arithmetic on zero entries (most exact entries are zero)
_ADD = np.frompyfunc(lambda a, b: a if not b else (b if not a else a + b), 2, 1)
_SUB = np.frompyfunc(lambda a, b: a if not b else (-b if not a else a - b), 2, 1)


def _split(subscripts):
    ins, out = subscripts.replace(" ", "").split("->")
    return ins.split(","), out


def _sparse_operand(labels, arr):
    """Nonzero entries of an exact array as ``{index: value}``, diagonals resolved."""
    flat = arr.ravel()
    nz = [i for i, v in enumerate(flat) if v]
    keys = (zip(*np.unravel_index(np.array(nz, dtype=np.intp), arr.shape)) if arr.ndim
            else [()] * len(nz))
    uniq = "".join(dict.fromkeys(labels))
    pos = [labels.index(ch) for ch in uniq]
    out = {}
    for key, i in zip(keys, nz):
        key = tuple(int(k) for k in key)
        if len(uniq) < len(labels) and any(key[j] != key[labels.index(ch)]
                                           for j, ch in enumerate(labels)):
            continue
        k2 = tuple(key[p] for p in pos)
        v = out.get(k2)
        out[k2] = flat[i] if v is None else v + flat[i]
    return uniq, out


def _sparse_einsum(parts, out_labels, ops, zero):
    """Contract exact object arrays by looping over nonzero entries only."""
    sizes = {}
    for p, op in zip(parts, ops):
        sizes.update(zip(p, op.shape))
    terms = [_sparse_operand(p, op) for p, op in zip(parts, ops)]
    labels, acc = terms[0]
    for pos, (lb, entries) in enumerate(terms[1:], start=1):
        later = set(out_labels).union(*parts[pos + 1:])
        shared = [ch for ch in lb if ch in labels]
        ia = [labels.index(ch) for ch in shared]
        ib = [lb.index(ch) for ch in shared]
        rest = [j for j, ch in enumerate(lb) if ch not in labels]
        merged = labels + "".join(lb[j] for j in rest)
        keep = [j for j, ch in enumerate(merged) if ch in later]
        groups = {}
        for key, v in entries.items():
            groups.setdefault(tuple(key[j] for j in ib), []).append(
                (tuple(key[j] for j in rest), v))
        new = {}
        for ka, va in acc.items():
            for kr, vb in groups.get(tuple(ka[j] for j in ia), ()):
                full = ka + kr
                k2 = tuple(full[j] for j in keep)
                prod = va * vb
                cur = new.get(k2)
                new[k2] = prod if cur is None else cur + prod
        labels = "".join(merged[j] for j in keep)
        acc = new
    if len(terms) == 1:
        keep = [j for j, ch in enumerate(labels) if ch in out_labels]
        summed = {}
        for key, v in acc.items():
            k2 = tuple(key[j] for j in keep)
            cur = summed.get(k2)
            summed[k2] = v if cur is None else cur + v
        labels, acc = "".join(labels[j] for j in keep), summed
    result = np.empty(tuple(sizes[ch] for ch in out_labels), dtype=object)
    result[...] = zero
    perm = [labels.index(ch) for ch in out_labels]
    for key, v in acc.items():
        result[tuple(key[j] for j in perm)] = v
    return result


def _pair_matmul(la, a, lb, b, keep, nlead):
    """Contract two lattice fields as one batched matmul.

    ``la``/``lb`` label the trailing frame axes; the ``nlead`` leading axes
    broadcast.  Labels in ``keep`` survive; the others are summed.
    """
    batch = [ch for ch in la if ch in lb and ch in keep]
    con = [ch for ch in la if ch in lb and ch not in keep]
    left = [ch for ch in la if ch not in lb]
    right = [ch for ch in lb if ch not in la]
    lead_a, lead_b = a.shape[:nlead], b.shape[:nlead]
    size = dict(zip(la, a.shape[nlead:]))
    size.update(zip(lb, b.shape[nlead:]))
    # labels only on one side and not kept are summed up front
    drop_a = [ch for ch in left if ch not in keep]
    if drop_a:
        a = a.sum(axis=tuple(nlead + la.index(ch) for ch in drop_a))
        la = [ch for ch in la if ch not in drop_a]
        left = [ch for ch in left if ch not in drop_a]
    drop_b = [ch for ch in right if ch not in keep]
    if drop_b:
        b = b.sum(axis=tuple(nlead + lb.index(ch) for ch in drop_b))
        lb = [ch for ch in lb if ch not in drop_b]
        right = [ch for ch in right if ch not in drop_b]
    lead = tuple(range(nlead))
    a = a.transpose(lead + tuple(nlead + la.index(ch) for ch in batch + left + con))
    b = b.transpose(lead + tuple(nlead + lb.index(ch) for ch in batch + con + right))
    bsz = tuple(size[ch] for ch in batch)
    nl = int(np.prod([size[ch] for ch in left], dtype=int))
    nc = int(np.prod([size[ch] for ch in con], dtype=int))
    nr = int(np.prod([size[ch] for ch in right], dtype=int))
    a = a.reshape(lead_a + bsz + (nl, nc))
    b = b.reshape(lead_b + bsz + (nc, nr))
    out = np.matmul(a, b)
    out = out.reshape(out.shape[:nlead] + bsz + tuple(size[ch] for ch in left + right))
    return out, batch + left + right


class LatticeBackend:
    exact = False

    def __init__(self, lattice, scheme="order4", use_numba=None):
        if scheme not in ("order2", "order4", "order6", "spectral"):
            raise ValueError(f"unknown derivative scheme {scheme!r}")
        self.lattice = lattice
        self.scheme = scheme
        self.use_numba = use_numba
        self.nlead = lattice.dim
        self.nderiv = lattice.dim

    def einsum(self, subscripts, *ops):
        parts, out = _split(subscripts)
        ops = [np.asarray(op) for op in ops]
        simple = (len(ops) >= 2 and "." not in subscripts
                  and all(len(set(p)) == len(p) and op.ndim == self.nlead + len(p)
                          for p, op in zip(parts, ops)))
        if not simple:
            spec = ",".join("..." + p for p in parts) + "->..." + out
            return np.einsum(spec, *ops, optimize=True)
        labels, acc = list(parts[0]), ops[0]
        for pos in range(1, len(ops)):
            keep = set(out).union(*parts[pos + 1:])
            acc, labels = _pair_matmul(labels, acc, list(parts[pos]), ops[pos], keep, self.nlead)
        if len(labels) != len(out):
            drop = [ch for ch in labels if ch not in out]
            acc = acc.sum(axis=tuple(self.nlead + labels.index(ch) for ch in drop))
            labels = [ch for ch in labels if ch in out]
        lead = tuple(range(self.nlead))
        return acc.transpose(lead + tuple(self.nlead + labels.index(ch) for ch in out))

    def derivative(self, f, axis):
        f = np.asarray(f)
        if f.shape[axis] == 1:
            return np.zeros_like(f, dtype=np.result_type(f, float))
        h = self.lattice.spacing
        if self.scheme == "spectral":
            length = f.shape[axis]
            k = np.fft.fftfreq(length, 1.0 / length)
            k[length // 2] = 0.0
            shape = [1] * f.ndim
            shape[axis] = length
            out = np.fft.ifft(np.fft.fft(f, axis=axis) * (1j * k).reshape(shape), axis=axis)
            return out if np.iscomplexobj(f) else out.real
        w = _kernels.STENCILS[self.scheme]
        return _kernels.stencil(f.astype(np.result_type(f, float)), w, axis,
                                use_numba=self.use_numba) / h

    def add(self, a, b):
        return a + b

    def sub(self, a, b):
        return a - b

    def grad(self, f):
        f = np.asarray(f)
        parts = [self.derivative(f, mu) for mu in range(self.nlead)]
        return np.stack(parts, axis=self.nlead)

    def lift(self, c):
        c = np.asarray(c)
        return c.reshape((1,) * self.nlead + c.shape)

    def full_shape(self, f):
        """Broadcast a field to the full grid."""
        shape = self.lattice.shape + f.shape[self.nlead:]
        return np.broadcast_to(f, shape)

    def scalar(self, v):
        return complex(v) if isinstance(v, complex) else float(v)

    def inv(self, m):
        return np.linalg.inv(m)

    def expm(self, k):
        return scipy.linalg.expm(k)

    def conj(self, f):
        return np.conj(f)

    def zeros(self, trailing, lead=None):
        lead = (1,) * self.nlead if lead is None else lead
        return np.zeros(tuple(lead) + tuple(trailing), dtype=complex)

    def maxabs(self, f):
        f = np.asarray(f)
        return float(np.max(np.abs(f))) if f.size else 0.0


class SeriesBackend:
    """Truncated power series in ``x`` with constant tensor coefficients.

    In exact mode coefficients are Gaussian rationals (object arrays).  With
    ``exact=False`` they are complex floats, which allows irrational offsets.
    """

    nlead = 1

    def __init__(self, n, max_degree, exact=True, offset=0):
        self.n = n
        self.max_degree = max_degree
        self.exact = exact
        self.nderiv = 2 * n
        if exact:
            g = _to_gauss(Fraction(offset))
            self.offset = ExactScalar.new(g.x, g.y)
        else:
            self.offset = complex(offset)
        self.radial = (0, n)

    def with_offset(self, offset):
        return SeriesBackend(self.n, self.max_degree, self.exact, offset)

    def truncated(self, max_degree):
        out = SeriesBackend(self.n, max_degree, self.exact, 0)
        out.offset = self.offset
        return out

    # -- construction ---------------------------------------------------
    def scalar(self, v):
        if not self.exact:
            return complex(v)
        g = _to_gauss(v)
        return ExactScalar.new(g.x, g.y)

    def convert(self, arr):
        """Convert an array of ints/Fractions/complex to backend scalars."""
        arr = np.asarray(arr, dtype=object)
        if not self.exact:
            out = np.empty(arr.shape, dtype=complex)
            for idx in np.ndindex(arr.shape):
                out[idx] = _gauss_to_complex(_to_gauss(arr[idx]))
            return out
        out = np.empty(arr.shape, dtype=object)
        for idx in np.ndindex(arr.shape):
            out[idx] = _to_gauss(arr[idx])
        return out

    def zeros(self, trailing, lead=None):
        shape = (self.max_degree + 1,) + tuple(trailing)
        if self.exact:
            return np.full(shape, ZERO, dtype=object)
        return np.zeros(shape, dtype=complex)

    def lift(self, c, degree=0):
        c = self.convert(c)
        out = self.zeros(c.shape)
        if degree <= self.max_degree:
            out[degree] = c
        return out

    def identity(self, k):
        e = np.eye(k, dtype=int)
        return self.lift(e)

    def truncate(self, f, degree):
        """Drop coefficients of degree > ``degree``."""
        out = self.zeros(f.shape[1:])
        out[:degree + 1] = f[:degree + 1]
        return out

    def coerce(self, f):
        """Resize an array from another series backend to this truncation."""
        out = self.zeros(f.shape[1:])
        m = min(len(f), self.max_degree + 1)
        out[:m] = f[:m]
        return out

    def shift(self, f, degree):
        """Multiply by ``x**degree``."""
        out = self.zeros(f.shape[1:])
        if degree <= self.max_degree:
            out[degree:] = f[:self.max_degree + 1 - degree]
        return out

    # -- algebra ----------------------------------------------------------
    def nonzero_degrees(self, f):
        if self.exact:
            return [k for k in range(len(f)) if any(bool(v) for v in f[k].flat)]
        return [k for k in range(len(f)) if np.any(f[k] != 0)]

    def einsum(self, subscripts, *ops):
        parts, out = _split(subscripts)
        degs = [self.nonzero_degrees(op) for op in ops]
        result = None
        for combo in product(*degs):
            total = sum(combo)
            if total > self.max_degree:
                continue
            args = [op[k] for op, k in zip(ops, combo)]
            if self.exact and "." not in subscripts:
                term = _sparse_einsum(parts, out, args, ZERO)
            else:
                term = np.einsum(subscripts, *args, optimize=True)
            if result is None:
                trailing = np.shape(term)
                result = self.zeros(trailing)
            result[total] = self.add(result[total], term)
        if result is None:
            shapes = {}
            for p, op in zip(parts, ops):
                for ch, ext in zip(p, op.shape[1:]):
                    shapes[ch] = ext
            result = self.zeros(tuple(shapes[ch] for ch in out))
        return result

    def add(self, a, b):
        return _ADD(a, b) if self.exact else a + b

    def sub(self, a, b):
        return _SUB(a, b) if self.exact else a - b

    def grad(self, f):
        out = self.zeros((self.nderiv,) + f.shape[1:])
        half = self.scalar(Fraction(1, 2))
        for k in self.nonzero_degrees(f):
            w = half * (self.offset + k)
            for mu in self.radial:
                out[k, mu] = w * f[k]
        return out

    def conj(self, f):
        if not self.exact:
            return np.conj(f)
        out = np.empty(f.shape, dtype=object)
        for idx in np.ndindex(f.shape):
            v = f[idx]
            out[idx] = QQ_I(v.x, -v.y) if isinstance(v, type(ZERO)) else v
        return out

    def _matinv_exact(self, m):
        k = m.shape[0]
        dm = DomainMatrix([[_to_gauss(m[i, j]) for j in range(k)] for i in range(k)],
                          (k, k), QQ_I)
        rows = dm.inv().to_list()
        out = np.empty((k, k), dtype=object)
        for i in range(k):
            for j in range(k):
                out[i, j] = rows[i][j]
        return out

    def inv(self, m):
        """Series inverse of a matrix series with invertible constant term."""
        if self.exact:
            m0inv = self._matinv_exact(m[0])
        else:
            m0inv = np.linalg.inv(m[0])
        k = m.shape[-1]
        out = self.zeros((k, k))
        out[0] = m0inv
        nz = [d for d in self.nonzero_degrees(m) if d > 0]
        for deg in range(1, self.max_degree + 1):
            acc = None
            for j in nz:
                if j > deg:
                    break
                term = m[j].dot(out[deg - j])
                acc = term if acc is None else acc + term
            if acc is not None:
                out[deg] = -m0inv.dot(acc)
        return out

    def matmul(self, a, b):
        return self.einsum("ij,jk->ik", a, b)

    def expm(self, k):
        """Matrix exponential of a series with vanishing constant term."""
        if 0 in self.nonzero_degrees(k):
            raise ValueError("series exponential needs a nilpotent (degree >= 1) argument")
        size = k.shape[-1]
        out = self.identity(size)
        term = self.identity(size)
        for m in range(1, self.max_degree + 1):
            term = self.matmul(term, k)
            if not self.nonzero_degrees(term):
                break
            out = out + term * self.scalar(Fraction(1, factorial(m)))
        return out

    def maxabs(self, f):
        if not self.exact:
            return float(np.max(np.abs(f))) if f.size else 0.0
        best = 0.0
        for v in f.flat:
            if v:
                best = max(best, abs(complex(float(v.x), float(v.y))))
        return best

    def is_zero(self, f, upto=None):
        degs = self.nonzero_degrees(f)
        if upto is None:
            return not degs
        return all(d > upto for d in degs)

    def to_complex(self, f):
        if not self.exact:
            return np.asarray(f, dtype=complex)
        out = np.empty(f.shape, dtype=complex)
        for idx in np.ndindex(f.shape):
            out[idx] = _gauss_to_complex(f[idx])
        return out


def _to_gauss(v):
    if isinstance(v, type(ZERO)):
        return v
    if isinstance(v, (tuple, list)):
        re, im = (Fraction(v[0]), Fraction(v[1]))
    elif isinstance(v, complex):
        re, im = Fraction(v.real), Fraction(v.imag)
    else:
        re, im = Fraction(v), Fraction(0)
    return (QQ_I(re.numerator, 0) / QQ_I(re.denominator, 0)
            + QQ_I(0, im.numerator) / QQ_I(im.denominator, 0))


def _gauss_to_complex(v):
    if isinstance(v, type(ZERO)):
        return complex(float(v.x), float(v.y))
    return complex(v)


def gauss_to_pair(v):
    """Exact ``(re, im)`` as Fractions, for serialization."""
    v = _to_gauss(v)
    return Fraction(int(v.x.numerator), int(v.x.denominator)), \
        Fraction(int(v.y.numerator), int(v.y.denominator))
