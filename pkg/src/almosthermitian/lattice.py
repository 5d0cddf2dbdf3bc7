"""Fields on the flat torus ``(R/2piZ)^(2n)`` and compatible almost complex structures.

Real coordinates are interleaved as ``(x1, y1, x2, y2, ...)`` and the
reference structure rotates ``d/dx_j`` into ``d/dy_j``.  A frame is stored as
a complex matrix ``M[a, mu]`` with ``E_a = M[a, mu] d/du_mu``; rows ``0..n-1``
are the (1,0)-vectors and rows ``n..2n-1`` their conjugates.
"""

import json
from dataclasses import dataclass

import numpy as np

from .backends import LatticeBackend
from .frame_tensor import FrameTensor, sig

TWO_PI = 2 * np.pi


class TorusLattice:
    def __init__(self, n, extent):
        if n < 1:
            raise ValueError("complex dimension must be positive")
        if extent < 8 or extent % 2:
            raise ValueError(f"extent must be even and >= 8, got {extent}")
        self.n = n
        self.extent = extent
        self.dim = 2 * n
        self.spacing = TWO_PI / extent

    @property
    def shape(self):
        return (self.extent,) * self.dim

    def coordinate(self, axis):
        """Grid values of coordinate ``axis``, shaped to broadcast over the grid."""
        shape = [1] * self.dim
        shape[axis] = self.extent
        return (np.arange(self.extent) * self.spacing).reshape(shape)

    def backend(self, scheme="order4"):
        return LatticeBackend(self, scheme)

    def __repr__(self):
        return f"TorusLattice(n={self.n}, extent={self.extent})"


@dataclass
class TensorField:
    lattice: TorusLattice
    value: FrameTensor

    def to_json(self):
        comps = np.broadcast_to(self.value.components,
                                self.lattice.shape + (self.value.n,) * self.value.rank)
        return {
            "signature": [[s.variance, "barred" if s.barred else "unbarred"]
                          for s in self.value.slots],
            "extent": self.lattice.extent,
            "n": self.lattice.n,
            "components": np.stack([comps.real, comps.imag], axis=-1).tolist(),
        }

    @classmethod
    def from_json(cls, doc):
        from .frame_tensor import SlotSig
        lat = TorusLattice(doc["n"], doc["extent"])
        slots = [SlotSig(v, b == "barred") for v, b in doc["signature"]]
        arr = np.asarray(doc["components"], dtype=float)
        return cls(lat, FrameTensor(doc["n"], slots, arr[..., 0] + 1j * arr[..., 1]))

    def dumps(self):
        return json.dumps(self.to_json())


def reference_structure(n):
    """Constant ``J0`` (as ``J[rho, nu]``) and its unitary frame for the flat metric."""
    dim = 2 * n
    j0 = np.zeros((dim, dim))
    m0 = np.zeros((dim, dim), dtype=complex)
    s = 1 / np.sqrt(2)
    for j in range(n):
        x, y = 2 * j, 2 * j + 1
        j0[y, x] = 1.0
        j0[x, y] = -1.0
        m0[j, x], m0[j, y] = s, -1j * s
        m0[n + j, x], m0[n + j, y] = s, 1j * s
    return j0, m0


@dataclass
class CompatiblePair:
    """Metric, almost complex structure and adapted frame on a lattice.

    ``metric`` is the coordinate metric ``g[mu, nu]``, ``J`` the endomorphism
    ``J[rho, nu]`` and ``frame`` the matrix ``M[a, mu]``; all carry the
    lattice's leading axes (size 1 where constant).  ``hermitian`` holds the
    frame components ``g_{i jbar}``.
    """

    lattice: TorusLattice
    metric: np.ndarray
    J: np.ndarray
    frame: np.ndarray
    hermitian: np.ndarray

    @property
    def n(self):
        return self.lattice.n

    def frame_metric(self):
        """Complex bilinear ``G[a, b] = g(E_a, E_b)``."""
        m = self.frame
        return np.einsum("...am,...mn,...bn->...ab", m, self.metric, m)

    def check(self, tol=1e-10):
        dim = self.lattice.dim
        eye = np.eye(dim)
        r1 = np.max(np.abs(self.J @ self.J + eye))
        gJJ = np.einsum("...ra,...rs,...sb->...ab", self.J, self.metric, self.J)
        r2 = np.max(np.abs(gJJ - self.metric))
        n = self.n
        G = self.frame_metric()
        target = np.zeros((dim, dim), dtype=complex)
        target[:n, n:] = self.hermitian
        target[n:, :n] = self.hermitian.T
        r3 = np.max(np.abs(G - target))
        # frame must be adapted: J E_i = i E_i
        JE = np.einsum("...rm,...am->...ar", self.J, self.frame)
        phase = np.concatenate([np.full(n, 1j), np.full(n, -1j)])
        r4 = np.max(np.abs(JE - phase[:, None] * self.frame))
        res = {"J_squared": float(r1), "metric_invariance": float(r2),
               "unitarity": float(r3), "adapted_frame": float(r4)}
        bad = {k: v for k, v in res.items() if v > tol}
        if bad:
            raise ValueError(f"compatibility violated: {bad}")
        return res


def flat_pair(lattice):
    n = lattice.n
    j0, m0 = reference_structure(n)
    lift = (1,) * lattice.dim
    return CompatiblePair(lattice, np.eye(lattice.dim).reshape(lift + j0.shape),
                          j0.reshape(lift + j0.shape), m0.reshape(lift + m0.shape),
                          np.eye(n, dtype=complex))


def check_two_form(A, n, tol=1e-12):
    """Validate a full-frame anti-Hermitian 2-form (skew, only pure-type blocks, real)."""
    A = np.asarray(A)
    scale = max(1.0, float(np.max(np.abs(A))) if A.size else 1.0)
    skew = np.max(np.abs(A + np.swapaxes(A, -1, -2))) if A.size else 0.0
    if skew > tol * scale:
        raise ValueError(f"A is not skew (residual {skew:.3e})")
    mixed = max(np.max(np.abs(A[..., :n, n:])), np.max(np.abs(A[..., n:, :n])))
    if mixed > tol * scale:
        raise ValueError(f"A has a (1,1) part (residual {mixed:.3e})")
    real = np.max(np.abs(A[..., n:, n:] - np.conj(A[..., :n, :n])))
    if real > tol * scale:
        raise ValueError(f"A is not real (residual {real:.3e})")


def two_form_from_block(block):
    """Full-frame real 2-form from its ``A_{ij}`` block (skew-symmetrized)."""
    block = np.asarray(block, dtype=complex)
    n = block.shape[-1]
    block = 0.5 * (block - np.swapaxes(block, -1, -2))
    full = np.zeros(block.shape[:-2] + (2 * n, 2 * n), dtype=complex)
    full[..., :n, :n] = block
    full[..., n:, n:] = np.conj(block)
    return full


def generator(pair, A):
    """Skew endomorphism ``K = -1/2 Jdot J`` whose flow retracts along ``A``."""
    check_two_form(A, pair.n)
    theta = np.linalg.inv(pair.frame)  # theta[mu, a]
    a_coord = np.einsum("...ma,...nb,...ab->...mn", theta, theta, A).real
    ginv = np.linalg.inv(pair.metric)
    jdot = np.einsum("...rs,...ns->...rn", ginv, a_coord)
    return -0.5 * jdot @ pair.J, jdot


def retract(pair, A, t=1.0, backend=None):
    """Move ``J`` along the anti-Hermitian 2-form ``A`` (full-frame array in ``pair``'s frame).

    Returns the new pair with ``J' = Q J Q^-1`` and frame ``Q E`` where
    ``Q = exp(t K)``.
    """
    K, _ = generator(pair, A)
    be = backend or LatticeBackend(pair.lattice)
    Q = be.expm(t * K)
    J = Q @ pair.J @ be.inv(Q)
    frame = np.einsum("...mn,...an->...am", Q, pair.frame)
    return CompatiblePair(pair.lattice, pair.metric, J, frame, pair.hermitian)


def jdot(pair, A):
    """First-order velocity of ``retract(pair, A, t)`` at ``t = 0``."""
    return generator(pair, A)[1]


def frame_transition(old, new):
    """``P`` with ``E_new = P E_old``, i.e. ``M_new = P M_old``."""
    return np.einsum("...am,...mb->...ab", new.frame, np.linalg.inv(old.frame))


def frame_field(pair, reference=None, tol=1e-8):
    """Unitary (1,0)-frame of ``pair`` as a ``FrameTensor`` field of vectors.

    Without a stored frame the reference frame is projected onto the
    (1,0)-space of ``J`` and orthonormalized; this needs ``J`` close to ``J0``.
    """
    n = pair.n
    if pair.frame is not None:
        return pair.frame
    _, m0 = reference_structure(n) if reference is None else (None, reference)
    proj = 0.5 * (np.eye(2 * n) - 1j * pair.J)  # projector onto +i eigenspace
    z = np.einsum("...mn,an->...am", proj, m0[:n])
    gram = np.einsum("...am,...mn,...bn->...ab", z, pair.metric, np.conj(z))
    if np.min(np.linalg.eigvalsh(gram)) < tol:
        raise ValueError("J is too far from the reference structure for projection")
    L = np.linalg.cholesky(gram)
    z = np.linalg.solve(L, z)
    return np.concatenate([z, np.conj(z)], axis=-2)


def partial_derivative(f, axis, scheme="order4"):
    """Componentwise periodic derivative of a ``TensorField`` along one real axis."""
    be = LatticeBackend(f.lattice, scheme)
    comps = np.asarray(f.value.components)
    full = np.broadcast_to(comps, f.lattice.shape + comps.shape[f.lattice.dim:]) \
        if comps.ndim == f.lattice.dim + f.value.rank else comps
    d = be.derivative(np.ascontiguousarray(full), axis)
    return TensorField(f.lattice, f.value.with_components(d))


def integrate(density, lattice, metric=None):
    """Riemann sum of a scalar density over the torus with volume ``sqrt(det g)``."""
    density = np.asarray(density)
    if np.iscomplexobj(density):
        if np.max(np.abs(density.imag)) > 1e-9 * max(1.0, np.max(np.abs(density.real))):
            raise ValueError("density is not real")
        density = density.real
    vol = TWO_PI ** lattice.dim
    if metric is None:
        return float(np.mean(density)) * vol
    sq = np.sqrt(np.linalg.det(metric))
    return float(np.mean(np.broadcast_to(density * sq, np.broadcast_shapes(density.shape, sq.shape)))) * vol


def trig_field(lattice, rng, trailing, modes=((1, 0),), axes=None, amplitude=1.0):
    """Random trigonometric polynomial with complex coefficients.

    ``modes`` lists integer wave vectors restricted to ``axes`` (default: the
    first ``len(mode)`` axes); the field has size-1 leading axes elsewhere.
    """
    axes = list(range(len(modes[0]))) if axes is None else list(axes)
    shape = [1] * lattice.dim
    for pos, ax in enumerate(axes):
        if any(k[pos] for k in modes):
            shape[ax] = lattice.extent
    out = np.zeros(tuple(shape) + tuple(trailing), dtype=complex)
    for k in modes:
        phase = np.zeros(tuple(shape))
        for kk, ax in zip(k, axes):
            if kk:
                phase = phase + kk * lattice.coordinate(ax)
        coef = rng.standard_normal(trailing) + 1j * rng.standard_normal(trailing)
        out += amplitude * np.exp(1j * phase)[(...,) + (None,) * len(trailing)] * coef
    return out


def random_two_form(lattice, rng, modes=((0, 0), (1, 0), (0, 1), (1, 1)), axes=None,
                    amplitude=0.1):
    """Random smooth anti-Hermitian 2-form (full-frame array in a unitary frame)."""
    n = lattice.n
    block = trig_field(lattice, rng, (n, n), modes=modes, axes=axes, amplitude=amplitude)
    return two_form_from_block(block)


def random_pair(lattice, rng, amplitude=0.1, modes=((0, 0), (1, 0), (0, 1), (1, 1)),
                axes=None):
    """Perturbed flat pair ``retract(flat, A0)`` for a random smooth ``A0``."""
    base = flat_pair(lattice)
    A0 = random_two_form(lattice, rng, modes=modes, axes=axes, amplitude=amplitude)
    return retract(base, A0)


def two_form_tensor(lattice, A):
    """Wrap the ``A_{ij}`` block of a full-frame 2-form as a ``TensorField``."""
    n = lattice.n
    return TensorField(lattice, FrameTensor(n, sig("d_d"), A[..., :n, :n]))
