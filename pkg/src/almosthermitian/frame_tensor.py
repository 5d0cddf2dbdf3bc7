"""Pointwise tensor algebra in a unitary (1,0)-frame.

A ``FrameTensor`` stores one block of a real tensor: every slot is typed by
its variance (up/down) and by whether it runs over the unbarred indices
``1..n`` or the barred ones ``1bar..nbar``.  The conjugate block is produced
on demand by :func:`conj`.  Components may carry leading batch axes (for
instance the grid axes of a lattice field); all operations act on the
trailing ``rank`` axes.

Raising and lowering use the mixed metric ``g_{i jbar}`` only, so they flip
both the variance and the bar of a slot.  Antisymmetrization and
symmetrization are weight-one projections (they include ``1/p!``), while
:func:`cyclic` is the plain sum over cyclic permutations.
"""

from dataclasses import dataclass
from itertools import permutations
from math import factorial

import numpy as np


@dataclass(frozen=True)
class SlotSig:
    variance: str
    barred: bool = False

    def __post_init__(self):
        if self.variance not in ("up", "down"):
            raise ValueError(f"variance must be 'up' or 'down', got {self.variance!r}")

    def flipped_bar(self):
        return SlotSig(self.variance, not self.barred)

    def flipped_variance(self):
        return SlotSig("down" if self.variance == "up" else "up", self.barred)

    def __str__(self):
        return ("^" if self.variance == "up" else "_") + ("bar" if self.barred else "")


UP = SlotSig("up", False)
UPBAR = SlotSig("up", True)
DOWN = SlotSig("down", False)
DOWNBAR = SlotSig("down", True)


def sig(spec):
    """Parse a compact signature string such as ``"U_d_d"``.

    Tokens separated by ``_``: ``u``/``d`` for an unbarred up/down slot and
    ``U``/``D`` for the barred versions.
    """
    table = {"u": UP, "d": DOWN, "U": UPBAR, "D": DOWNBAR}
    return tuple(table[c] for c in spec.split("_") if c)


class FrameTensor:
    def __init__(self, n, slots, components):
        slots = tuple(slots)
        components = np.asarray(components)
        if n < 1:
            raise ValueError("frame rank must be positive")
        rank = len(slots)
        if components.ndim < rank:
            raise ValueError(f"components have {components.ndim} axes, signature needs {rank}")
        if rank and components.shape[components.ndim - rank:] != (n,) * rank:
            raise ValueError(
                f"trailing component shape {components.shape[components.ndim - rank:]} "
                f"does not match extent {n} in {rank} slots")
        self.n = n
        self.slots = slots
        self.components = components

    @property
    def rank(self):
        return len(self.slots)

    @property
    def batch_shape(self):
        return self.components.shape[:self.components.ndim - self.rank]

    def _axis(self, slot):
        if not -self.rank <= slot < self.rank:
            raise IndexError(f"slot {slot} out of range for rank {self.rank}")
        slot %= self.rank
        return self.components.ndim - self.rank + slot

    def with_components(self, components, slots=None):
        return FrameTensor(self.n, self.slots if slots is None else slots, components)

    def permute(self, order):
        order = list(order)
        b = len(self.batch_shape)
        axes = list(range(b)) + [b + k for k in order]
        return FrameTensor(self.n, [self.slots[k] for k in order],
                           np.transpose(self.components, axes))

    def __add__(self, other):
        _check_same(self, other)
        return self.with_components(self.components + other.components)

    def __sub__(self, other):
        _check_same(self, other)
        return self.with_components(self.components - other.components)

    def __mul__(self, c):
        return self.with_components(self.components * c)

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_components(-self.components)

    def allclose(self, other, atol=1e-12):
        return self.slots == other.slots and np.allclose(self.components, other.components,
                                                         atol=atol, rtol=0)

    def __repr__(self):
        sigstr = " ".join(str(s) for s in self.slots)
        return f"FrameTensor(n={self.n}, slots=[{sigstr}], batch={self.batch_shape})"


def _check_same(a, b):
    if a.slots != b.slots or a.n != b.n:
        raise ValueError(f"signature mismatch: {a.slots} vs {b.slots}")


class HermitianMetric:
    """Components ``g_{i jbar}`` of a Hermitian metric in a (1,0)-frame."""

    def __init__(self, g, tol=1e-12):
        g = np.asarray(g, dtype=complex)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise ValueError("metric must be a square matrix")
        if not np.allclose(g, g.conj().T, atol=tol):
            raise ValueError("metric is not Hermitian")
        if np.linalg.eigvalsh(g).min() <= 0:
            raise ValueError("metric is not positive definite")
        self.g = g
        # inverse with g^{k lbar} g_{m lbar} = delta^k_m
        self.ginv = np.linalg.inv(g.T)
        if not np.allclose(self.ginv @ g.T, np.eye(len(g)), atol=tol):
            raise ValueError("metric inverse is inaccurate")

    @property
    def n(self):
        return self.g.shape[0]

    @classmethod
    def identity(cls, n):
        return cls(np.eye(n))

    def as_tensor(self):
        return FrameTensor(self.n, (DOWN, DOWNBAR), self.g)


def conj(t):
    return FrameTensor(t.n, [s.flipped_bar() for s in t.slots], np.conj(t.components))


def contract(t, a, b):
    """Trace over slots ``a`` and ``b``; remaining slots keep their order."""
    sa, sb = t.slots[a], t.slots[b]
    if sa.variance == sb.variance or sa.barred != sb.barred:
        raise ValueError(f"cannot contract slot {a} ({sa}) with slot {b} ({sb})")
    ax, bx = t._axis(a), t._axis(b)
    comps = np.trace(t.components, axis1=ax, axis2=bx)
    a, b = a % t.rank, b % t.rank
    slots = [s for k, s in enumerate(t.slots) if k not in (a, b)]
    return FrameTensor(t.n, slots, comps)


def raise_lower(t, slot, metric, direction):
    s = t.slots[slot]
    if direction == "lower" and s.variance != "up":
        raise ValueError(f"slot {slot} is not an upper slot")
    if direction == "raise" and s.variance != "down":
        raise ValueError(f"slot {slot} is not a lower slot")
    if direction not in ("raise", "lower"):
        raise ValueError("direction must be 'raise' or 'lower'")
    ax = t._axis(slot)
    if direction == "lower":
        # t_{lbar} = g_{k lbar} t^k ;  t_l = g_{l kbar} t^{kbar}
        mat = metric.g if not s.barred else metric.g.T
    else:
        # t^{kbar} = g^{l kbar} t_l ;  t^k = g^{k lbar} t_{lbar}
        mat = metric.ginv if not s.barred else metric.ginv.T
    comps = np.moveaxis(np.tensordot(t.components, mat, axes=([ax], [0])), -1, ax)
    slots = list(t.slots)
    slots[slot] = s.flipped_variance().flipped_bar()
    return FrameTensor(t.n, slots, comps)


def _check_slots(t, slots):
    slots = [k % t.rank for k in slots]
    if len(set(slots)) != len(slots):
        raise ValueError("repeated slot")
    first = t.slots[slots[0]]
    for k in slots[1:]:
        if t.slots[k] != first:
            raise ValueError(f"slot {k} ({t.slots[k]}) differs from slot {slots[0]} ({first})")
    return slots


def _permuted(t, slots, perm):
    b = len(t.batch_shape)
    axes = list(range(t.components.ndim))
    for src, dst in zip(slots, perm):
        axes[b + src] = b + slots[dst]
    return np.transpose(t.components, axes)


def _parity(perm):
    perm = list(perm)
    sign = 1
    for i in range(len(perm)):
        while perm[i] != i:
            j = perm[i]
            perm[i], perm[j] = perm[j], perm[i]
            sign = -sign
    return sign


def alternate(t, slots):
    slots = _check_slots(t, slots)
    p = len(slots)
    out = sum(_parity(perm) * _permuted(t, slots, perm) for perm in permutations(range(p)))
    return t.with_components(out / factorial(p))


def symmetrize(t, slots):
    slots = _check_slots(t, slots)
    p = len(slots)
    out = sum(_permuted(t, slots, perm) for perm in permutations(range(p)))
    return t.with_components(out / factorial(p))


def cyclic(t, slots):
    slots = _check_slots(t, slots)
    p = len(slots)
    out = sum(_permuted(t, slots, [(k + s) % p for k in range(p)]) for s in range(p))
    return t.with_components(out)


# -- bridge to full-frame arrays -------------------------------------------
#
# The connection code works with arrays over the full index range
# a = 0..2n-1, unbarred indices first.  A real tensor then is one array whose
# barred blocks are the conjugates of the mirrored unbarred blocks.

def block_slices(n, slots):
    return tuple(slice(n, 2 * n) if s.barred else slice(0, n) for s in slots)


def from_full(full, slots, n):
    slots = tuple(slots)
    lead = (Ellipsis,) if len(slots) else ()
    idx = lead + block_slices(n, slots)
    return FrameTensor(n, slots, np.asarray(full)[idx])


def to_full(t, real=True):
    """Embed one block into a full-frame array, adding its conjugate mirror."""
    n = t.n
    shape = t.batch_shape + (2 * n,) * t.rank
    full = np.zeros(shape, dtype=np.result_type(t.components, complex))
    full[(Ellipsis,) + block_slices(n, t.slots)] = t.components
    if real:
        c = conj(t)
        full[(Ellipsis,) + block_slices(n, c.slots)] = c.components
    return full
