"""Jets: values and all partial derivatives up to a fixed order at sample points.

A :class:`Jet` stores ``data[a, p, ...]`` = ``d^alpha f(x_p)`` where ``alpha`` is the
``a``-th multi-index in graded order.  Because the ordering is graded, truncating
to a lower order is a prefix slice.

A :class:`Series` is a jet-valued polynomial in nilpotent parameters
``t_1, t_2, ...`` with ``t_i**2 = 0``; keys are bitmasks of the parameters.
"""

from __future__ import annotations

from functools import lru_cache
from itertools import product
from math import comb, factorial

import numpy as np


@lru_cache(maxsize=None)
def multi_indices(n: int, k: int) -> tuple[tuple[int, ...], ...]:
    """All multi-indices of length n with |alpha| <= k, in graded order."""
    out = []
    for total in range(k + 1):
        level = [a for a in product(range(total + 1), repeat=n) if sum(a) == total]
        out.extend(sorted(level, reverse=True))
    return tuple(out)


@lru_cache(maxsize=None)
def index_map(n: int, k: int) -> dict[tuple[int, ...], int]:
    return {a: i for i, a in enumerate(multi_indices(n, k))}


def count(n: int, k: int) -> int:
    return comb(n + k, k)


def mi_factorial(alpha) -> int:
    out = 1
    for a in alpha:
        out *= factorial(a)
    return out


def mi_binom(alpha, beta) -> int:
    out = 1
    for a, b in zip(alpha, beta):
        out *= comb(a, b)
    return out


def unit(n: int, i: int) -> tuple[int, ...]:
    return tuple(1 if j == i else 0 for j in range(n))


def mi_add(a, b):
    return tuple(x + y for x, y in zip(a, b))


def mi_sub(a, b):
    return tuple(x - y for x, y in zip(a, b))


def mi_le(a, b) -> bool:
    return all(x <= y for x, y in zip(a, b))


@lru_cache(maxsize=None)
def _leibniz(n: int, k: int):
    """Pairs (beta, gamma) with beta + gamma = alpha, and the matrix summing them."""
    idx = index_map(n, k)
    mis = multi_indices(n, k)
    left, right, rows, coef = [], [], [], []
    for ai, alpha in enumerate(mis):
        for beta in mis[: ai + 1]:
            if mi_le(beta, alpha):
                left.append(idx[beta])
                right.append(idx[mi_sub(alpha, beta)])
                rows.append(ai)
                coef.append(mi_binom(alpha, beta))
    mat = np.zeros((len(mis), len(left)))
    mat[rows, np.arange(len(left))] = coef
    return np.array(left), np.array(right), mat


@lru_cache(maxsize=None)
def _shift(n: int, k: int, i: int) -> np.ndarray:
    """Indices into an order-k jet giving the order-(k-1) jet of d/dx_i."""
    idx = index_map(n, k)
    e = unit(n, i)
    return np.array([idx[mi_add(a, e)] for a in multi_indices(n, k - 1)])


class Jet:
    """Derivatives of a fiber-valued function at ``npts`` points, up to ``order``."""

    __slots__ = ("dim", "order", "data")

    def __init__(self, dim: int, order: int, data: np.ndarray):
        self.dim = dim
        self.order = order
        self.data = data
        if data.shape[0] != count(dim, order):
            raise ValueError(f"jet data has {data.shape[0]} rows, expected {count(dim, order)}")

    @classmethod
    def zeros(cls, dim, order, npts, fiber=()):
        return cls(dim, order, np.zeros((count(dim, order), npts) + tuple(fiber)))

    @classmethod
    def constant(cls, dim, order, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        data = np.zeros((count(dim, order),) + values.shape)
        data[0] = values
        return cls(dim, order, data)

    @property
    def npts(self) -> int:
        return self.data.shape[1]

    @property
    def fiber(self) -> tuple[int, ...]:
        return self.data.shape[2:]

    @property
    def value(self) -> np.ndarray:
        return self.data[0]

    def __getitem__(self, alpha) -> np.ndarray:
        return self.data[index_map(self.dim, self.order)[tuple(alpha)]]

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise ValueError(f"cannot raise jet order {self.order} to {order}")
        return Jet(self.dim, order, self.data[: count(self.dim, order)])

    def _align(self, other: "Jet"):
        k = min(self.order, other.order)
        return self.truncate(k), other.truncate(k)

    def __add__(self, other: "Jet") -> "Jet":
        a, b = self._align(other)
        return Jet(a.dim, a.order, a.data + b.data)

    def __sub__(self, other: "Jet") -> "Jet":
        a, b = self._align(other)
        return Jet(a.dim, a.order, a.data - b.data)

    def __neg__(self) -> "Jet":
        return Jet(self.dim, self.order, -self.data)

    def scale(self, c: float) -> "Jet":
        return Jet(self.dim, self.order, c * self.data)

    def map_fiber(self, fn) -> "Jet":
        """Apply a pointwise-linear fiber map (acting on trailing axes)."""
        return Jet(self.dim, self.order, fn(self.data))

    def partial(self, i: int) -> "Jet":
        if self.order == 0:
            raise ValueError("cannot differentiate an order-0 jet")
        return Jet(self.dim, self.order - 1, self.data[_shift(self.dim, self.order, i)])

    def sup(self, order: int | None = None) -> float:
        k = self.order if order is None else order
        block = self.data[: count(self.dim, k)]
        return float(np.max(np.abs(block))) if block.size else 0.0


def jet_product(a: Jet, b: Jet, op) -> Jet:
    """Leibniz rule for a fiber-bilinear ``op(x, y)`` acting on trailing axes.

    ``op`` receives arrays shaped ``(P, npts, *fiber)`` and must broadcast over
    the two leading axes.
    """
    a, b = a._align(b)
    left, right, mat = _leibniz(a.dim, a.order)
    prods = op(a.data[left], b.data[right])
    out = np.tensordot(mat, prods, axes=1)
    return Jet(a.dim, a.order, out)


def outer_op(ra: int, rb: int):
    """Tensor product of trailing fiber axes (ra and rb of them)."""

    def op(x, y):
        xs = x.reshape(x.shape + (1,) * rb)
        ys = y.reshape(y.shape[:2] + (1,) * ra + y.shape[2:])
        return xs * ys

    return op


def scalar_op(x, y):
    """First factor is scalar-valued (no fiber axes)."""
    extra = y.ndim - x.ndim
    return x.reshape(x.shape + (1,) * extra) * y


def einsum_op(spec: str):
    """Fiber contraction given as an einsum on trailing axes, e.g. 'ij,j->i'."""
    lhs, rhs = spec.split("->")
    sa, sb = lhs.split(",")
    full = f"...{sa},...{sb}->...{rhs}"
    return lambda x, y: np.einsum(full, x, y)


def jet_mul(a: Jet, b: Jet) -> Jet:
    return jet_product(a, b, outer_op(len(a.fiber), len(b.fiber)))


def jet_scalar_mul(f: Jet, b: Jet) -> Jet:
    return jet_product(f, b, scalar_op)


def jet_inverse(g: Jet) -> Jet:
    """Jet of the pointwise matrix inverse (fiber ``(m, m)``) or reciprocal (scalar)."""
    scalar = g.fiber == ()
    data = g.data[..., None, None] if scalar else g.data
    mis = multi_indices(g.dim, g.order)
    idx = index_map(g.dim, g.order)
    h = np.zeros_like(data)
    h0 = np.linalg.inv(data[0])
    h[0] = h0
    for ai, alpha in enumerate(mis[1:], start=1):
        acc = np.zeros_like(h0)
        for beta in mis[1 : ai + 1]:
            if mi_le(beta, alpha):
                acc += mi_binom(alpha, beta) * data[idx[beta]] @ h[idx[mi_sub(alpha, beta)]]
        h[ai] = -h0 @ acc
    if scalar:
        h = h[..., 0, 0]
    return Jet(g.dim, g.order, h)


def jet_compose(s: Jet, g: Jet) -> Jet:
    """Jet of ``s o g`` at points x_p, given the jet of ``g`` at x_p and of ``s`` at g(x_p).

    ``g`` has fiber ``(n_s,)`` where ``n_s = s.dim``; the result has ``g.dim`` variables.
    """
    k = min(s.order, g.order)
    n_s, n_t = s.dim, g.dim
    # increments g - g(x_p), one scalar jet per target component
    incs = []
    for j in range(n_s):
        d = g.data[: count(n_t, k), :, j].copy()
        d[0] = 0.0
        incs.append(Jet(n_t, k, d))
    one = Jet.constant(n_t, k, np.ones(g.npts))
    powers = {(0,) * n_s: one}
    out = Jet.zeros(n_t, k, g.npts, s.fiber)
    for beta in multi_indices(n_s, k):
        if beta not in powers:
            j = next(i for i, b in enumerate(beta) if b > 0)
            prev = tuple(b - (i == j) for i, b in enumerate(beta))
            powers[beta] = jet_scalar_mul(powers[prev], incs[j])
        coeff = s[beta] / mi_factorial(beta)
        mono = powers[beta].data
        out.data += mono.reshape(mono.shape + (1,) * len(s.fiber)) * coeff[None]
    return out


class Series:
    """Polynomial in nilpotent parameters with jet coefficients, keyed by bitmask."""

    __slots__ = ("terms",)

    def __init__(self, terms: dict[int, Jet]):
        self.terms = terms

    @classmethod
    def single(cls, jet: Jet) -> "Series":
        return cls({0: jet})

    def __getitem__(self, mask: int) -> Jet:
        return self.terms[mask]

    def get(self, mask: int):
        return self.terms.get(mask)

    @property
    def base(self) -> Jet:
        return self.terms[0]

    def __add__(self, other: "Series") -> "Series":
        out = dict(self.terms)
        for m, j in other.terms.items():
            out[m] = out[m] + j if m in out else j
        return Series(out)

    def __neg__(self) -> "Series":
        return Series({m: -j for m, j in self.terms.items()})

    def __sub__(self, other: "Series") -> "Series":
        return self + (-other)

    def map(self, fn) -> "Series":
        return Series({m: fn(j) for m, j in self.terms.items()})

    def truncate(self, order: int) -> "Series":
        return self.map(lambda j: j.truncate(order))

    def combine(self, other: "Series", fn) -> "Series":
        """Bilinear combination: coefficient of t^M is the sum over disjoint A|B = M."""
        out: dict[int, Jet] = {}
        for ma, ja in self.terms.items():
            for mb, jb in other.terms.items():
                if ma & mb:
                    continue
                term = fn(ja, jb)
                m = ma | mb
                out[m] = out[m] + term if m in out else term
        return Series(out)

    def masks(self):
        return sorted(self.terms)


def series_inverse(g: Series) -> Series:
    """Inverse of a matrix- or scalar-valued series (base must be invertible)."""
    h0 = jet_inverse(g.base)
    scalar = h0.fiber == ()
    mul = jet_scalar_mul if scalar else (lambda a, b: jet_product(a, b, einsum_op("ij,jk->ik")))
    out = {0: h0}
    full = 0
    for m in g.terms:
        full |= m
    for mask in sorted(_submasks(full)):
        if mask == 0:
            continue
        acc = None
        for a in _submasks(mask):
            if a == 0 or a not in g.terms or (mask ^ a) not in out:
                continue
            term = mul(g.terms[a], out[mask ^ a])
            acc = term if acc is None else acc + term
        if acc is not None:
            out[mask] = -mul(h0, acc)
    return Series(out)


def _submasks(mask: int):
    sub = mask
    while True:
        yield sub
        if sub == 0:
            return
        sub = (sub - 1) & mask
