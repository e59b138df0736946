"""Symbolic distributions on chart domains and their pairing with test functions.

Distributions here are generalized functions: a locally integrable ``f`` acts by
``<f, psi> = int f psi dx`` in chart coordinates.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from math import inf

import numpy as np
import sympy as sp
from scipy.integrate import quad
from scipy.optimize import brentq

from . import boxes
from .expr import as_expr, coords, coord_names, eval_derivative, expr_jet, parse, to_text
from .jets import (
    Jet,
    count,
    jet_compose,
    jet_scalar_mul,
    mi_binom,
    mi_factorial,
    mi_le,
    mi_sub,
    multi_indices,
)
from .maps import Diffeomorphism
from .mollifiers import KernelNet, eval_kernel

PAIR_TOL = 1e-10


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance."""

    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message}; achieved error estimate {achieved:.3e}")
        self.achieved = achieved


class SupportError(ValueError):
    """A test function is not supported inside the distribution's domain."""


def whole_space(n: int) -> boxes.Box:
    return tuple((-inf, inf) for _ in range(n))


# ----------------------------------------------------------------------------
# test functions


class TestFunction:
    """Compactly supported smooth function with closed-form derivatives."""

    dim: int
    support: boxes.Box

    def jet(self, points, order: int) -> Jet:
        raise NotImplementedError

    def __call__(self, points) -> np.ndarray:
        return self.jet(np.atleast_2d(points), 0).value


def _masked_jet(expr, vars_, points, order, inside) -> Jet:
    pts = np.atleast_2d(points)
    data = np.zeros((count(len(vars_), order), len(pts)))
    if np.any(inside):
        sub = expr_jet(expr, vars_, pts[inside], order)
        data[:, inside] = sub.data
    return Jet(len(vars_), order, data)


class WitnessFunction(TestFunction):
    """``factor(x) * exp(-1 / (1 - |x - c|^2 / R^2))`` on the ball of radius R about c."""

    def __init__(self, center, radius: float, factor="1"):
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.dim = len(self.center)
        self.radius = float(radius)
        self.vars = coords(self.dim)
        f = parse(factor, coord_names(self.dim)) if isinstance(factor, str) else sp.sympify(factor)
        self.factor = f
        s = sum((v - float(c)) ** 2 for v, c in zip(self.vars, self.center)) / self.radius**2
        self.expr = f * sp.exp(-1 / (1 - s))
        self.support = tuple((c - self.radius, c + self.radius) for c in self.center)

    def jet(self, points, order: int) -> Jet:
        pts = np.atleast_2d(points)
        s = np.sum((pts - self.center) ** 2, axis=-1) / self.radius**2
        return _masked_jet(self.expr, self.vars, pts, order, (1.0 - s) > 1e-3)

    def __repr__(self):
        return f"WitnessFunction(c={self.center.tolist()}, R={self.radius:g}, f={to_text(self.factor)})"


class KernelTest(TestFunction):
    """``y -> d_x^alpha k_eps(x, y)`` for a fixed point x."""

    def __init__(self, kernel: KernelNet, eps: float, x, alpha=None):
        self.kernel = kernel
        self.eps = eps
        self.x = np.atleast_1d(np.asarray(x, dtype=float))
        self.dim = kernel.n
        self.alpha = tuple(alpha) if alpha is not None else (0,) * self.dim
        r = kernel.radius(eps)
        self.support = tuple((c - r, c + r) for c in self.x)

    def jet(self, points, order: int) -> Jet:
        pts = np.atleast_2d(points)
        data = np.stack(
            [eval_kernel(self.kernel, self.eps, self.x[None], pts, self.alpha, beta) for beta in multi_indices(self.dim, order)]
        )
        return Jet(self.dim, order, data)


class ProductTest(TestFunction):
    """``f * psi`` for a closed-form f."""

    def __init__(self, factor, psi: TestFunction):
        self.factor = as_expr(factor, psi.dim)
        self.psi = psi
        self.dim = psi.dim
        self.support = psi.support
        self.vars = coords(self.dim)

    def jet(self, points, order: int) -> Jet:
        f = expr_jet(self.factor, self.vars, points, order)
        return jet_scalar_mul(f, self.psi.jet(points, order))


class DivergenceTest(TestFunction):
    """``sum_i d_i (X^i psi)``."""

    def __init__(self, field_exprs, psi: TestFunction):
        self.field = tuple(as_expr(e, psi.dim) for e in field_exprs)
        self.psi = psi
        self.dim = psi.dim
        self.support = psi.support
        self.vars = coords(self.dim)

    def jet(self, points, order: int) -> Jet:
        p = self.psi.jet(points, order + 1)
        out = None
        for i, xi in enumerate(self.field):
            term = jet_scalar_mul(expr_jet(xi, self.vars, points, order + 1), p).partial(i)
            out = term if out is None else out + term
        return out


class PulledTest(TestFunction):
    """``(psi o mu) * |det D mu|`` on the source of mu."""

    def __init__(self, psi: TestFunction, mu: Diffeomorphism):
        self.psi = psi
        self.mu = mu
        self.dim = mu.n
        self.vars = coords(self.dim)
        corners = boxes.grid(psi.support, 5)
        pre = mu.apply_inverse(corners)
        self.support = boxes.around(pre, 0.0)
        pts = boxes.grid(mu.source, 5)
        sign = float(np.sign(np.median(mu.det(pts))))
        self.jac = sign * mu.det_expr

    def jet(self, points, order: int) -> Jet:
        pts = np.atleast_2d(points)
        g = self.mu.jet(pts, order)
        s = self.psi.jet(g.value, order)
        comp = jet_compose(s, g)
        return jet_scalar_mul(expr_jet(self.jac, self.vars, pts, order), comp)


# ----------------------------------------------------------------------------
# quadrature


def _quad1(fn, a: float, b: float, points=None, tol: float = PAIR_TOL) -> float:
    if not a < b:
        return 0.0
    pts = None
    if points:
        pts = sorted(p for p in points if a < p < b) or None
    res = quad(fn, a, b, epsabs=tol, epsrel=tol, limit=400, points=pts, full_output=1)
    val, err = res[0], res[1]
    if len(res) > 3 and err > tol * max(1.0, abs(val)):
        raise QuadratureError(f"quadrature on [{a:g}, {b:g}] did not converge", err)
    return val


def _sign_changes(fn, lo: float, hi: float, samples: int = 401) -> list[float]:
    t = np.linspace(lo, hi, samples)
    v = np.array([fn(s) for s in t])
    roots = []
    for i in range(samples - 1):
        if v[i] == 0.0:
            roots.append(t[i])
        elif v[i] * v[i + 1] < 0:
            roots.append(brentq(fn, t[i], t[i + 1], xtol=1e-15))
    return roots


def integrate(values, box: boxes.Box, conds=(), breakpoints=(), tol: float = PAIR_TOL) -> float:
    """Adaptive iterated quadrature of ``values`` (vectorized in points) over a bounded box.

    ``conds`` are closed-form functions g; the integrand is restricted to g > 0 everywhere.
    """
    n = len(box)
    vars_ = coords(n)
    cond_fns = [lambda p, g=g: eval_derivative(g, vars_, (0,) * n, p) for g in conds]

    def inner(prefix: list[float], depth: int) -> float:
        lo, hi = box[depth]

        def point(t):
            return np.array([prefix + [t] + [0.0] * (n - depth - 1)])

        if depth == n - 1:

            def f(t):
                p = point(t)
                if any(c(p)[0] <= 0 for c in cond_fns):
                    return 0.0
                return float(values(p)[0])

            cuts = list(breakpoints)
            for c in cond_fns:
                cuts += _sign_changes(lambda t, c=c: float(c(point(t))[0]), lo, hi)
            return _quad1(f, lo, hi, cuts, tol)
        return _quad1(lambda t: inner(prefix + [t], depth + 1), lo, hi, None, tol)

    return inner([], 0)


# ----------------------------------------------------------------------------
# distributions


class SymbolicDistribution:
    dim: int
    domain: boxes.Box

    @property
    def order(self) -> int:
        return 0

    def __add__(self, other):
        return LinearCombination([(1.0, self), (1.0, other)], self.dim, self.domain)

    def __rmul__(self, c: float):
        return LinearCombination([(float(c), self)], self.dim, self.domain)

    def __sub__(self, other):
        return LinearCombination([(1.0, self), (-1.0, other)], self.dim, self.domain)

    def singular_points(self) -> list[np.ndarray]:
        return []

    def to_text(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)


def _domain_record(d):
    return [[_num(lo), _num(hi)] for lo, hi in d]


def _num(v):
    return v if np.isfinite(v) else ("inf" if v > 0 else "-inf")


def _parse_domain(rec):
    return tuple((float(lo), float(hi)) for lo, hi in rec)


@dataclass
class DeltaDerivative(SymbolicDistribution):
    """``coeff * d^gamma delta_p``: pairs to ``coeff * (-1)^|gamma| d^gamma psi(p)``."""

    point: tuple
    gamma: tuple = None
    coeff: float = 1.0
    domain: boxes.Box = None

    def __post_init__(self):
        self.point = tuple(float(v) for v in np.atleast_1d(self.point))
        self.dim = len(self.point)
        self.gamma = tuple(self.gamma) if self.gamma is not None else (0,) * self.dim
        self.domain = self.domain or whole_space(self.dim)

    @property
    def order(self) -> int:
        return sum(self.gamma)

    def singular_points(self):
        return [np.array(self.point)]

    def to_record(self):
        return {"kind": "delta", "point": list(self.point), "gamma": list(self.gamma), "coeff": self.coeff,
                "domain": _domain_record(self.domain)}


@dataclass
class SmoothDensity(SymbolicDistribution):
    expr: object
    dim: int = 1
    domain: boxes.Box = None

    def __post_init__(self):
        self.expr = parse(self.expr, coord_names(self.dim)) if isinstance(self.expr, str) else sp.sympify(self.expr)
        self.domain = self.domain or whole_space(self.dim)

    def to_record(self):
        return {"kind": "smooth", "expr": to_text(self.expr), "dim": self.dim, "domain": _domain_record(self.domain)}


@dataclass
class PiecewiseSmooth(SymbolicDistribution):
    """Sum of ``density_k * indicator(region_k)``; regions are intersections of ``g > 0``."""

    pieces: list
    dim: int = 1
    domain: boxes.Box = None

    def __post_init__(self):
        names = coord_names(self.dim)
        out = []
        for conds, dens in self.pieces:
            cs = [parse(c, names) if isinstance(c, str) else sp.sympify(c) for c in conds]
            cs = [_as_positive(c) for c in cs]
            d = parse(dens, names) if isinstance(dens, str) else sp.sympify(dens)
            out.append((tuple(cs), d))
        self.pieces = out
        self.domain = self.domain or whole_space(self.dim)
        self._intervals = None

    def intervals(self) -> list[tuple[float, float, sp.Expr]]:
        """One-dimensional pieces as (a, b, density) with open intervals inside the domain."""
        if self.dim != 1:
            raise ValueError("intervals are only defined in one dimension")
        if self._intervals is None:
            (x,) = coords(1)
            lo, hi = self.domain[0]
            out = []
            for conds, dens in self.pieces:
                cuts = {lo, hi}
                for g in conds:
                    cuts.update(_roots_1d(g, x, lo, hi))
                cuts = sorted(cuts)
                for a, b in zip(cuts[:-1], cuts[1:]):
                    mid = _midpoint(a, b)
                    if all(float(g.subs(x, mid)) > 0 for g in conds):
                        if out and out[-1][1] == a and out[-1][2] == dens:
                            out[-1] = (out[-1][0], b, dens)
                        else:
                            out.append((a, b, dens))
            self._intervals = out
        return self._intervals

    def singular_points(self):
        if self.dim != 1:
            return []
        pts = set()
        for a, b, _ in self.intervals():
            for e in (a, b):
                if np.isfinite(e):
                    pts.add(e)
        return [np.array([p]) for p in sorted(pts)]

    def to_record(self):
        return {
            "kind": "piecewise",
            "dim": self.dim,
            "pieces": [[[to_text(c) + " > 0" for c in conds], to_text(d)] for conds, d in self.pieces],
            "domain": _domain_record(self.domain),
        }


def _as_positive(c):
    """Normalize a relation into an expression g with region g > 0."""
    if isinstance(c, sp.core.relational.Relational):
        if isinstance(c, (sp.StrictGreaterThan, sp.GreaterThan)):
            return sp.expand(c.lhs - c.rhs)
        if isinstance(c, (sp.StrictLessThan, sp.LessThan)):
            return sp.expand(c.rhs - c.lhs)
        raise ValueError(f"unsupported region condition {c}")
    return sp.sympify(c)


def _midpoint(a, b):
    if np.isfinite(a) and np.isfinite(b):
        return 0.5 * (a + b)
    if np.isfinite(a):
        return a + 1.0
    if np.isfinite(b):
        return b - 1.0
    return 0.0


def _roots_1d(g, x, lo, hi) -> list[float]:
    try:
        sol = sp.solveset(sp.Eq(g, 0), x, sp.Interval(lo, hi))
        if isinstance(sol, sp.FiniteSet):
            return sorted(float(s) for s in sol)
    except Exception:
        pass
    a = lo if np.isfinite(lo) else -100.0
    b = hi if np.isfinite(hi) else 100.0
    fn = sp.lambdify([x], g, "numpy")
    return _sign_changes(lambda t: float(fn(t)), a, b, 2001)


@dataclass
class LinearCombination(SymbolicDistribution):
    terms: list
    dim: int = 1
    domain: boxes.Box = None

    def __post_init__(self):
        self.terms = [(float(c), d) for c, d in self.terms if c != 0.0]
        self.domain = self.domain or whole_space(self.dim)

    @property
    def order(self) -> int:
        return max((d.order for _, d in self.terms), default=0)

    def singular_points(self):
        out = []
        for _, d in self.terms:
            out.extend(d.singular_points())
        return out

    def to_record(self):
        return {"kind": "combination", "dim": self.dim, "domain": _domain_record(self.domain),
                "terms": [[c, d.to_record()] for c, d in self.terms]}


def zero(dim: int = 1, domain=None) -> LinearCombination:
    return LinearCombination([], dim, domain)


@dataclass
class LieWrapper(SymbolicDistribution):
    """``L_X u`` through the adjoint identity, for variants without a closed form."""

    field: tuple
    inner: SymbolicDistribution

    def __post_init__(self):
        self.dim = self.inner.dim
        self.domain = self.inner.domain
        self.field = tuple(as_expr(e, self.dim) for e in self.field)

    @property
    def order(self) -> int:
        return self.inner.order + 1

    def singular_points(self):
        return self.inner.singular_points()

    def to_record(self):
        return {"kind": "lie", "field": [to_text(e) for e in self.field], "inner": self.inner.to_record()}


@dataclass
class ProductWrapper(SymbolicDistribution):
    factor: object
    inner: SymbolicDistribution

    def __post_init__(self):
        self.dim = self.inner.dim
        self.domain = self.inner.domain
        self.factor = as_expr(self.factor, self.dim)

    @property
    def order(self) -> int:
        return self.inner.order

    def singular_points(self):
        return self.inner.singular_points()

    def to_record(self):
        return {"kind": "product", "factor": to_text(self.factor), "inner": self.inner.to_record()}


@dataclass
class PushforwardWrapper(SymbolicDistribution):
    mu: Diffeomorphism
    inner: SymbolicDistribution

    def __post_init__(self):
        self.dim = self.inner.dim
        self.domain = self.mu.target

    @property
    def order(self) -> int:
        return self.inner.order

    def singular_points(self):
        pts = self.inner.singular_points()
        return [self.mu(p[None])[0] for p in pts]

    def to_record(self):
        return {"kind": "pushforward", "map": self.mu.to_record(), "inner": self.inner.to_record()}


def from_record(rec: dict) -> SymbolicDistribution:
    kind = rec["kind"]
    if kind == "delta":
        return DeltaDerivative(tuple(rec["point"]), tuple(rec["gamma"]), float(rec["coeff"]), _parse_domain(rec["domain"]))
    if kind == "smooth":
        return SmoothDensity(rec["expr"], int(rec["dim"]), _parse_domain(rec["domain"]))
    if kind == "piecewise":
        return PiecewiseSmooth([(c, d) for c, d in rec["pieces"]], int(rec["dim"]), _parse_domain(rec["domain"]))
    if kind == "combination":
        return LinearCombination([(c, from_record(d)) for c, d in rec["terms"]], int(rec["dim"]), _parse_domain(rec["domain"]))
    if kind == "lie":
        d = from_record(rec["inner"])
        return LieWrapper(tuple(parse(e, coord_names(d.dim)) for e in rec["field"]), d)
    if kind == "product":
        d = from_record(rec["inner"])
        return ProductWrapper(parse(rec["factor"], coord_names(d.dim)), d)
    if kind == "pushforward":
        return PushforwardWrapper(Diffeomorphism.from_record(rec["map"]), from_record(rec["inner"]))
    raise ValueError(f"unknown distribution kind {kind!r}")


def from_text(text: str) -> SymbolicDistribution:
    return from_record(json.loads(text))


# ----------------------------------------------------------------------------
# pairing


def _check_support(psi: TestFunction, domain: boxes.Box) -> None:
    for (slo, shi), (dlo, dhi) in zip(psi.support, domain):
        if slo < dlo - 1e-12 or shi > dhi + 1e-12:
            raise SupportError(
                f"test function support {boxes.to_text(psi.support)} leaves the domain {boxes.to_text(domain)}"
            )


def pair(u: SymbolicDistribution, psi: TestFunction, tol: float = PAIR_TOL) -> float:
    """``<u, psi>``: closed form for point-supported terms, adaptive quadrature for densities."""
    _check_support(psi, u.domain)
    if isinstance(u, DeltaDerivative):
        k = u.order
        jet = psi.jet(np.array([u.point]), k)
        sign = -1.0 if k % 2 else 1.0
        return u.coeff * sign * float(jet[u.gamma][0])
    if isinstance(u, LinearCombination):
        return sum(c * pair(d, psi, tol) for c, d in u.terms)
    if isinstance(u, SmoothDensity):
        vars_ = coords(u.dim)
        zero_ = (0,) * u.dim
        box = boxes.intersect(psi.support, u.domain)
        if box is None:
            return 0.0
        return integrate(lambda p: eval_derivative(u.expr, vars_, zero_, p) * psi(p), box, tol=tol)
    if isinstance(u, PiecewiseSmooth):
        vars_ = coords(u.dim)
        zero_ = (0,) * u.dim
        total = 0.0
        if u.dim == 1:
            (slo, shi), = psi.support
            for a, b, dens in u.intervals():
                lo, hi = max(a, slo), min(b, shi)
                if lo < hi:
                    total += integrate(lambda p, d=dens: eval_derivative(d, vars_, zero_, p) * psi(p), ((lo, hi),), tol=tol)
            return total
        box = boxes.intersect(psi.support, u.domain)
        if box is None:
            return 0.0
        for conds, dens in u.pieces:
            total += integrate(lambda p, d=dens: eval_derivative(d, vars_, zero_, p) * psi(p), box, conds, tol=tol)
        return total
    if isinstance(u, LieWrapper):
        return -pair(u.inner, DivergenceTest(u.field, psi), tol)
    if isinstance(u, ProductWrapper):
        return pair(u.inner, ProductTest(u.factor, psi), tol)
    if isinstance(u, PushforwardWrapper):
        return pair(u.inner, PulledTest(psi, u.mu), tol)
    raise TypeError(f"cannot pair {type(u).__name__}")


# ----------------------------------------------------------------------------
# operations


def _value_at(expr, point, alpha=None) -> float:
    n = len(point)
    alpha = alpha or (0,) * n
    return float(eval_derivative(expr, coords(n), alpha, np.array([point]))[0])


def multiply(u: SymbolicDistribution, factor) -> SymbolicDistribution:
    """``f * u`` for a closed-form smooth f."""
    f = as_expr(factor, u.dim)
    if f == 1:
        return u
    if isinstance(u, DeltaDerivative):
        terms = []
        for beta in multi_indices(u.dim, u.order):
            if not mi_le(beta, u.gamma):
                continue
            c = (-1.0) ** (u.order + sum(beta)) * mi_binom(u.gamma, beta) * _value_at(f, u.point, mi_sub(u.gamma, beta))
            if c != 0.0:
                terms.append((u.coeff * c, DeltaDerivative(u.point, beta, 1.0, u.domain)))
        return LinearCombination(terms, u.dim, u.domain)
    if isinstance(u, SmoothDensity):
        return SmoothDensity(f * u.expr, u.dim, u.domain)
    if isinstance(u, PiecewiseSmooth):
        return PiecewiseSmooth([(c, f * d) for c, d in u.pieces], u.dim, u.domain)
    if isinstance(u, LinearCombination):
        return LinearCombination([(c, multiply(d, f)) for c, d in u.terms], u.dim, u.domain)
    return ProductWrapper(f, u)


def lie_derivative_dist(field_exprs, u: SymbolicDistribution) -> SymbolicDistribution:
    """``L_X u`` with ``<L_X u, psi> = -<u, div(X psi)>``; X given by closed-form components."""
    n = u.dim
    xs = tuple(as_expr(e, n) for e in field_exprs)
    vars_ = coords(n)
    if isinstance(u, DeltaDerivative):
        terms = []
        for beta in multi_indices(n, u.order + 1):
            c = 0.0
            for i in range(n):
                top = tuple(g + (j == i) for j, g in enumerate(u.gamma))
                if mi_le(beta, top):
                    c += mi_binom(top, beta) * _value_at(xs[i], u.point, mi_sub(top, beta))
            c *= -((-1.0) ** u.order) * (-1.0) ** sum(beta)
            if c != 0.0:
                terms.append((u.coeff * c, DeltaDerivative(u.point, beta, 1.0, u.domain)))
        return LinearCombination(terms, n, u.domain)
    if isinstance(u, SmoothDensity):
        return SmoothDensity(sum(xs[i] * sp.diff(u.expr, vars_[i]) for i in range(n)), n, u.domain)
    if isinstance(u, PiecewiseSmooth) and n == 1:
        (x,) = vars_
        pieces, deltas = [], []
        lo, hi = u.domain[0]
        for a, b, dens in u.intervals():
            conds = ([x - a] if np.isfinite(a) else []) + ([b - x] if np.isfinite(b) else [])
            pieces.append((conds, xs[0] * sp.diff(dens, x)))
            if np.isfinite(a) and a > lo:
                deltas.append((float(dens.subs(x, a)) * _value_at(xs[0], (a,)), DeltaDerivative((a,), (0,), 1.0, u.domain)))
            if np.isfinite(b) and b < hi:
                deltas.append((-float(dens.subs(x, b)) * _value_at(xs[0], (b,)), DeltaDerivative((b,), (0,), 1.0, u.domain)))
        smooth = PiecewiseSmooth(pieces, 1, u.domain)
        return LinearCombination([(1.0, smooth)] + deltas, 1, u.domain)
    if isinstance(u, LinearCombination):
        return LinearCombination([(c, lie_derivative_dist(xs, d)) for c, d in u.terms], n, u.domain)
    return LieWrapper(xs, u)


def restrict_dist(u: SymbolicDistribution, v) -> SymbolicDistribution:
    """Restriction to an open box ``v`` inside the domain."""
    v = boxes.as_box(v)
    if not boxes.subset(v, u.domain):
        raise SupportError(f"{boxes.to_text(v)} is not inside the domain {boxes.to_text(u.domain)}")
    if isinstance(u, DeltaDerivative):
        inside = all(lo < p < hi for p, (lo, hi) in zip(u.point, v))
        return DeltaDerivative(u.point, u.gamma, u.coeff, v) if inside else zero(u.dim, v)
    if isinstance(u, SmoothDensity):
        return SmoothDensity(u.expr, u.dim, v)
    if isinstance(u, PiecewiseSmooth):
        if u.dim == 1:
            (lo, hi), = v
            keep = [(a, b, d) for a, b, d in u.intervals() if max(a, lo) < min(b, hi)]
            if len(keep) == 1 and keep[0][0] <= lo and keep[0][1] >= hi:
                return SmoothDensity(keep[0][2], 1, v)
            (x,) = coords(1)
            pieces = [([x - a] if np.isfinite(a) else [], d) for a, b, d in keep]
            for (a, b, d), piece in zip(keep, pieces):
                if np.isfinite(b):
                    piece[0].append(b - x)
            return PiecewiseSmooth(pieces, 1, v)
        return PiecewiseSmooth(list(u.pieces), u.dim, v)
    if isinstance(u, LinearCombination):
        return LinearCombination([(c, restrict_dist(d, v)) for c, d in u.terms], u.dim, v)
    if isinstance(u, LieWrapper):
        return LieWrapper(u.field, restrict_dist(u.inner, v))
    if isinstance(u, ProductWrapper):
        return ProductWrapper(u.factor, restrict_dist(u.inner, v))
    raise TypeError(f"cannot restrict {type(u).__name__}")


def pushforward_dist(mu: Diffeomorphism, u: SymbolicDistribution) -> SymbolicDistribution:
    """``mu_* u`` with ``<mu_* u, psi> = <u, (psi o mu) |det D mu|>``."""
    n = u.dim
    vars_ = coords(n)
    back = dict(zip(vars_, mu.inverse_exprs))
    if isinstance(u, DeltaDerivative):
        p = u.point
        q = tuple(float(v) for v in mu(np.array([p]))[0])
        sign = float(np.sign(mu.det(np.array([p]))[0]))
        jac = sign * mu.det_expr
        terms = []
        for beta in multi_indices(n, u.order):
            poly = jac
            for j in range(n):
                poly = poly * (mu.forward_exprs[j] - q[j]) ** beta[j]
            poly = poly / mi_factorial(beta)
            c = (-1.0) ** u.order * _value_at(poly, p, u.gamma) * (-1.0) ** sum(beta)
            if abs(c) > 1e-15:
                terms.append((u.coeff * c, DeltaDerivative(q, beta, 1.0, mu.target)))
        return LinearCombination(terms, n, mu.target)
    if isinstance(u, SmoothDensity):
        return SmoothDensity(u.expr.xreplace(back), n, mu.target)
    if isinstance(u, PiecewiseSmooth):
        pieces = [([c.xreplace(back) for c in conds], d.xreplace(back)) for conds, d in u.pieces]
        return PiecewiseSmooth(pieces, n, mu.target)
    if isinstance(u, LinearCombination):
        return LinearCombination([(c, pushforward_dist(mu, d)) for c, d in u.terms], n, mu.target)
    return PushforwardWrapper(mu, u)


# ----------------------------------------------------------------------------
# named distributions and a small text syntax


def delta(point=0.0, gamma=None, dim=None) -> DeltaDerivative:
    pt = tuple(np.atleast_1d(point).astype(float))
    return DeltaDerivative(pt, gamma)


def heaviside(at: float = 0.0) -> PiecewiseSmooth:
    return PiecewiseSmooth([([f"x - ({at})"], "1")], 1)


def indicator(a: float, b: float) -> PiecewiseSmooth:
    return PiecewiseSmooth([([f"x - ({a})", f"({b}) - x"], "1")], 1)


def zoo() -> dict[str, SymbolicDistribution]:
    """A fixed family of one-dimensional distributions used as association candidates."""
    return {
        "zero": zero(1),
        "delta": delta(0.0),
        "delta'": delta(0.0, (1,)),
        "delta''": delta(0.0, (2,)),
        "heaviside": heaviside(0.0),
        "sign": PiecewiseSmooth([(["x"], "1"), (["-x"], "-1")], 1),
        "abs": PiecewiseSmooth([(["x"], "x"), (["-x"], "-x")], 1),
        "one": SmoothDensity("1", 1),
    }


_ATOM = re.compile(r"^\s*(?:([-+]?\s*[0-9.eE+-]+)\s*\*\s*)?([a-z]+)\((.*)\)\s*$", re.S)


def _split_top(text: str, sep: str) -> list[str]:
    parts, depth, cur = [], 0, ""
    for ch in text:
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        if ch == sep and depth == 0:
            parts.append(cur)
            cur = ""
        else:
            cur += ch
    parts.append(cur)
    return parts


def parse_spec(text: str, dim: int = 1, domain=None) -> SymbolicDistribution:
    """Parse e.g. ``delta(0)``, ``delta(0; 1)``, ``heaviside(0)``, ``smooth(sin(x))``,
    ``indicator(-1, 1)``, ``piecewise(x > 0: 1; x < 0: exp(x))`` and sums ``2*delta(0) + smooth(x)``."""
    terms = []
    for part in _split_top(text, "+"):
        if not part.strip():
            continue
        m = _ATOM.match(part)
        if not m:
            raise ValueError(f"cannot parse distribution term {part.strip()!r}")
        coef = float(m.group(1).replace(" ", "")) if m.group(1) else 1.0
        name, args = m.group(2), m.group(3)
        terms.append((coef, _atom(name, args, dim, domain)))
    if len(terms) == 1 and terms[0][0] == 1.0:
        return terms[0][1]
    return LinearCombination(terms, dim, domain)


def _atom(name, args, dim, domain):
    names = coord_names(dim)
    if name == "delta":
        fields = [a.strip() for a in args.split(";")]
        point = tuple(float(v) for v in fields[0].split(","))
        gamma = tuple(int(v) for v in fields[1].split(",")) if len(fields) > 1 else None
        return DeltaDerivative(point, gamma, 1.0, domain)
    if name == "heaviside":
        return PiecewiseSmooth([([f"x - ({float(args)})"], "1")], 1, domain)
    if name == "indicator":
        a, b = (float(v) for v in args.split(","))
        return PiecewiseSmooth([([f"x - ({a})", f"({b}) - x"], "1")], 1, domain)
    if name == "smooth":
        return SmoothDensity(parse(args, names), dim, domain)
    if name == "piecewise":
        pieces = []
        for chunk in _split_top(args, ";"):
            conds, dens = chunk.rsplit(":", 1)
            pieces.append(([c for c in _split_top(conds, "&")], dens.strip()))
        return PiecewiseSmooth(pieces, dim, domain)
    raise ValueError(f"unknown distribution {name!r}")


# ----------------------------------------------------------------------------
# sections


@dataclass
class DistributionalSection:
    """Distribution-valued components (flattened row-major over the fiber) in each chart."""

    bundle: object
    components: dict = field(default_factory=dict)

    def __post_init__(self):
        for chart, comps in self.components.items():
            if len(comps) != self.bundle.rank:
                raise ValueError(f"chart {chart!r}: expected {self.bundle.rank} components, got {len(comps)}")
            self.components[chart] = list(comps)

    @classmethod
    def uniform(cls, bundle, comps, charts=None) -> "DistributionalSection":
        names = charts or list(bundle.manifold.charts)
        out = {}
        for c in names:
            dom = bundle.manifold.chart(c).domain
            out[c] = [_with_domain(d, dom) for d in comps]
        return cls(bundle, out)

    @classmethod
    def scalar(cls, bundle, u) -> "DistributionalSection":
        return cls.uniform(bundle, [u])

    def chart_components(self, chart: str) -> list:
        try:
            return self.components[chart]
        except KeyError:
            raise KeyError(f"section has no components in chart {chart!r}") from None

    def singular_points(self, chart: str) -> list:
        out = []
        for d in self.chart_components(chart):
            out.extend(d.singular_points())
        return out

    def to_record(self):
        return {"bundle": self.bundle.name, "components": {c: [d.to_record() for d in comps] for c, comps in sorted(self.components.items())}}


def _with_domain(d: SymbolicDistribution, dom):
    if boxes.subset(dom, d.domain) and dom != d.domain:
        return restrict_dist(d, dom)
    return d


def lie_derivative_section(x_exprs, u: DistributionalSection, chart: str) -> list:
    """Components of ``L_X u`` in one chart, using the tensor-slot formula."""
    from .geometry import DOWN, UP

    comps = u.chart_components(chart)
    fiber = u.bundle.fiber
    kinds = u.bundle.kinds
    n = u.bundle.manifold.n
    vars_ = coords(n)
    xs = [parse(e, coord_names(n)) if isinstance(e, str) else sp.sympify(e) for e in x_exprs]
    arr = np.empty(fiber, dtype=object)
    for flat, idx in enumerate(np.ndindex(fiber)):
        arr[idx] = comps[flat]
    out = []
    for idx in np.ndindex(fiber):
        terms = [(1.0, lie_derivative_dist(xs, arr[idx]))]
        for axis, kind in enumerate(kinds):
            if kind not in (UP, DOWN):
                continue
            for k in range(n):
                src = list(idx)
                src[axis] = k
                other = arr[tuple(src)]
                if kind == UP:
                    f = -sp.diff(xs[idx[axis]], vars_[k])
                else:
                    f = sp.diff(xs[k], vars_[idx[axis]])
                if f != 0:
                    terms.append((1.0, multiply(other, f)))
        out.append(LinearCombination(terms, n, arr[idx].domain) if len(terms) > 1 else terms[0][1])
    return out
