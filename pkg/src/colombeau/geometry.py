"""Charted manifolds, bundles and the classical smooth calculus on them.

Conventions: connection coefficients are stored as ``gamma[i, j, k]`` meaning
``nabla_{d_i} b_j = gamma[i, j, k] b_k``; curvature as ``R[i, j, k, l]`` meaning
``R(d_i, d_j) b_k = R[i, j, k, l] b_l``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations, permutations
from math import pi

import numpy as np
import sympy as sp

from . import boxes
from .expr import coords, derivative, eval_derivative, expr_jet, parse, to_text
from .jets import Jet

UP, DOWN, EXT, EXTDUAL = "up", "down", "ext", "extdual"
_DUAL = {UP: DOWN, DOWN: UP, EXT: EXTDUAL, EXTDUAL: EXT}


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Chart:
    name: str
    domain: boxes.Box
    periods: tuple = ()  # coordinate periods used to wrap points into the domain


@dataclass
class ChartedManifold:
    """Charts with box domains and closed-form transition maps ``tau[(a, b)]``."""

    name: str
    n: int
    charts: dict[str, Chart]
    transitions: dict[tuple[str, str], tuple[sp.Expr, ...]] = field(default_factory=dict)

    def __post_init__(self):
        self.vars = coords(self.n)
        for name in self.charts:
            self.transitions.setdefault((name, name), tuple(self.vars))

    def chart(self, name: str) -> Chart:
        try:
            return self.charts[name]
        except KeyError:
            raise GeometryError(f"unknown chart {name!r} on {self.name}") from None

    def has_transition(self, a: str, b: str) -> bool:
        return (a, b) in self.transitions

    def transition(self, a: str, b: str, points) -> np.ndarray:
        """Coordinates in chart b of points given in chart a."""
        exprs = self.transitions[(a, b)]
        pts = np.atleast_2d(points)
        zero = (0,) * self.n
        return np.stack([eval_derivative(e, self.vars, zero, pts) for e in exprs], axis=-1)

    def transition_jet(self, a: str, b: str, points, order: int) -> Jet:
        return expr_jet(np.array(self.transitions[(a, b)], dtype=object), self.vars, points, order)

    def jacobian(self, a: str, b: str, points) -> np.ndarray:
        """d tau_ab / dx, shape (npts, n, n) with [p, i, j] = d tau^i / d x^j."""
        jet = self.transition_jet(a, b, points, 1)
        return np.stack([jet[tuple(int(i == j) for i in range(self.n))] for j in range(self.n)], axis=-1)

    def in_overlap(self, a: str, b: str, points) -> np.ndarray:
        """Mask of points (chart a) that also lie in chart b."""
        pts = np.atleast_2d(points)
        inside_a = boxes.contains_points(self.chart(a).domain, pts, 1e-12)
        if (a, b) not in self.transitions:
            return np.zeros(len(pts), dtype=bool)
        img = self.transition(a, b, pts)
        dom = self.chart(b).domain
        ok = np.ones(len(pts), dtype=bool)
        for i, (lo, hi) in enumerate(dom):
            ok &= (img[:, i] > lo + 1e-12) & (img[:, i] < hi - 1e-12)
        return inside_a & ok

    def cocycle_residual(self, samples: int = 41) -> float:
        """Max |tau_bc(tau_ab(x)) - tau_ac(x)| over sampled triple overlaps."""
        worst = 0.0
        names = list(self.charts)
        for a, b, c in permutations(names, 3) if len(names) >= 3 else []:
            if not all(self.has_transition(*p) for p in ((a, b), (b, c), (a, c))):
                continue
            pts = boxes.grid(self.chart(a).domain, samples)
            mask = self.in_overlap(a, b, pts) & self.in_overlap(a, c, pts)
            if not np.any(mask):
                continue
            p = pts[mask]
            lhs = self.transition(b, c, self.transition(a, b, p))
            rhs = self.transition(a, c, p)
            worst = max(worst, float(np.max(np.abs(lhs - rhs))))
        for a, b in combinations(names, 2):
            if not (self.has_transition(a, b) and self.has_transition(b, a)):
                continue
            pts = boxes.grid(self.chart(a).domain, samples)
            mask = self.in_overlap(a, b, pts)
            if np.any(mask):
                back = self.transition(b, a, self.transition(a, b, pts[mask]))
                worst = max(worst, float(np.max(np.abs(back - pts[mask]))))
        return worst


def box_manifold(bounds) -> ChartedManifold:
    dom = boxes.as_box(bounds)
    return ChartedManifold("box", len(dom), {"main": Chart("main", dom)})


def _wrap(sym, lo):
    """Translate an angle coordinate by 2pi so it lands in (lo, lo + 2pi)."""
    return sp.Piecewise((sym + 2 * sp.pi, sym < lo), (sym - 2 * sp.pi, sym > lo + 2 * sp.pi), (sym, True))


def _angle_manifold(name: str, n: int) -> ChartedManifold:
    starts = {"A": -pi, "B": 0.0}
    charts = {}
    labels = ["".join(p) for p in _product("AB", n)]
    for lab in labels:
        dom = tuple((starts[c], starts[c] + 2 * pi) for c in lab)
        charts[lab] = Chart(lab, dom, periods=(2 * pi,) * n)
    vars_ = coords(n)
    trans = {}
    for a in labels:
        for b in labels:
            if a != b:
                trans[(a, b)] = tuple(
                    _wrap(vars_[i], sp.Float(starts[b[i]])) if a[i] != b[i] else vars_[i] for i in range(n)
                )
    return ChartedManifold(name, n, charts, trans)


def _product(chars, n):
    if n == 0:
        yield ()
        return
    for rest in _product(chars, n - 1):
        for c in chars:
            yield rest + (c,)


def circle() -> ChartedManifold:
    """S^1 with two angle charts on (-pi, pi) and (0, 2pi)."""
    return _angle_manifold("circle", 1)


def torus() -> ChartedManifold:
    """T^2 with four angle charts, products of the two circle charts."""
    return _angle_manifold("torus", 2)


def named_manifold(name: str, **kw) -> ChartedManifold:
    if name == "box":
        return box_manifold(kw.get("bounds", [(-2.0, 2.0)]))
    if name == "circle":
        return circle()
    if name == "torus":
        return torus()
    raise GeometryError(f"unknown manifold {name!r}")


@dataclass
class Bundle:
    """A tensor-type bundle: a list of slots over a charted manifold.

    Slots are ``(kind, size)`` with kind ``up``/``down`` (tangent and cotangent
    factors) or ``ext``/``extdual`` (a trivialized external factor and its dual).
    """

    name: str
    manifold: ChartedManifold
    slots: tuple[tuple[str, int], ...]
    ext_transitions: dict = field(default_factory=dict)

    @property
    def fiber(self) -> tuple[int, ...]:
        return tuple(s for _, s in self.slots)

    @property
    def rank(self) -> int:
        return int(np.prod(self.fiber)) if self.slots else 1

    @property
    def kinds(self) -> tuple[str, ...]:
        return tuple(k for k, _ in self.slots)

    def dual(self) -> "Bundle":
        return Bundle(
            _dual_name(self.name),
            self.manifold,
            tuple((_DUAL[k], s) for k, s in self.slots),
            self.ext_transitions,
        )

    def tensor(self, other: "Bundle") -> "Bundle":
        if other.manifold is not self.manifold:
            raise GeometryError("tensor product of bundles over different manifolds")
        if not self.slots:
            return other
        if not other.slots:
            return self
        ext = dict(self.ext_transitions)
        ext.update(other.ext_transitions)
        return Bundle(f"{self.name}⊗{other.name}", self.manifold, self.slots + other.slots, ext)

    def contract(self, i: int, j: int) -> "Bundle":
        ki, kj = self.slots[i][0], self.slots[j][0]
        if _DUAL[ki] != kj:
            raise GeometryError(f"slots {i} ({ki}) and {j} ({kj}) are not dual")
        keep = tuple(s for t, s in enumerate(self.slots) if t not in (i, j))
        name = f"C[{i},{j}]({self.name})"
        if keep == ():
            name = "R"
        return Bundle(name, self.manifold, keep, self.ext_transitions)

    def slot_matrices(self, a: str, b: str, points) -> list[np.ndarray]:
        """Per-slot transition matrices (npts, size, size) from chart a to chart b."""
        pts = np.atleast_2d(points)
        out = []
        jac = self.manifold.jacobian(a, b, pts) if any(k in (UP, DOWN) for k in self.kinds) else None
        for kind, size in self.slots:
            if kind == UP:
                out.append(jac)
            elif kind == DOWN:
                out.append(np.linalg.inv(jac).transpose(0, 2, 1))
            else:
                mat = self._ext_matrix(a, b, pts, size)
                out.append(mat if kind == EXT else np.linalg.inv(mat).transpose(0, 2, 1))
        return out

    def _ext_matrix(self, a, b, pts, size):
        exprs = self.ext_transitions.get((a, b))
        if exprs is None:
            return np.broadcast_to(np.eye(size), (len(pts), size, size)).copy()
        vars_ = self.manifold.vars
        zero = (0,) * self.manifold.n
        return np.stack(
            [np.stack([eval_derivative(exprs[i][j], vars_, zero, pts) for j in range(size)], -1) for i in range(size)],
            axis=1,
        )

    def transition_matrix(self, a: str, b: str, points) -> np.ndarray:
        """Full transition matrix (npts, rank, rank): Kronecker product of the slot matrices."""
        pts = np.atleast_2d(points)
        mats = self.slot_matrices(a, b, pts)
        out = np.ones((len(pts), 1, 1))
        for m in mats:
            out = np.einsum("pij,pkl->pikjl", out, m).reshape(len(pts), out.shape[1] * m.shape[1], -1)
        return out

    def __repr__(self):
        return f"Bundle({self.name}, slots={self.slots})"


def _dual_name(name: str) -> str:
    return name[:-1] if name.endswith("*") else name + "*"


def tangent(m: ChartedManifold) -> Bundle:
    return Bundle("TM", m, ((UP, m.n),))


def cotangent(m: ChartedManifold) -> Bundle:
    return Bundle("T*M", m, ((DOWN, m.n),))


def tensor_bundle(m: ChartedManifold, r: int, s: int) -> Bundle:
    return Bundle(f"T{r},{s}M", m, ((UP, m.n),) * r + ((DOWN, m.n),) * s)


def line(m: ChartedManifold) -> Bundle:
    return Bundle("R", m, ())


def trivial(m: ChartedManifold, rank: int, name: str = "E", transitions=None) -> Bundle:
    return Bundle(name, m, ((EXT, rank),), dict(transitions or {}))


def named_bundle(m: ChartedManifold, name: str) -> Bundle:
    if name == "tangent":
        return tangent(m)
    if name == "cotangent":
        return cotangent(m)
    if name in ("line", "scalar"):
        return line(m)
    if name.startswith("tensor(") and name.endswith(")"):
        r, s = (int(t) for t in name[7:-1].split(","))
        return tensor_bundle(m, r, s)
    raise GeometryError(f"unknown bundle {name!r}")


def apply_slot(arr: np.ndarray, mat: np.ndarray, axis: int) -> np.ndarray:
    """``out[.., i, ..] = sum_k mat[i, k] arr[.., k, ..]`` along ``axis`` (object arrays allowed)."""
    moved = np.tensordot(arr, mat, axes=([axis], [1]))
    return np.moveaxis(moved, -1, axis)


class SmoothSection:
    """A smooth section given by closed-form components in each chart."""

    def __init__(self, bundle: Bundle, components: dict[str, object]):
        self.bundle = bundle
        self.components = {}
        names = [str(v) for v in bundle.manifold.vars]
        for chart, comps in components.items():
            bundle.manifold.chart(chart)
            arr = np.empty(bundle.fiber, dtype=object)
            src = np.asarray(comps, dtype=object) if bundle.fiber else comps
            for idx in np.ndindex(bundle.fiber):
                e = src[idx] if bundle.fiber else src
                while isinstance(e, np.ndarray):
                    e = e[()]
                arr[idx] = parse(e, names) if isinstance(e, str) else sp.sympify(e)
            self.components[chart] = arr

    @classmethod
    def uniform(cls, bundle: Bundle, comps) -> "SmoothSection":
        """Same component expressions in every chart."""
        return cls(bundle, {c: comps for c in bundle.manifold.charts})

    def chart_exprs(self, chart: str) -> np.ndarray:
        try:
            return self.components[chart]
        except KeyError:
            raise GeometryError(f"section has no components in chart {chart!r}") from None

    def jet(self, chart: str, points, order: int) -> Jet:
        return expr_jet(self.chart_exprs(chart), self.bundle.manifold.vars, points, order)

    def __call__(self, chart: str, points) -> np.ndarray:
        return self.jet(chart, points, 0).value

    def compatibility_residual(self, samples: int = 21) -> float:
        """Max mismatch of components across chart overlaps."""
        m = self.bundle.manifold
        worst = 0.0
        for a in self.components:
            for b in self.components:
                if a == b or not m.has_transition(a, b):
                    continue
                pts = boxes.grid(m.chart(a).domain, samples)
                mask = m.in_overlap(a, b, pts)
                if not np.any(mask):
                    continue
                p = pts[mask]
                sa = self(a, p).reshape(len(p), -1)
                sb = self(b, m.transition(a, b, p)).reshape(len(p), -1)
                t = self.bundle.transition_matrix(a, b, p)
                worst = max(worst, float(np.max(np.abs(np.einsum("pij,pj->pi", t, sa) - sb))))
        return worst

    def to_record(self) -> dict:
        return {
            "bundle": self.bundle.name,
            "slots": [list(s) for s in self.bundle.slots],
            "components": {
                c: [to_text(e) for e in arr.ravel()] for c, arr in sorted(self.components.items())
            },
        }

    def __repr__(self):
        return f"SmoothSection({self.bundle.name}, charts={sorted(self.components)})"


def vector_field(m: ChartedManifold, comps, charts=None) -> SmoothSection:
    b = tangent(m)
    names = charts or list(m.charts)
    return SmoothSection(b, {c: comps for c in names})


def metric(m: ChartedManifold, comps, charts=None) -> SmoothSection:
    b = tensor_bundle(m, 0, 2)
    names = charts or list(m.charts)
    return SmoothSection(b, {c: comps for c in names})


def _lie_exprs(x: np.ndarray, t: np.ndarray, kinds, vars_) -> np.ndarray:
    n = len(vars_)
    out = np.zeros(t.shape, dtype=object)
    for k in range(n):
        out = out + x[k] * _diff_array(t, vars_[k])
    dx = np.array([[sp.diff(x[a], vars_[b]) for b in range(n)] for a in range(n)], dtype=object)
    for axis, kind in enumerate(kinds):
        if kind == UP:
            out = out - apply_slot(t, dx, axis)
        elif kind == DOWN:
            out = out + apply_slot(t, dx.T, axis)
    return _simplify(out)


def _diff_array(t: np.ndarray, v) -> np.ndarray:
    out = np.empty(t.shape, dtype=object)
    for idx in np.ndindex(t.shape):
        out[idx] = sp.diff(t[idx], v)
    return out


def _simplify(arr) -> np.ndarray:
    arr = np.asarray(arr, dtype=object)
    out = np.empty(arr.shape, dtype=object)
    for idx in np.ndindex(arr.shape):
        out[idx] = sp.expand(sp.sympify(arr[idx]))
    return out


def classical_lie(x: SmoothSection, s: SmoothSection) -> SmoothSection:
    """Lie derivative of a tensor field (external slots are differentiated componentwise)."""
    m = s.bundle.manifold
    comps = {}
    for chart in s.components:
        if chart not in x.components:
            continue
        comps[chart] = _lie_exprs(x.chart_exprs(chart), s.chart_exprs(chart), s.bundle.kinds, m.vars)
    return SmoothSection(s.bundle, comps)


def classical_bracket(x: SmoothSection, y: SmoothSection) -> SmoothSection:
    return classical_lie(x, y)


class SmoothConnection:
    """A connection on TM (acting on up/down slots) or on an external bundle (ext slots)."""

    def __init__(self, manifold: ChartedManifold, gamma: dict[str, object], target: str = "TM"):
        self.manifold = manifold
        self.target = target
        self.gamma = {}
        names = [str(v) for v in manifold.vars]
        for chart, g in gamma.items():
            arr = np.asarray(g, dtype=object)
            out = np.empty(arr.shape, dtype=object)
            for idx in np.ndindex(arr.shape):
                e = arr[idx]
                out[idx] = parse(e, names) if isinstance(e, str) else sp.sympify(e)
            self.gamma[chart] = out

    @classmethod
    def flat(cls, manifold: ChartedManifold, rank: int | None = None, target: str = "TM"):
        m = manifold.n if rank is None else rank
        zero = np.zeros((manifold.n, m, m), dtype=object)
        zero[...] = sp.Integer(0)
        return cls(manifold, {c: zero for c in manifold.charts}, target)

    def chart_gamma(self, chart: str) -> np.ndarray:
        try:
            return self.gamma[chart]
        except KeyError:
            raise GeometryError(f"connection has no coefficients in chart {chart!r}") from None

    def acts_on(self, kind: str) -> bool:
        return (kind in (UP, DOWN)) if self.target == "TM" else (kind in (EXT, EXTDUAL))

    def __sub__(self, other: "SmoothConnection") -> dict[str, np.ndarray]:
        return {c: self.gamma[c] - other.gamma[c] for c in self.gamma if c in other.gamma}


def christoffels(conn: SmoothConnection, chart: str, points) -> np.ndarray:
    """Coefficient grid ``gamma[p, i, j, k]`` at the given points."""
    g = conn.chart_gamma(chart)
    return expr_jet(g, conn.manifold.vars, points, 0).value


def _cov_exprs(gamma, x, t, kinds, vars_, acts):
    n = len(vars_)
    out = np.zeros(t.shape, dtype=object)
    for i in range(n):
        out = out + x[i] * _diff_array(t, vars_[i])
    # contraction of X with the first index of gamma: A[j, k] = X^i gamma[i, j, k]
    a = np.tensordot(x, gamma, axes=([0], [0]))
    for axis, kind in enumerate(kinds):
        if not acts(kind):
            continue
        if kind in (UP, EXT):
            out = out + apply_slot(t, a.T, axis)
        else:
            out = out - apply_slot(t, a, axis)
    return _simplify(out)


def classical_covderiv(conn: SmoothConnection, x: SmoothSection, s: SmoothSection) -> SmoothSection:
    comps = {}
    for chart in s.components:
        if chart in x.components and chart in conn.gamma:
            comps[chart] = _cov_exprs(
                conn.chart_gamma(chart), x.chart_exprs(chart), s.chart_exprs(chart), s.bundle.kinds,
                conn.manifold.vars, conn.acts_on,
            )
    return SmoothSection(s.bundle, comps)


def levi_civita_exprs(g: np.ndarray, vars_) -> np.ndarray:
    n = len(vars_)
    gm = sp.Matrix(n, n, lambda i, j: g[i, j])
    ginv = gm.inv()
    out = np.empty((n, n, n), dtype=object)
    for i in range(n):
        for j in range(n):
            for k in range(n):
                out[i, j, k] = sp.simplify(
                    sum(
                        ginv[k, l]
                        * (sp.diff(g[j, l], vars_[i]) + sp.diff(g[i, l], vars_[j]) - sp.diff(g[i, j], vars_[l]))
                        for l in range(n)
                    )
                    / 2
                )
    return out


def levi_civita_classical(g: SmoothSection) -> SmoothConnection:
    m = g.bundle.manifold
    return SmoothConnection(m, {c: levi_civita_exprs(g.chart_exprs(c), m.vars) for c in g.components})


def curvature_exprs(gamma: np.ndarray, vars_) -> np.ndarray:
    n, r = gamma.shape[0], gamma.shape[1]
    out = np.empty((n, n, r, r), dtype=object)
    for i in range(n):
        for j in range(n):
            for k in range(r):
                for l in range(r):
                    val = sp.diff(gamma[j, k, l], vars_[i]) - sp.diff(gamma[i, k, l], vars_[j])
                    val += sum(gamma[j, k, m] * gamma[i, m, l] - gamma[i, k, m] * gamma[j, m, l] for m in range(r))
                    out[i, j, k, l] = sp.simplify(val)
    return out


def classical_curvature(conn: SmoothConnection) -> SmoothSection:
    """Curvature as a section with slots (down, down, dual fiber, fiber)."""
    m = conn.manifold
    if conn.target == "TM":
        slots = ((DOWN, m.n), (DOWN, m.n), (DOWN, m.n), (UP, m.n))
    else:
        r = next(iter(conn.gamma.values())).shape[1]
        slots = ((DOWN, m.n), (DOWN, m.n), (EXTDUAL, r), (EXT, r))
    bundle = Bundle("Curv", m, slots)
    return SmoothSection(bundle, {c: curvature_exprs(conn.chart_gamma(c), m.vars) for c in conn.gamma})


def scalar_curvature_exprs(g: np.ndarray, vars_) -> sp.Expr:
    n = len(vars_)
    curv = curvature_exprs(levi_civita_exprs(g, vars_), vars_)
    ginv = sp.Matrix(n, n, lambda i, j: g[i, j]).inv()
    ric = [[sum(curv[i, j, k, i] for i in range(n)) for k in range(n)] for j in range(n)]
    return sp.simplify(sum(ginv[j, k] * ric[j][k] for j in range(n) for k in range(n)))


def torsion_exprs(gamma: np.ndarray) -> np.ndarray:
    """T[i, j, k] = gamma[i, j, k] - gamma[j, i, k] (coordinate fields commute)."""
    n = gamma.shape[0]
    out = np.empty(gamma.shape, dtype=object)
    for i in range(n):
        for j in range(n):
            for k in range(n):
                out[i, j, k] = sp.simplify(gamma[i, j, k] - gamma[j, i, k])
    return out


def conformal_metric(m: ChartedManifold, u) -> SmoothSection:
    """``exp(2u) * (flat metric)`` for a closed-form function u."""
    names = [str(v) for v in m.vars]
    ue = parse(u, names) if isinstance(u, str) else sp.sympify(u)
    comps = [[sp.exp(2 * ue) if i == j else sp.Integer(0) for j in range(m.n)] for i in range(m.n)]
    return metric(m, comps)


def derivative_expr(expr, m: ChartedManifold, alpha):
    return derivative(expr, m.vars, alpha)
