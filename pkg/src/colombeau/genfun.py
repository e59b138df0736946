"""Generalized sections as expression trees evaluated on families of smoothing nets.

A family maps bundle names to smoothing nets.  Evaluating a tree at a family,
``eps`` and sample points of one chart returns the jet of the resulting smooth
section.  Differentials with respect to the family are exact: every net slot
carries a polynomial in nilpotent parameters (see :class:`~colombeau.jets.Series`),
and the coefficient of ``t_1 ... t_j`` is the j-th differential.
"""

from __future__ import annotations

import numpy as np
import sympy as sp

from . import boxes
from .distributions import DistributionalSection, restrict_dist
from .geometry import (
    DOWN,
    EXT,
    EXTDUAL,
    UP,
    Bundle,
    ChartedManifold,
    SmoothConnection,
    SmoothSection,
    box_manifold,
    named_manifold,
)
from .jets import Jet, Series, einsum_op, jet_mul, jet_product, series_inverse
from .maps import Diffeomorphism
from .smoothing import LieSONet, LinearCombinationNet, PushforwardNet, push_jet, pushforward_section, restrict_so
from .tensorjets import contract_direction, contract_jet, directional, lie_jet, slot_action


class GenFunError(ValueError):
    pass


class SingularMetricError(GenFunError):
    """The regularized metric degenerates faster than the allowed power of eps."""


class _Context:
    """Per-evaluation state: sample data, a memo table and a fresh-parameter counter."""

    def __init__(self, eps, chart, points, level, first_bit):
        self.eps = float(eps)
        self.chart = chart
        self.points = np.atleast_2d(np.asarray(points, dtype=float))
        self.level = level
        self.cache = {}
        self.next_bit = first_bit
        self.keep = []

    def fresh_bit(self) -> int:
        b = self.next_bit
        self.next_bit += 1
        return b


def _reshape(jet: Jet, fiber) -> Jet:
    return Jet(jet.dim, jet.order, jet.data.reshape(jet.data.shape[:2] + tuple(fiber)))


def _add_degrees(a: dict, b: dict) -> dict:
    out = dict(a)
    for k, v in b.items():
        out[k] = None if (v is None or out.get(k, 0) is None) else out.get(k, 0) + v
    return out


def _max_degrees(a: dict, b: dict) -> dict:
    out = dict(a)
    for k, v in b.items():
        old = out.get(k, 0)
        out[k] = None if (v is None or old is None) else max(old, v)
    return out


class GenSection:
    """Base node.  ``bundle`` is the target bundle; ``delta`` the set of net slots it reads."""

    kind = "node"
    bundle: Bundle
    children: tuple = ()

    @property
    def delta(self) -> frozenset:
        out = frozenset()
        for c in self.children:
            out |= c.delta
        return out

    @property
    def degree(self) -> dict:
        """Polynomial degree in each net slot (None where the dependence is not polynomial)."""
        raise NotImplementedError

    @property
    def fiber(self):
        return self.bundle.fiber

    def series(self, fam, order, ctx) -> Series:
        key = (id(self), id(fam), order)
        if key not in ctx.cache:
            ctx.cache[key] = self._series(fam, order, ctx)
        return ctx.cache[key]

    def _series(self, fam, order, ctx) -> Series:
        raise NotImplementedError

    def __add__(self, other):
        return Add(self, other)

    def __sub__(self, other):
        return Add(self, Scale(-1.0, other))

    def __neg__(self):
        return Scale(-1.0, self)

    def __mul__(self, other):
        if isinstance(other, GenSection):
            return Tensor(self, other)
        return Scale(float(other), self)

    __rmul__ = __mul__


def total_degree(node: GenSection):
    vals = list(node.degree.values())
    if any(v is None for v in vals):
        return None
    return int(sum(vals))


# ----------------------------------------------------------------------------
# leaves


class Embed(GenSection):
    """``(iota u)(Phi) = Phi_E(u)``."""

    kind = "embed"

    def __init__(self, u: DistributionalSection):
        self.u = u
        self.bundle = u.bundle

    @property
    def delta(self):
        return frozenset([self.bundle.name])

    @property
    def degree(self):
        return {self.bundle.name: 1}

    def _series(self, fam, order, ctx):
        name = self.bundle.name
        if name not in fam:
            raise GenFunError(f"the family has no net for bundle {name!r}")
        out = {}
        for mask, net in fam[name].items():
            jet = net.apply(ctx.eps, self.u, ctx.chart, ctx.points, order, ctx.level)
            out[mask] = _reshape(jet, self.fiber)
        return Series(out)


class SmoothCoeff(GenSection):
    """``(sigma s)(Phi) = s``."""

    kind = "smooth"

    def __init__(self, s: SmoothSection):
        self.s = s
        self.bundle = s.bundle

    @property
    def degree(self):
        return {}

    def _series(self, fam, order, ctx):
        return Series.single(self.s.jet(ctx.chart, ctx.points, order))


def embed(u: DistributionalSection) -> Embed:
    return Embed(u)


def sigma(s: SmoothSection) -> SmoothCoeff:
    return SmoothCoeff(s)


# ----------------------------------------------------------------------------
# algebra


class Add(GenSection):
    kind = "add"

    def __init__(self, a: GenSection, b: GenSection):
        if a.bundle.slots != b.bundle.slots:
            raise GenFunError(f"cannot add sections of {a.bundle.name} and {b.bundle.name}")
        self.children = (a, b)
        self.bundle = a.bundle

    @property
    def degree(self):
        return _max_degrees(self.children[0].degree, self.children[1].degree)

    def _series(self, fam, order, ctx):
        a, b = self.children
        return a.series(fam, order, ctx) + b.series(fam, order, ctx)


class Scale(GenSection):
    kind = "scale"

    def __init__(self, c: float, a: GenSection):
        self.c = float(c)
        self.children = (a,)
        self.bundle = a.bundle

    @property
    def degree(self):
        return dict(self.children[0].degree)

    def _series(self, fam, order, ctx):
        return self.children[0].series(fam, order, ctx).map(lambda j: j.scale(self.c))


class Tensor(GenSection):
    """``(R (x) S)(Phi) = R(Phi) (x) S(Phi)``; with a scalar factor this is the module action."""

    kind = "tensor"

    def __init__(self, a: GenSection, b: GenSection):
        self.children = (a, b)
        self.bundle = a.bundle.tensor(b.bundle)

    @property
    def degree(self):
        return _add_degrees(self.children[0].degree, self.children[1].degree)

    def _series(self, fam, order, ctx):
        a, b = self.children
        return a.series(fam, order, ctx).combine(b.series(fam, order, ctx), jet_mul)


class Contract(GenSection):
    kind = "contract"

    def __init__(self, a: GenSection, i: int, j: int):
        rank = len(a.bundle.slots)
        if not (0 <= i < rank and 0 <= j < rank and i != j):
            raise GenFunError(f"contraction indices ({i}, {j}) out of range for {rank} slots")
        self.children = (a,)
        self.i, self.j = i, j
        self.bundle = a.bundle.contract(i, j)

    @property
    def degree(self):
        return dict(self.children[0].degree)

    def _series(self, fam, order, ctx):
        return self.children[0].series(fam, order, ctx).map(lambda t: contract_jet(t, self.i, self.j))


def tensor(a: GenSection, b: GenSection) -> Tensor:
    return Tensor(a, b)


def contract(a: GenSection, i: int, j: int) -> Contract:
    return Contract(a, i, j)


def scalar_mul(f: GenSection, r: GenSection) -> Tensor:
    if f.bundle.slots:
        raise GenFunError("scalar_mul needs a scalar (line bundle) factor")
    return Tensor(f, r)


# ----------------------------------------------------------------------------
# Lie derivatives


class LieHat(GenSection):
    """``L_X R(Phi) - dR(Phi)(L^SO_X Phi)``: commutes with the embedding."""

    kind = "liehat"

    def __init__(self, field: SmoothSection, a: GenSection):
        self.field = field
        self.children = (a,)
        self.bundle = a.bundle

    @property
    def degree(self):
        return dict(self.children[0].degree)

    def _series(self, fam, order, ctx):
        (child,) = self.children
        bit = 1 << ctx.fresh_bit()
        ext = dict(fam)
        for name in child.delta:
            slot = dict(fam[name])
            for mask, net in fam[name].items():
                slot[mask | bit] = LieSONet(self.field, net)
            ext[name] = slot
        ctx.keep.append(ext)
        inner = child.series(ext, order + 1, ctx)
        x = self.field.jet(ctx.chart, ctx.points, order + 1)
        kinds = self.bundle.kinds
        out = {}
        for mask, jet in inner.terms.items():
            if mask & bit:
                continue
            val = lie_jet(x, jet, kinds)
            shifted = inner.get(mask | bit)
            if shifted is not None:
                val = val - shifted.truncate(order)
            out[mask] = val
        return Series(out)


class LieTilde(GenSection):
    """``L_{X(Phi)} R(Phi)`` for a generalized vector field X."""

    kind = "lietilde"

    def __init__(self, x: GenSection, a: GenSection):
        if x.bundle.kinds != (UP,):
            raise GenFunError("the direction must be a generalized vector field")
        self.children = (x, a)
        self.bundle = a.bundle

    @property
    def degree(self):
        return _add_degrees(self.children[0].degree, self.children[1].degree)

    def _series(self, fam, order, ctx):
        x, a = self.children
        kinds = self.bundle.kinds
        xs = x.series(fam, order + 1, ctx)
        ts = a.series(fam, order + 1, ctx)
        return xs.combine(ts, lambda xj, tj: lie_jet(xj, tj, kinds))


def lie_hat(field: SmoothSection, a: GenSection) -> LieHat:
    return LieHat(field, a)


def lie_tilde(x: GenSection, a: GenSection) -> LieTilde:
    return LieTilde(x, a)


def bracket(x: GenSection, y: GenSection) -> LieTilde:
    return LieTilde(x, y)


# ----------------------------------------------------------------------------
# connections


def christoffel_bundle(m: ChartedManifold, rank: int | None = None, target: str = "TM") -> Bundle:
    """Chart-local carrier for connection coefficients gamma[i, j, k]."""
    r = m.n if rank is None else rank
    if target == "TM":
        slots = ((DOWN, m.n), (DOWN, r), (UP, r))
    else:
        slots = ((DOWN, m.n), (EXTDUAL, r), (EXT, r))
    return Bundle(f"Gamma[{target}]", m, slots)


class GenConnection:
    """Generalized covariant derivative: a smooth base connection plus a generalized difference tensor.

    ``gamma`` is a node whose value at a family is the coefficient array
    gamma[i, j, k] (``nabla_{d_i} b_j = gamma[i, j, k] b_k``).
    """

    def __init__(self, manifold: ChartedManifold, gamma: GenSection | None, target: str = "TM",
                 moderate: bool = True, local: bool = True):
        self.manifold = manifold
        self.gamma = gamma
        self.target = target
        self.moderate = moderate
        self.local = local

    @classmethod
    def from_smooth(cls, conn: SmoothConnection) -> "GenConnection":
        rank = next(iter(conn.gamma.values())).shape[1]
        bundle = christoffel_bundle(conn.manifold, rank, conn.target)
        return cls(conn.manifold, SmoothCoeff(SmoothSection(bundle, conn.gamma)), conn.target)

    def plus(self, difference: GenSection) -> "GenConnection":
        gamma = difference if self.gamma is None else Add(self.gamma, _as_gamma(difference, self.gamma.bundle))
        return GenConnection(self.manifold, gamma, self.target, self.moderate, self.local)

    def acts_on(self, kind: str) -> bool:
        return (kind in (UP, DOWN)) if self.target == "TM" else (kind in (EXT, EXTDUAL))

    @property
    def delta(self):
        return self.gamma.delta if self.gamma is not None else frozenset()


def _as_gamma(node: GenSection, bundle: Bundle) -> GenSection:
    if node.bundle.fiber != bundle.fiber:
        raise GenFunError("difference tensor has the wrong shape")
    return node


class CovDeriv(GenSection):
    """``(nabla_X R)(Phi) = nabla_{X(Phi)} R(Phi)`` with connection coefficients evaluated at Phi."""

    kind = "covderiv"

    def __init__(self, conn: GenConnection, x: GenSection, a: GenSection):
        if x.bundle.kinds != (UP,):
            raise GenFunError("the direction must be a generalized vector field")
        self.conn = conn
        self.children = (x, a) + ((conn.gamma,) if conn.gamma is not None else ())
        self.bundle = a.bundle

    @property
    def degree(self):
        out = {}
        for c in self.children:
            out = _add_degrees(out, c.degree)
        return out

    def _series(self, fam, order, ctx):
        x, a = self.children[:2]
        xs = x.series(fam, order, ctx)
        ts = a.series(fam, order + 1, ctx)
        out = xs.combine(ts, directional)
        if len(self.children) == 3:
            gs = self.children[2].series(fam, order, ctx)
            amat = xs.combine(gs, contract_direction)
            kinds, acts = self.bundle.kinds, self.conn.acts_on
            tlow = ts.truncate(order)
            extra = amat.combine(tlow, lambda am, t: _or_zero(slot_action(am, t, kinds, acts), t))
            out = out + extra
        return out


def _or_zero(j, like):
    return j if j is not None else like.scale(0.0)


def cov_deriv(conn: GenConnection, x: GenSection, a: GenSection) -> CovDeriv:
    return CovDeriv(conn, x, a)


class MetricChristoffel(GenSection):
    """Levi-Civita coefficients of a generalized metric, computed pointwise from g(Phi)."""

    kind = "christoffel"

    def __init__(self, g: GenSection, floor: float = 1e-8, power: float = 8.0):
        n = g.bundle.manifold.n
        if g.bundle.kinds != (DOWN, DOWN):
            raise GenFunError("a metric must be a section of T^0_2 M")
        self.children = (g,)
        self.bundle = christoffel_bundle(g.bundle.manifold, n, "TM")
        self.floor, self.power = floor, power

    @property
    def degree(self):
        return {k: None for k in self.children[0].delta}

    def _series(self, fam, order, ctx):
        (g,) = self.children
        gs = g.series(fam, order + 1, ctx)
        base = gs.base.value
        det = np.abs(np.linalg.det(base))
        bound = self.floor * ctx.eps**self.power
        worst = int(np.argmin(det))
        if det[worst] < bound:
            raise SingularMetricError(
                f"metric determinant {det[worst]:.3e} below {bound:.3e} at {ctx.points[worst].tolist()} (eps={ctx.eps:g})"
            )
        n = base.shape[-1]
        first = gs.map(lambda j: _first_kind(j, n))
        ginv = series_inverse(gs.truncate(order))
        return ginv.combine(first, lambda h, f: jet_product(h, f, einsum_op("kl,ijl->ijk")))


def _first_kind(g: Jet, n: int) -> Jet:
    """``1/2 (d_i g_jl + d_j g_il - d_l g_ij)`` indexed [i, j, l]."""
    d = np.stack([g.partial(k).data for k in range(n)], axis=-3)  # d[.., k, i, j] = d_k g_ij
    out = 0.5 * (d + np.swapaxes(d, -3, -2) - np.moveaxis(d, -3, -1))
    return Jet(g.dim, g.order - 1, out)


def levi_civita(g: GenSection, floor: float = 1e-8, power: float = 8.0) -> GenConnection:
    return GenConnection(g.bundle.manifold, MetricChristoffel(g, floor, power), "TM")


class InverseMetric(GenSection):
    """Pointwise inverse of a generalized metric, a section of T^2_0 M."""

    kind = "inverse"

    def __init__(self, g: GenSection):
        if g.bundle.kinds != (DOWN, DOWN):
            raise GenFunError("a metric must be a section of T^0_2 M")
        m = g.bundle.manifold
        self.children = (g,)
        self.bundle = Bundle("T2,0M", m, ((UP, m.n), (UP, m.n)))

    @property
    def degree(self):
        return {k: None for k in self.children[0].delta}

    def _series(self, fam, order, ctx):
        return series_inverse(self.children[0].series(fam, order, ctx))


def inverse_metric(g: GenSection) -> InverseMetric:
    return InverseMetric(g)


class CurvatureTensor(GenSection):
    """``R[i, j, k, l] = d_i G[j,k,l] - d_j G[i,k,l] + G[j,k,m] G[i,m,l] - G[i,k,m] G[j,m,l]``."""

    kind = "curvature"

    def __init__(self, conn: GenConnection):
        if conn.gamma is None:
            raise GenFunError("connection has no coefficient node")
        self.conn = conn
        self.children = (conn.gamma,)
        m = conn.manifold
        gb = conn.gamma.bundle
        self.bundle = Bundle("Curv", m, ((DOWN, m.n), (DOWN, m.n)) + gb.slots[1:])

    @property
    def degree(self):
        d = self.children[0].degree
        return _add_degrees(d, d)

    def _series(self, fam, order, ctx):
        gs = self.children[0].series(fam, order + 1, ctx)

        def linear(g):
            d = np.stack([g.partial(k).data for k in range(g.dim)], axis=2)  # [.., i, j, k, l] = d_i G[j,k,l]
            return Jet(g.dim, g.order - 1, d - np.swapaxes(d, 2, 3))

        low = gs.truncate(order)
        quad = low.combine(low, lambda a, b: jet_product(a, b, einsum_op("jkm,iml->ijkl")))
        quad = quad - low.combine(low, lambda a, b: jet_product(a, b, einsum_op("ikm,jml->ijkl")))
        return gs.map(linear) + quad


def curvature_tensor(conn: GenConnection) -> CurvatureTensor:
    return CurvatureTensor(conn)


def ricci(conn: GenConnection) -> GenSection:
    """``Ric[j, k] = sum_i R[i, j, k, i]``."""
    return Contract(CurvatureTensor(conn), 0, 3)


def scalar_curvature(g: GenSection) -> GenSection:
    """``g^{jk} Ric[j, k]`` for the Levi-Civita connection of g."""
    ric = ricci(levi_civita(g))
    return Contract(Contract(Tensor(InverseMetric(g), ric), 0, 2), 0, 1)


def gen_curvature(conn: GenConnection, x: GenSection, y: GenSection, s: GenSection) -> GenSection:
    """``nabla_X nabla_Y S - nabla_Y nabla_X S - nabla_[X,Y] S``."""
    xy = CovDeriv(conn, x, CovDeriv(conn, y, s))
    yx = CovDeriv(conn, y, CovDeriv(conn, x, s))
    return xy - yx - CovDeriv(conn, bracket(x, y), s)


# ----------------------------------------------------------------------------
# bundle maps


class Pushforward(GenSection):
    """``(mu_* R)(Phi) = mu_*(R(mu^* Phi))`` with ``mu^* Phi = (mu^-1)_* Phi``."""

    kind = "pushforward"

    def __init__(self, mu: Diffeomorphism, a: GenSection, target_bundle: Bundle, source_chart: str = "main"):
        mu.check_invertible()
        if target_bundle.slots != a.bundle.slots:
            raise GenFunError("target bundle must have the same slot structure")
        self.mu = mu
        self.inv = mu.inverse()
        self.children = (a,)
        self.bundle = target_bundle
        self.source_chart = source_chart

    @property
    def degree(self):
        return dict(self.children[0].degree)

    def _series(self, fam, order, ctx):
        (child,) = self.children
        pulled = {name: {m: PushforwardNet(self.inv, net) for m, net in slot.items()} for name, slot in fam.items()}
        ctx.keep.append(pulled)
        sub = _Context(ctx.eps, self.source_chart, self.inv(ctx.points), ctx.level, ctx.next_bit)
        sub.keep = ctx.keep
        inner = child.series(pulled, order, sub)
        ctx.next_bit = sub.next_bit
        return inner.map(lambda j: push_jet(self.mu, self.bundle, j, ctx.points, order))


def pushforward(mu: Diffeomorphism, a: GenSection, target_bundle: Bundle) -> Pushforward:
    return Pushforward(mu, a, target_bundle)


def embed_pushforward(mu: Diffeomorphism, u: DistributionalSection, target_bundle: Bundle) -> Embed:
    """``iota(mu_* u)``."""
    return Embed(pushforward_section(mu, u, target_bundle))


# ----------------------------------------------------------------------------
# evaluation


def _series_family(family: dict, directions) -> dict:
    names = set(family)
    for d in directions:
        names |= set(d)
    out = {}
    for name in names:
        slot = {}
        if name in family:
            slot[0] = family[name]
        for i, d in enumerate(directions):
            if name in d:
                slot[1 << i] = d[name]
        out[name] = slot
    return out


def differential(r: GenSection, j: int, family: dict, directions, eps: float, points, order: int = 0,
                 chart: str = "main", level: int = 0) -> Jet:
    """``d^j R(Phi)(Psi_1, ..., Psi_j)`` sampled at points; exact zero beyond the polynomial degree."""
    directions = list(directions)
    if len(directions) != j:
        raise GenFunError(f"expected {j} directions, got {len(directions)}")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    deg = total_degree(r)
    if deg is not None and j > deg:
        return Jet.zeros(pts.shape[1], order, len(pts), r.fiber)
    fam = _series_family(family, directions)
    ctx = _Context(eps, chart, pts, level, first_bit=j)
    ser = r.series(fam, order, ctx)
    full = (1 << j) - 1
    out = ser.get(full)
    if out is None:
        return Jet.zeros(pts.shape[1], order, len(pts), r.fiber)
    return out.truncate(order)


def evaluate(r: GenSection, family: dict, eps: float, points, order: int = 0, chart: str = "main", level: int = 0) -> Jet:
    """``R(Phi_eps)`` sampled at points with derivatives up to ``order``."""
    return differential(r, 0, family, [], eps, points, order, chart, level)


def shifted_family(family: dict, direction: dict, t: float) -> dict:
    """``Phi + t Psi`` slot by slot."""
    out = dict(family)
    for name, psi in direction.items():
        out[name] = LinearCombinationNet([(1.0, family[name]), (float(t), psi)]) if name in family else t * psi
    return out


def interpolation_coefficients(r: GenSection, family: dict, direction: dict, eps: float, points, degree: int,
                               order: int = 0, chart: str = "main") -> np.ndarray:
    """Coefficients c_k (k = 0..degree) of ``R(Phi + t Psi) = sum_k c_k t^k`` from degree+1 samples in t."""
    ts = np.cos(np.pi * (np.arange(degree + 1) + 0.5) / (degree + 1))
    vals = np.stack([evaluate(r, shifted_family(family, direction, t), eps, points, order, chart).data for t in ts])
    vander = np.vander(ts, degree + 1, increasing=True)
    flat = vals.reshape(degree + 1, -1)
    coef = np.linalg.solve(vander, flat)
    return coef.reshape((degree + 1,) + vals.shape[1:])


def interpolation_differential(r: GenSection, j: int, family: dict, direction: dict, eps: float, points,
                               order: int = 0, chart: str = "main", degree: int | None = None) -> np.ndarray:
    """``d^j R(Phi)(Psi, ..., Psi)`` from polynomial interpolation in t of ``R(Phi + t Psi)``."""
    deg = total_degree(r) if degree is None else degree
    if deg is None:
        raise GenFunError("interpolation needs a polynomial degree")
    if j > deg:
        return np.zeros_like(evaluate(r, family, eps, points, order, chart).data)
    coef = interpolation_coefficients(r, family, direction, eps, points, deg, order, chart)
    return coef[j] * float(np.prod(np.arange(1, j + 1)))


# ----------------------------------------------------------------------------
# locality and restriction


def is_local(r: GenSection) -> bool:
    """Every node kind of the grammar is local; the walk guards against foreign node types."""
    if r.kind not in _LOCAL_KINDS:
        return False
    return all(is_local(c) for c in r.children)


_LOCAL_KINDS = {"embed", "smooth", "add", "scale", "tensor", "contract", "liehat", "lietilde", "covderiv",
                "christoffel", "inverse", "curvature", "pushforward"}


def rebase(bundle: Bundle, m: ChartedManifold) -> Bundle:
    return Bundle(bundle.name, m, bundle.slots, bundle.ext_transitions)


def restrict_gensec(r: GenSection, v, manifold: ChartedManifold | None = None) -> GenSection:
    """``R|_V`` for a box V inside the single chart ``main``: leaves restricted, tree kept."""
    if not is_local(r):
        raise GenFunError(f"node {r.kind!r} is not local")
    v = boxes.as_box(v)
    mv = manifold or box_manifold(v)
    memo = {}

    def go(node):
        if id(node) in memo:
            return memo[id(node)]
        out = _restrict_node(node, v, mv, go)
        memo[id(node)] = out
        return out

    return go(r)


def _restrict_node(node, v, mv, go):
    if isinstance(node, Embed):
        comps = [restrict_dist(d, v) for d in node.u.chart_components("main")]
        return Embed(DistributionalSection(rebase(node.bundle, mv), {"main": comps}))
    if isinstance(node, SmoothCoeff):
        return SmoothCoeff(_restrict_smooth(node.s, mv))
    if isinstance(node, Add):
        return Add(go(node.children[0]), go(node.children[1]))
    if isinstance(node, Scale):
        return Scale(node.c, go(node.children[0]))
    if isinstance(node, Tensor):
        return Tensor(go(node.children[0]), go(node.children[1]))
    if isinstance(node, Contract):
        return Contract(go(node.children[0]), node.i, node.j)
    if isinstance(node, LieHat):
        return LieHat(_restrict_smooth(node.field, mv), go(node.children[0]))
    if isinstance(node, LieTilde):
        return LieTilde(go(node.children[0]), go(node.children[1]))
    if isinstance(node, CovDeriv):
        conn = node.conn
        gamma = go(conn.gamma) if conn.gamma is not None else None
        c2 = GenConnection(mv, gamma, conn.target, conn.moderate, conn.local)
        return CovDeriv(c2, go(node.children[0]), go(node.children[1]))
    if isinstance(node, MetricChristoffel):
        return MetricChristoffel(go(node.children[0]), node.floor, node.power)
    if isinstance(node, InverseMetric):
        return InverseMetric(go(node.children[0]))
    if isinstance(node, CurvatureTensor):
        c = node.conn
        return CurvatureTensor(GenConnection(mv, go(c.gamma), c.target, c.moderate, c.local))
    raise GenFunError(f"restriction of {node.kind!r} nodes is not supported")


def _restrict_smooth(s: SmoothSection, mv: ChartedManifold) -> SmoothSection:
    return SmoothSection(rebase(s.bundle, mv), {"main": s.chart_exprs("main")})


def restrict_family(family: dict, v, partition=None) -> dict:
    """Restrict every net of a family to V (see :func:`colombeau.smoothing.restrict_so`)."""
    return {name: restrict_so(net, v, partition) for name, net in family.items()}


# ----------------------------------------------------------------------------
# componentwise representation


def components(r: GenSection) -> list[GenSection]:
    """Scalar generalized functions R^I with R = sum_I R^I b_I in the chart ``main``."""
    out = []
    for idx in np.ndindex(r.fiber):
        dual = np.zeros(r.fiber, dtype=object)
        dual[...] = sp.Integer(0)
        dual[idx] = sp.Integer(1)
        beta = SmoothSection(r.bundle.dual(), {"main": dual})
        rr = Tensor(r, SmoothCoeff(beta))
        k = len(r.fiber)
        for a in range(k):
            rr = Contract(rr, 0, k - a)
        out.append(rr)
    return out


def reconstruct(parts: list[GenSection], bundle: Bundle) -> GenSection:
    """``sum_I R^I b_I`` from scalar components."""
    total = None
    for part, idx in zip(parts, np.ndindex(bundle.fiber)):
        basis = np.zeros(bundle.fiber, dtype=object)
        basis[...] = sp.Integer(0)
        basis[idx] = sp.Integer(1)
        term = Tensor(part, SmoothCoeff(SmoothSection(bundle, {"main": basis})))
        total = term if total is None else Add(total, term)
    return total


# ----------------------------------------------------------------------------
# serialization


def _manifold_record(m: ChartedManifold) -> dict:
    if m.name in ("circle", "torus"):
        return {"name": m.name}
    return {"name": "box", "bounds": [list(b) for b in m.chart("main").domain]}


def _manifold_from(rec) -> ChartedManifold:
    if rec["name"] == "box":
        return box_manifold(rec["bounds"])
    return named_manifold(rec["name"])


def _bundle_record(b: Bundle) -> dict:
    return {"name": b.name, "slots": [list(s) for s in b.slots]}


class _Registry:
    def __init__(self, manifold):
        self.manifold = manifold
        self.bundles = {}

    def bundle(self, rec) -> Bundle:
        key = (rec["name"], tuple(tuple(s) for s in rec["slots"]))
        if key not in self.bundles:
            self.bundles[key] = Bundle(rec["name"], self.manifold, tuple((k, int(s)) for k, s in rec["slots"]))
        return self.bundles[key]


def to_record(r: GenSection) -> dict:
    """Nested record: node kind, children and leaf payloads."""
    return {"manifold": _manifold_record(r.bundle.manifold), "tree": _node_record(r)}


def _node_record(r: GenSection) -> dict:
    rec = {"kind": r.kind, "bundle": _bundle_record(r.bundle)}
    if isinstance(r, Embed):
        rec["components"] = {c: [d.to_record() for d in comps] for c, comps in sorted(r.u.components.items())}
    elif isinstance(r, SmoothCoeff):
        rec["section"] = r.s.to_record()
    elif isinstance(r, Scale):
        rec["c"] = r.c
    elif isinstance(r, Contract):
        rec["indices"] = [r.i, r.j]
    elif isinstance(r, LieHat):
        rec["field"] = r.field.to_record()
    elif isinstance(r, CovDeriv):
        rec["target"] = r.conn.target
    elif isinstance(r, MetricChristoffel):
        rec["floor"], rec["power"] = r.floor, r.power
    elif isinstance(r, CurvatureTensor):
        rec["target"] = r.conn.target
    elif isinstance(r, Pushforward):
        rec["mu"] = r.mu.to_record()
    rec["children"] = [_node_record(c) for c in r.children]
    return rec


def from_record(rec: dict) -> GenSection:
    from .distributions import from_record as dist_from_record

    reg = _Registry(_manifold_from(rec["manifold"]))
    m = reg.manifold

    def smooth(srec):
        b = reg.bundle({"name": srec["bundle"], "slots": srec["slots"]})
        comps = {c: np.array(v, dtype=object).reshape(b.fiber) if b.fiber else v[0] for c, v in srec["components"].items()}
        return SmoothSection(b, comps)

    def go(node):
        kind = node["kind"]
        kids = [go(c) for c in node["children"]]
        if kind == "embed":
            b = reg.bundle(node["bundle"])
            comps = {c: [dist_from_record(d) for d in ds] for c, ds in node["components"].items()}
            return Embed(DistributionalSection(b, comps))
        if kind == "smooth":
            return SmoothCoeff(smooth(node["section"]))
        if kind == "add":
            return Add(*kids)
        if kind == "scale":
            return Scale(node["c"], kids[0])
        if kind == "tensor":
            return Tensor(*kids)
        if kind == "contract":
            return Contract(kids[0], *node["indices"])
        if kind == "liehat":
            return LieHat(smooth(node["field"]), kids[0])
        if kind == "lietilde":
            return LieTilde(*kids)
        if kind == "covderiv":
            gamma = kids[2] if len(kids) == 3 else None
            return CovDeriv(GenConnection(m, gamma, node["target"]), kids[0], kids[1])
        if kind == "christoffel":
            return MetricChristoffel(kids[0], node["floor"], node["power"])
        if kind == "inverse":
            return InverseMetric(kids[0])
        if kind == "curvature":
            return CurvatureTensor(GenConnection(m, kids[0], node["target"]))
        if kind == "pushforward":
            return Pushforward(Diffeomorphism.from_record(node["mu"]), kids[0], reg.bundle(node["bundle"]))
        raise GenFunError(f"unknown node kind {kind!r}")

    return go(rec["tree"])


def structure(r: GenSection) -> str:
    """Compact text form of the tree shape, e.g. ``tensor(embed, liehat(embed))``."""
    if not r.children:
        return r.kind
    return f"{r.kind}({', '.join(structure(c) for c in r.children)})"

