"""Smoothing operator nets: kernel-type test objects and the operations on them.

A net maps ``eps`` to a linear operator from distributional sections to smooth
sections.  Every net here is evaluated through :meth:`SmoothingNet.apply`, which
returns the jet (values and derivatives) of the smoothed section at sample points
of one chart.  Derivatives are always taken on the kernel or transferred to a
smooth density by exact integration by parts, never by finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import sympy as sp

from . import boxes
from .distributions import (
    DeltaDerivative,
    DistributionalSection,
    KernelTest,
    LinearCombination,
    PiecewiseSmooth,
    SmoothDensity,
    SymbolicDistribution,
    lie_derivative_section,
    multiply,
    pair,
    pushforward_dist,
    restrict_dist,
)
from .expr import as_expr, coords, eval_derivative, expr_jet, parse
from .geometry import DOWN, EXT, UP, Bundle, SmoothSection
from .jets import Jet, count, einsum_op, jet_compose, jet_inverse, jet_product, jet_scalar_mul, multi_indices
from .maps import Diffeomorphism
from .mollifiers import KernelNet, Mollifier, eval_kernel, gauss_legendre, make_mollifier
from .tensorjets import lie_jet

TEST, ZERO, GENERAL = "test", "zero", "general"


class SmoothingDomainError(ValueError):
    """Kernel supports leave the domain: shrink eps or the compact."""


class PartitionError(ValueError):
    """Partition-of-unity data violates its requirements."""


# ----------------------------------------------------------------------------
# cutoffs and partitions


def _step_expr(t):
    """Smooth step: 0 for t <= 0, 1 for t >= 1 (flat pieces are exact)."""
    a = sp.exp(-1 / t)
    b = sp.exp(-1 / (1 - t))
    return sp.Piecewise((0, t <= 0.002), (1, t >= 0.998), (a / (a + b), True))


def plateau_expr(plateau: boxes.Box, support: boxes.Box) -> sp.Expr:
    """Product cutoff: exactly 1 on ``plateau``, exactly 0 outside ``support``."""
    xs = coords(len(plateau))
    out = sp.Integer(1)
    for v, (plo, phi), (slo, shi) in zip(xs, plateau, support):
        if not (slo < plo <= phi < shi):
            raise PartitionError(f"plateau {plo, phi} must sit strictly inside support {slo, shi}")
        out = out * _step_expr((v - slo) / (plo - slo)) * _step_expr((shi - v) / (shi - phi))
    return out


@dataclass
class Cutoff:
    """Closed-form cutoff with known plateau (where it is 1) and support boxes."""

    plateau: boxes.Box
    support: boxes.Box

    def __post_init__(self):
        self.plateau = boxes.as_box(self.plateau)
        self.support = boxes.as_box(self.support)
        self.expr = plateau_expr(self.plateau, self.support)
        self.vars = coords(len(self.plateau))

    def jet(self, points, order) -> Jet:
        return expr_jet(self.expr, self.vars, points, order)


class PartitionOfUnity:
    """Weights ``chi_k = psi_k / sum_j psi_j`` built from cutoffs ``psi_k``.

    The weights sum to one on ``core``; ``supports[k]`` bounds supp chi_k.
    """

    def __init__(self, cutoffs: list[Cutoff], core: boxes.Box):
        self.cutoffs = cutoffs
        self.core = boxes.as_box(core)
        self.vars = cutoffs[0].vars

    def __len__(self):
        return len(self.cutoffs)

    @property
    def supports(self) -> list[boxes.Box]:
        return [c.support for c in self.cutoffs]

    def jets(self, points, order) -> list[Jet]:
        pts = np.atleast_2d(points)
        psi = [c.jet(pts, order) for c in self.cutoffs]
        total = psi[0]
        for p in psi[1:]:
            total = total + p
        inv = jet_inverse(_guard(total))
        return [jet_scalar_mul(p, inv) for p in psi]

    def check(self, samples: int = 101, tol: float = 1e-10) -> float:
        pts = boxes.grid(self.core, samples if len(self.core) == 1 else 31)
        total = sum(j.value for j in self.jets(pts, 0))
        dev = float(np.max(np.abs(total - 1.0)))
        if dev > tol:
            raise PartitionError(f"partition weights deviate from 1 by {dev:.2e} on the core")
        return dev


def _guard(total: Jet) -> Jet:
    data = total.data.copy()
    data[0] = np.where(data[0] > 0, data[0], 1.0)
    return Jet(total.dim, total.order, data)


def interval_partition(core, pieces: int, overlap: float) -> PartitionOfUnity:
    """Partition of unity on a box ``core`` from ``pieces`` overlapping cells per axis."""
    core = boxes.as_box(core)
    cells_per_axis = []
    for lo, hi in core:
        edges = np.linspace(lo, hi, pieces + 1)
        cells_per_axis.append([(edges[i], edges[i + 1]) for i in range(pieces)])
    cutoffs = []
    for combo in np.ndindex(*([pieces] * len(core))):
        plateau = tuple(cells_per_axis[a][i] for a, i in enumerate(combo))
        plateau = tuple((lo + 1e-9 if i > 0 else lo - overlap / 2, hi if i < pieces - 1 else hi + overlap / 2)
                        for (lo, hi), i in zip(plateau, combo))
        support = boxes.grow(plateau, overlap / 2)
        cutoffs.append(Cutoff(plateau, support))
    return PartitionOfUnity(cutoffs, core)


# ----------------------------------------------------------------------------
# nets


class SmoothingNet:
    """Base class.  ``kind`` is ``test`` (converges to the identity), ``zero`` (converges to 0) or ``general``."""

    kind = GENERAL
    q: int = 0
    n: int = 1
    rank: int = 1

    def apply(self, eps: float, u: DistributionalSection, chart: str, points, order: int = 0, level: int = 0) -> Jet:
        raise NotImplementedError

    def radius(self, eps: float) -> float:
        """Locality radius: output at x only depends on u near x within this distance."""
        raise NotImplementedError

    def eps_max(self, compact: boxes.Box, chart: str | None = None) -> float:
        """Largest eps for which the net can be applied on the compact."""
        raise NotImplementedError

    def __add__(self, other):
        return LinearCombinationNet([(1.0, self), (1.0, other)])

    def __sub__(self, other):
        return LinearCombinationNet([(1.0, self), (-1.0, other)])

    def __rmul__(self, c):
        return LinearCombinationNet([(float(c), self)])


class ScalarSmoothingOperatorNet:
    """Convolution-type scalar net ``u -> <u, k_eps(x, .)>`` on a box domain."""

    def __init__(self, kernel: KernelNet | Mollifier, domain):
        self.kernel = kernel if isinstance(kernel, KernelNet) else KernelNet(kernel)
        self.domain = boxes.as_box(domain)
        self.n = self.kernel.n
        self._rho = {}

    @property
    def q(self) -> int:
        return self.kernel.q

    def radius(self, eps):
        return self.kernel.radius(eps)

    def eps_max(self, compact):
        return boxes.box_margin(compact, self.domain) / self.kernel.mollifier.support_radius

    def check(self, eps, points):
        margin = boxes.inner_margin(points, self.domain)
        if margin <= self.radius(eps):
            raise SmoothingDomainError(
                f"kernel radius {self.radius(eps):.3g} exceeds the distance {margin:.3g} to the domain "
                f"boundary; shrink eps or K"
            )

    def _rule(self, level):
        if level not in self._rho:
            z, w = self.kernel.rule(level)
            self._rho[level] = (z, w * self.kernel.mollifier(z))
        return self._rho[level]

    def smooth(self, eps: float, u: SymbolicDistribution, points, order: int, level: int = 0) -> np.ndarray:
        """Array (count, npts) of ``d_x^alpha <u, k_eps(x, .)>``."""
        pts = np.atleast_2d(points)
        self.check(eps, pts)
        return self._smooth(eps, u, pts, order, level)

    def _smooth(self, eps, u, pts, order, level):
        mis = multi_indices(self.n, order)
        if isinstance(u, DeltaDerivative):
            sign = -1.0 if u.order % 2 else 1.0
            y = np.array([u.point])
            return np.stack([u.coeff * sign * eval_kernel(self.kernel, eps, pts, y, a, u.gamma) for a in mis])
        if isinstance(u, LinearCombination):
            out = np.zeros((len(mis), len(pts)))
            for c, d in u.terms:
                out += c * self._smooth(eps, d, pts, order, level)
            return out
        if isinstance(u, SmoothDensity):
            self._check_inside(eps, pts, u.domain)
            return self._smooth_density(eps, u.expr, pts, order, level)
        if isinstance(u, PiecewiseSmooth) and self.n == 1:
            self._check_inside(eps, pts, u.domain)
            return self._smooth_piecewise(eps, u, pts, order, level)
        return self._generic(eps, u, pts, order)

    def _check_inside(self, eps, pts, domain):
        if boxes.inner_margin(pts, domain) < self.radius(eps):
            raise SmoothingDomainError("kernel supports leave the distribution's domain; shrink eps or K")

    def _smooth_density(self, eps, expr, pts, order, level):
        z, wr = self._rule(level)
        y = (pts[:, None, :] + eps * z[None, :, :]).reshape(-1, self.n)
        out = []
        for a in multi_indices(self.n, order):
            vals = eval_derivative(expr, coords(self.n), a, y).reshape(len(pts), len(z))
            out.append(vals @ wr)
        return np.stack(out)

    def _smooth_piecewise(self, eps, u, pts, order, level):
        r = self.kernel.mollifier.support_radius
        x = pts[:, 0]
        t, w = gauss_legendre(160 if level == 0 else 128)
        mis = multi_indices(1, order)
        out = np.zeros((len(mis), len(pts)))
        (xv,) = coords(1)
        for a, b, dens in u.intervals():
            za = np.clip((a - x) / eps, -r, r)
            zb = np.clip((b - x) / eps, -r, r)
            full = (za <= -r) & (zb >= r)
            part = (za < zb) & ~full
            if np.any(full):
                out[:, full] += self._smooth_density(eps, dens, pts[full], order, level)
            if np.any(part):
                lo, hi = za[part], zb[part]
                half = 0.5 * (hi - lo)
                zz = lo[:, None] + half[:, None] * (t[None, :] + 1.0)
                ww = half[:, None] * w[None, :]
                yy = x[part][:, None] + eps * zz
                dv = eval_derivative(dens, (xv,), (0,), yy.reshape(-1, 1)).reshape(yy.shape)
                for ai, alpha in enumerate(mis):
                    k = alpha[0]
                    rho = self.kernel.mollifier.derivative((k,), zz.reshape(-1, 1)).reshape(zz.shape)
                    out[ai, part] += (-1.0) ** k * eps ** (-k) * np.sum(dv * rho * ww, axis=1)
        return out

    def _generic(self, eps, u, pts, order):
        mis = multi_indices(self.n, order)
        out = np.zeros((len(mis), len(pts)))
        for p, x in enumerate(pts):
            for ai, a in enumerate(mis):
                out[ai, p] = pair(u, KernelTest(self.kernel, eps, x, a))
        return out

    def __repr__(self):
        return f"ScalarSmoothingOperatorNet({self.kernel!r}, domain={boxes.to_text(self.domain)})"


class VectorSmoothingOperatorNet(SmoothingNet):
    """Matrix of scalar nets acting on the components of a section in one chart.

    The default is diagonal.  Off-diagonal entries must be 0-class nets.  With
    ``transport`` (a matrix of expressions in x and y with A(x, x) = I) the net is
    ``u -> <u, A(x, .) k_eps(x, .)>`` instead.
    """

    kind = TEST

    def __init__(self, entries, rank: int | None = None, transport=None):
        if isinstance(entries, ScalarSmoothingOperatorNet):
            m = rank or 1
            entries = [[entries if i == j else None for j in range(m)] for i in range(m)]
        self.entries = entries
        self.rank = len(entries)
        diag = [entries[i][i] for i in range(self.rank)]
        if any(d is None for d in diag):
            raise ValueError("diagonal entries must be scalar smoothing nets")
        self.n = diag[0].n
        self.q = min(d.q for d in diag)
        self.domain = diag[0].domain
        self.transport = transport
        if transport is not None:
            self._setup_transport(transport)

    def _setup_transport(self, transport):
        n = self.n
        xs = coords(n)
        ys = tuple(sp.Symbol(f"y{i}", real=True) for i in range(n))
        names = [str(v) for v in xs] + [str(v) for v in ys]
        mat = np.empty((self.rank, self.rank), dtype=object)
        for i in range(self.rank):
            for j in range(self.rank):
                e = transport[i][j]
                mat[i, j] = parse(e, names) if isinstance(e, str) else sp.sympify(e)
                diag = sp.simplify(mat[i, j].subs(dict(zip(ys, xs))) - (1 if i == j else 0))
                if diag != 0:
                    raise ValueError(f"transport entry ({i},{j}) does not reduce to the identity at y = x")
        self._transport = (mat, xs, ys)

    def radius(self, eps):
        return max(self.entries[i][j].radius(eps) for i in range(self.rank) for j in range(self.rank) if self.entries[i][j])

    def eps_max(self, compact, chart=None):
        return min(self.entries[i][i].eps_max(compact) for i in range(self.rank))

    def apply(self, eps, u, chart, points, order=0, level=0):
        comps = u.chart_components(chart) if isinstance(u, DistributionalSection) else list(u)
        if len(comps) != self.rank:
            raise ValueError(f"net of rank {self.rank} applied to {len(comps)} components")
        pts = np.atleast_2d(points)
        if self.transport is not None:
            return self._apply_transport(eps, comps, pts, order)
        out = np.zeros((count(self.n, order), len(pts), self.rank))
        cache = {}
        for i in range(self.rank):
            for j in range(self.rank):
                net = self.entries[i][j]
                if net is None:
                    continue
                key = (id(net), j)
                if key not in cache:
                    cache[key] = net.smooth(eps, comps[j], pts, order, level)
                out[:, :, i] += cache[key]
        return Jet(self.n, order, out)

    def _apply_transport(self, eps, comps, pts, order):
        mat, xs, ys = self._transport
        kernel = self.entries[0][0].kernel
        self.entries[0][0].check(eps, pts)
        mis = multi_indices(self.n, order)
        out = np.zeros((len(mis), len(pts), self.rank))
        for p, x in enumerate(pts):
            for ai, a in enumerate(mis):
                for i in range(self.rank):
                    for j in range(self.rank):
                        psi = _TransportTest(kernel, eps, x, a, mat[i, j], xs, ys)
                        out[ai, p, i] += pair(comps[j], psi)
        return Jet(self.n, order, out)

    def __repr__(self):
        return f"VectorSmoothingOperatorNet(rank={self.rank}, {self.entries[0][0]!r})"


class _TransportTest(KernelTest):
    """``y -> d_x^alpha (A(x, y) k_eps(x, y))``."""

    def __init__(self, kernel, eps, x, alpha, entry, xs, ys):
        super().__init__(kernel, eps, x, alpha)
        self.entry, self.xs, self.ys = entry, xs, ys

    def jet(self, points, order):
        from .jets import mi_binom, mi_le, mi_sub

        pts = np.atleast_2d(points)
        n = self.dim
        data = []
        for beta in multi_indices(n, order):
            acc = np.zeros(len(pts))
            for gam in multi_indices(n, sum(self.alpha)):
                if not mi_le(gam, self.alpha):
                    continue
                # d_x^gam A at fixed x, then d_y^beta' distributed by Leibniz in y
                ax = self.entry
                for v, g in zip(self.xs, gam):
                    if g:
                        ax = sp.diff(ax, v, g)
                ax = ax.subs(dict(zip(self.xs, [float(v) for v in self.x])))
                rest = mi_sub(self.alpha, gam)
                for bb in multi_indices(n, sum(beta)):
                    if not mi_le(bb, beta):
                        continue
                    ay = eval_derivative(ax, self.ys, bb, pts)
                    k = eval_kernel(self.kernel, self.eps, self.x[None], pts, rest, mi_sub(beta, bb))
                    acc += mi_binom(self.alpha, gam) * mi_binom(beta, bb) * ay * k
            data.append(acc)
        return Jet(n, order, np.stack(data))


def convolution_net(q: int, domain, rank: int = 1, support_radius: float = 1.0, base: str = "bump") -> VectorSmoothingOperatorNet:
    dom = boxes.as_box(domain)
    moll = make_mollifier(len(dom), q, base, support_radius)
    return VectorSmoothingOperatorNet(ScalarSmoothingOperatorNet(KernelNet(moll), dom), rank)


class ZeroTestObjectNet(SmoothingNet):
    """The zero net (trivially in the 0-class)."""

    kind = ZERO

    def __init__(self, n: int, rank: int = 1, q: int = 10**6):
        self.n, self.rank, self.q = n, rank, q

    def radius(self, eps):
        return 0.0

    def eps_max(self, compact, chart=None):
        return np.inf

    def apply(self, eps, u, chart, points, order=0, level=0):
        return Jet.zeros(self.n, order, len(np.atleast_2d(points)), (self.rank,))


class LinearCombinationNet(SmoothingNet):
    def __init__(self, terms):
        self.terms = [(float(c), net) for c, net in terms]
        nets = [net for _, net in self.terms]
        self.n = nets[0].n
        self.rank = nets[0].rank
        self.q = min(net.q for net in nets)
        weight = sum(c for c, net in self.terms if net.kind == TEST)
        if any(net.kind == GENERAL for net in nets):
            self.kind = GENERAL
        elif abs(weight - 1.0) < 1e-14:
            self.kind = TEST
        elif abs(weight) < 1e-14:
            self.kind = ZERO
        else:
            self.kind = GENERAL

    def radius(self, eps):
        return max(net.radius(eps) for _, net in self.terms)

    def eps_max(self, compact, chart=None):
        return min(net.eps_max(compact, chart) for _, net in self.terms)

    def apply(self, eps, u, chart, points, order=0, level=0):
        out = None
        for c, net in self.terms:
            if c == 0.0:
                continue
            j = net.apply(eps, u, chart, points, order, level).scale(c)
            out = j if out is None else out + j
        if out is None:
            return Jet.zeros(self.n, order, len(np.atleast_2d(points)), (self.rank,))
        return out


class MultipliedNet(SmoothingNet):
    """``f * Phi`` for a closed-form scalar f (the module structure)."""

    def __init__(self, factor, net: SmoothingNet):
        self.factor = as_expr(factor, net.n)
        self.net = net
        self.n, self.rank, self.q = net.n, net.rank, net.q
        self.kind = ZERO if net.kind == ZERO else GENERAL

    def radius(self, eps):
        return self.net.radius(eps)

    def eps_max(self, compact, chart=None):
        return self.net.eps_max(compact, chart)

    def apply(self, eps, u, chart, points, order=0, level=0):
        base = self.net.apply(eps, u, chart, points, order, level)
        f = expr_jet(self.factor, coords(self.n), points, order)
        return jet_scalar_mul(f, base)


class LieSONet(SmoothingNet):
    """``L_X o Phi - Phi o L_X`` for a smooth vector field X (a 0-class net)."""

    kind = ZERO

    def __init__(self, field: SmoothSection, net: SmoothingNet):
        self.field = field
        self.net = net
        self.n, self.rank, self.q = net.n, net.rank, net.q

    def radius(self, eps):
        return self.net.radius(eps)

    def eps_max(self, compact, chart=None):
        return self.net.eps_max(compact, chart)

    def apply(self, eps, u, chart, points, order=0, level=0):
        pts = np.atleast_2d(points)
        bundle = u.bundle
        xexpr = self.field.chart_exprs(chart)
        base = self.net.apply(eps, u, chart, pts, order + 1, level)
        t = Jet(base.dim, base.order, base.data.reshape(base.data.shape[:2] + bundle.fiber))
        xj = expr_jet(xexpr, coords(self.n), pts, order + 1)
        lie = lie_jet(xj, t, bundle.kinds)
        lie = Jet(lie.dim, lie.order, lie.data.reshape(lie.data.shape[:2] + (self.rank,)))
        lu = DistributionalSection(bundle, {chart: lie_derivative_section(xexpr, u, chart)})
        return lie - self.net.apply(eps, lu, chart, pts, order, level)


def lie_so(field: SmoothSection, net: SmoothingNet) -> LieSONet:
    return LieSONet(field, net)


# ----------------------------------------------------------------------------
# restriction and gluing


@dataclass
class RestrictionPartition:
    """Partition (chi_W) on the core of V with cutoffs theta_W: theta_W = 1 near supp chi_W."""

    weights: PartitionOfUnity
    thetas: list[Cutoff]

    def validate(self, v: boxes.Box):
        self.weights.check()
        for k, (sup, th) in enumerate(zip(self.weights.supports, self.thetas)):
            if not boxes.subset(th.support, v) or boxes.box_margin(th.support, v) <= 0:
                raise PartitionError(f"cutoff {k} is not compactly supported in V")
            if not boxes.subset(sup, th.plateau) or boxes.box_margin(sup, th.plateau) <= 0:
                raise PartitionError(f"cutoff {k} is not identically 1 near the support of its weight")

    def agreement_eps(self, compact: boxes.Box, radius_per_eps: float) -> float:
        """eps_0 below which kernels centered on supp chi_W within the compact stay in {theta_W = 1}."""
        best = np.inf
        for sup, th in zip(self.weights.supports, self.thetas):
            inter = boxes.intersect(sup, compact)
            if inter is None:
                continue
            best = min(best, boxes.box_margin(inter, th.plateau) / radius_per_eps)
        return best


def restriction_partition(v, core=None, pieces: int = 2, overlap: float | None = None) -> RestrictionPartition:
    """Default partition data for restricting to the box ``v``."""
    v = boxes.as_box(v)
    width = min(hi - lo for lo, hi in v)
    core = boxes.as_box(core) if core is not None else tuple((lo + 0.15 * width, hi - 0.15 * width) for lo, hi in v)
    gap = boxes.box_margin(core, v)
    ov = overlap if overlap is not None else 0.3 * gap
    weights = interval_partition(core, pieces, ov)
    thetas = []
    for c in weights.cutoffs:
        pad = (gap - ov / 2) / 3
        plateau = boxes.grow(c.support, pad)
        thetas.append(Cutoff(plateau, boxes.grow(plateau, pad)))
    part = RestrictionPartition(weights, thetas)
    part.validate(v)
    return part


def _restrict_section(u: DistributionalSection, chart: str, box, bundle=None) -> DistributionalSection:
    comps = [restrict_dist(d, box) for d in u.chart_components(chart)]
    return DistributionalSection(bundle or u.bundle, {chart: comps})


class RestrictedNet(SmoothingNet):
    """``rho_{V,U} Phi (u) = sum_W chi_W Phi(theta_W u)`` on V."""

    def __init__(self, net: SmoothingNet, v, partition: RestrictionPartition, parent_domain):
        self.net = net
        self.v = boxes.as_box(v)
        self.partition = partition
        self.parent_domain = boxes.as_box(parent_domain)
        self.n, self.rank, self.q, self.kind = net.n, net.rank, net.q, net.kind
        partition.validate(self.v)

    def radius(self, eps):
        return self.net.radius(eps)

    def eps_max(self, compact, chart=None):
        return self.net.eps_max(self.parent_domain_compact(), chart)

    def parent_domain_compact(self):
        out = None
        for th in self.partition.thetas:
            out = th.support if out is None else tuple((min(a[0], b[0]), max(a[1], b[1])) for a, b in zip(out, th.support))
        return out

    @property
    def domain(self):
        return self.v

    def agreement_eps(self, compact):
        r1 = self.net.radius(1.0)
        return self.partition.agreement_eps(compact, r1)

    def apply(self, eps, u, chart, points, order=0, level=0):
        pts = np.atleast_2d(points)
        if not np.all(boxes.contains_points(self.partition.weights.core, pts)):
            raise SmoothingDomainError("evaluation points leave the core of the restriction partition")
        weights = self.partition.weights.jets(pts, order)
        out = Jet.zeros(self.n, order, len(pts), (self.rank,))
        comps = u.chart_components(chart)
        for k, (chi, th) in enumerate(zip(weights, self.partition.thetas)):
            active = np.any(chi.data != 0.0, axis=0)
            if not np.any(active):
                continue
            cut = [_extend(multiply(d, th.expr), self.parent_domain) for d in comps]
            su = DistributionalSection(u.bundle, {chart: cut})
            val = self.net.apply(eps, su, chart, pts[active], order, level)
            sub = Jet(self.n, order, chi.data[:, active])
            contrib = jet_scalar_mul(sub, val)
            out.data[:, active] += contrib.data
        return out


def _extend(d: SymbolicDistribution, domain):
    """A compactly supported distribution on V read as one on the larger domain."""
    return _set_domain(d, boxes.as_box(domain))


def _set_domain(d, domain):
    if isinstance(d, DeltaDerivative):
        return DeltaDerivative(d.point, d.gamma, d.coeff, domain)
    if isinstance(d, SmoothDensity):
        return SmoothDensity(d.expr, d.dim, domain)
    if isinstance(d, PiecewiseSmooth):
        return PiecewiseSmooth([(list(c), e) for c, e in d.pieces], d.dim, domain)
    if isinstance(d, LinearCombination):
        return LinearCombination([(c, _set_domain(t, domain)) for c, t in d.terms], d.dim, domain)
    raise TypeError(f"cannot extend {type(d).__name__} by zero")


def restrict_so(net: SmoothingNet, v, partition: RestrictionPartition | None = None, parent_domain=None) -> RestrictedNet:
    part = partition or restriction_partition(v)
    dom = parent_domain or getattr(net, "domain", None)
    if dom is None:
        raise ValueError("parent domain of the net is unknown; pass parent_domain")
    return RestrictedNet(net, v, part, dom)


class GluedNet(SmoothingNet):
    """``Phi(u) = sum_l chi_l Phi^l(u | U_l)`` from nets on the pieces of a cover."""

    def __init__(self, cover: list, nets: list[SmoothingNet], partition: PartitionOfUnity):
        if len(cover) != len(nets) or len(nets) != len(partition):
            raise ValueError("cover, nets and partition must have the same length")
        self.cover = [boxes.as_box(c) for c in cover]
        self.nets = nets
        self.partition = partition
        self.n, self.rank = nets[0].n, nets[0].rank
        self.q = min(net.q for net in nets)
        kinds = {net.kind for net in nets}
        self.kind = kinds.pop() if len(kinds) == 1 else GENERAL
        partition.check()
        for k, (sup, c) in enumerate(zip(partition.supports, self.cover)):
            if not boxes.subset(sup, c) or boxes.box_margin(sup, c) <= 0:
                raise PartitionError(f"weight {k} is not compactly supported in its cover element")

    def radius(self, eps):
        return max(net.radius(eps) for net in self.nets)

    @property
    def domain(self):
        return tuple((min(c[a][0] for c in self.cover), max(c[a][1] for c in self.cover)) for a in range(self.n))

    def eps_max(self, compact, chart=None):
        best = np.inf
        for sup, net in zip(self.partition.supports, self.nets):
            inter = boxes.intersect(sup, compact)
            if inter is not None:
                best = min(best, net.eps_max(inter, chart))
        return best

    def apply(self, eps, u, chart, points, order=0, level=0):
        pts = np.atleast_2d(points)
        if not np.all(boxes.contains_points(self.partition.core, pts)):
            raise SmoothingDomainError("evaluation points leave the core of the gluing partition")
        weights = self.partition.jets(pts, order)
        out = Jet.zeros(self.n, order, len(pts), (self.rank,))
        for chi, net, c in zip(weights, self.nets, self.cover):
            active = np.any(chi.data != 0.0, axis=0)
            if not np.any(active):
                continue
            sub_u = _restrict_section(u, chart, c)
            val = net.apply(eps, sub_u, chart, pts[active], order, level)
            out.data[:, active] += jet_scalar_mul(Jet(self.n, order, chi.data[:, active]), val).data
        return out


def glue_so(cover, nets, partition: PartitionOfUnity) -> GluedNet:
    return GluedNet(cover, nets, partition)


# ----------------------------------------------------------------------------
# pushforward


def _fiber_exprs(bundle: Bundle, mu: Diffeomorphism, inverse: bool) -> sp.Matrix:
    """Kronecker product of slot matrices of D mu at source points (or their inverses)."""
    jac = mu.jacobian_expr
    jinv = jac.inv()
    out = None
    for kind, size in bundle.slots:
        if kind == UP:
            m = jinv if inverse else jac
        elif kind == DOWN:
            m = jac.T if inverse else jinv.T
        else:
            m = sp.eye(size)
        out = m if out is None else sp.kronecker_product(out, m)
    return sp.Matrix([[1]]) if out is None else out


class PushforwardNet(SmoothingNet):
    """``(mu_* Phi)(u) = mu_*(Phi(mu^* u))`` on the target of mu."""

    def __init__(self, mu: Diffeomorphism, net: SmoothingNet, source_chart: str = "main"):
        mu.check_invertible()
        self.mu = mu
        self.net = net
        self.source_chart = source_chart
        self.n, self.rank, self.q, self.kind = net.n, net.rank, net.q, net.kind
        self.inv = mu.inverse()

    def radius(self, eps):
        return self.net.radius(eps) * self._lipschitz()

    def _lipschitz(self):
        pts = boxes.grid(self.mu.source, 7)
        jet = self.mu.jet(pts, 1)
        d = np.stack([jet[tuple(int(i == j) for i in range(self.n))] for j in range(self.n)], axis=-1)
        return float(np.max(np.linalg.norm(d, ord=2, axis=(1, 2))))

    def eps_max(self, compact, chart=None):
        pre = self.mu.apply_inverse(boxes.grid(compact, 5))
        return self.net.eps_max(boxes.around(pre, 0.0), self.source_chart)

    def apply(self, eps, u, chart, points, order=0, level=0):
        pts = np.atleast_2d(points)
        src = pullback_section(self.mu, u, chart, self.source_chart)
        val = self.net.apply(eps, src, self.source_chart, self.inv(pts), order, level)
        return push_jet(self.mu, u.bundle, val, pts, order)


def pullback_section(mu: Diffeomorphism, u: DistributionalSection, chart: str = "main", source_chart: str = "main") -> DistributionalSection:
    """``mu^* u`` on the source of mu: ``(mu^* u)^i = (A^-1)^i_j (u^j o mu)`` with A the fiber map of D mu."""
    n = mu.n
    inv = mu.inverse()
    comps = u.chart_components(chart)
    ainv = _fiber_exprs(u.bundle, mu, inverse=True)
    out = []
    for i in range(u.bundle.rank):
        terms = [(1.0, multiply(pushforward_dist(inv, comps[j]), ainv[i, j])) for j in range(u.bundle.rank) if ainv[i, j] != 0]
        out.append(LinearCombination(terms, n, mu.source))
    return DistributionalSection(u.bundle, {source_chart: out})


def pushforward_section(mu: Diffeomorphism, u: DistributionalSection, bundle: Bundle | None = None,
                        chart: str = "main", target_chart: str = "main") -> DistributionalSection:
    """``mu_* u`` on the target of mu, with the fiber map of D mu applied."""
    n = mu.n
    comps = u.chart_components(chart)
    a = _fiber_exprs(u.bundle, mu, inverse=False)
    back = dict(zip(coords(n), mu.inverse_exprs))
    out = []
    for i in range(u.bundle.rank):
        terms = [(1.0, multiply(pushforward_dist(mu, comps[j]), sp.sympify(a[i, j]).xreplace(back)))
                 for j in range(u.bundle.rank) if a[i, j] != 0]
        out.append(LinearCombination(terms, n, mu.target))
    return DistributionalSection(bundle or u.bundle, {target_chart: out})


def push_jet(mu: Diffeomorphism, bundle: Bundle, val: Jet, points, order: int) -> Jet:
    """Jet at target points x of ``A(y) s(y)``, y = mu^-1(x), from the jet of s at the points y."""
    pts = np.atleast_2d(points)
    n = mu.n
    inv = mu.inverse()
    flat = Jet(val.dim, val.order, val.data.reshape(val.data.shape[:2] + (-1,)))
    comp = jet_compose(flat, inv.jet(pts, order))
    a = _fiber_exprs(bundle, mu, inverse=False)
    back = dict(zip(coords(n), mu.inverse_exprs))
    rank = a.shape[0]
    amat = np.empty((rank, rank), dtype=object)
    for i in range(rank):
        for j in range(rank):
            amat[i, j] = sp.sympify(a[i, j]).xreplace(back)
    aj = expr_jet(amat, coords(n), pts, order)
    out = jet_product(aj, comp, einsum_op("ij,j->i"))
    return Jet(out.dim, out.order, out.data.reshape(out.data.shape[:2] + val.fiber))


def pushforward_so(mu: Diffeomorphism, net: SmoothingNet, source_chart: str = "main") -> PushforwardNet:
    return PushforwardNet(mu, net, source_chart)


# ----------------------------------------------------------------------------
# nets over several charts


class AtlasNet(SmoothingNet):
    """Per-chart nets glued by a partition of unity subordinate to the charts.

    ``weights[l]`` is an expression for chi_l valid in every chart's coordinates
    (for instance a periodic function on angle charts).
    """

    def __init__(self, bundle: Bundle, nets: dict[str, SmoothingNet], weights: dict[str, object]):
        self.bundle = bundle
        self.nets = nets
        m = bundle.manifold
        names = [str(v) for v in m.vars]
        self.weights = {c: (w if hasattr(w, "jet") else _ExprWeight(w, names)) for c, w in weights.items()}
        first = next(iter(nets.values()))
        self.n, self.rank = first.n, first.rank
        self.q = min(net.q for net in nets.values())
        self.kind = TEST if all(net.kind == TEST for net in nets.values()) else GENERAL

    def radius(self, eps):
        return max(net.radius(eps) for net in self.nets.values())

    def eps_max(self, compact, chart=None):
        m = self.bundle.manifold
        best = np.inf
        for lam, net in self.nets.items():
            pts = boxes.grid(m.chart(lam).domain, 201 if m.n == 1 else 61)
            w = self.weights[lam].jet(pts, 0).value
            sup = pts[np.abs(w) > 0]
            if len(sup):
                best = min(best, net.eps_max(boxes.around(sup, 0.0), lam))
        return best

    def apply(self, eps, u, chart, points, order=0, level=0):
        m = self.bundle.manifold
        pts = np.atleast_2d(points)
        out = Jet.zeros(self.n, order, len(pts), (self.rank,))
        for lam, net in self.nets.items():
            chi = self.weights[lam].jet(pts, order)
            active = np.any(chi.data != 0.0, axis=0)
            if not np.any(active):
                continue
            p = pts[active]
            if not np.all(m.in_overlap(chart, lam, p)):
                raise SmoothingDomainError(f"weight of chart {lam} is nonzero outside its overlap with {chart}")
            y = m.transition(chart, lam, p)
            val = net.apply(eps, u, lam, y, order, level)
            comp = jet_compose(val, m.transition_jet(chart, lam, p, order))
            tm = _transition_jet(self.bundle, lam, chart, p, order)
            comp = jet_product(tm, comp, einsum_op("ij,j->i"))
            out.data[:, active] += jet_scalar_mul(Jet(self.n, order, chi.data[:, active]), comp).data
        return out


class _ExprWeight:
    def __init__(self, w, names):
        self.expr = parse(w, names) if isinstance(w, str) else sp.sympify(w)
        self.vars = coords(len(names))

    def jet(self, points, order):
        return expr_jet(self.expr, self.vars, points, order)


def _transition_jet(bundle: Bundle, src: str, dst: str, points, order) -> Jet:
    """Jet (in destination coordinates) of the fiber transition from chart src to chart dst."""
    m = bundle.manifold
    vars_ = m.vars
    tau_back = m.transitions[(dst, src)]
    jac = sp.Matrix([[sp.diff(f, v) for v in vars_] for f in m.transitions[(src, dst)]])
    mat = sp.Matrix([[1]])
    first = True
    for kind, size in bundle.slots:
        if kind == UP:
            s = jac
        elif kind == DOWN:
            s = jac.inv().T
        else:
            ext = bundle.ext_transitions.get((src, dst))
            s = sp.Matrix(ext) if ext is not None else sp.eye(size)
            if kind != EXT:
                s = s.inv().T
        mat = s if first else sp.kronecker_product(mat, s)
        first = False
    arr = np.empty(mat.shape, dtype=object)
    sub = dict(zip(vars_, tau_back))
    for i in range(mat.shape[0]):
        for j in range(mat.shape[1]):
            arr[i, j] = sp.sympify(mat[i, j]).xreplace(sub)
    return expr_jet(arr, vars_, points, order)


_T = sp.Symbol("t", real=True)


@lru_cache(maxsize=None)
def _step_derivative(k: int):
    inner = 1 / (1 + sp.exp(1 / _T - 1 / (1 - _T)))
    return sp.lambdify(_T, sp.diff(inner, _T, k), "numpy")


def step_jet(inner: Jet) -> Jet:
    """Jet of ``h o t`` for the smooth step h (0 for t <= 0, 1 for t >= 1) and a scalar jet t."""
    k = inner.order
    t = inner.value
    mid = (t > 0.002) & (t < 0.998)
    data = np.zeros((k + 1, len(t)))
    data[0] = np.where(t >= 0.998, 1.0, 0.0)
    if np.any(mid):
        for j in range(k + 1):
            data[j, mid] = _step_derivative(j)(t[mid])
    s = Jet(1, k, data)
    g = Jet(inner.dim, k, inner.data[..., None])
    return jet_compose(s, g)


class AngleWeight:
    """Partition weight on S^1 or T^2 subordinate to the angle charts (-pi, pi) and (0, 2pi).

    On each circle factor ``psi_A = h((cos x + 0.6) / 0.4)``, ``psi_B = h((0.6 - cos x) / 0.4)``
    and ``chi = psi / (psi_A + psi_B)``; the weight is the product over factors.
    """

    def __init__(self, label: str):
        self.label = label
        self.vars = coords(len(label))

    def _factor(self, axis: int, which: str, points, order) -> Jet:
        v = self.vars[axis]
        sub = np.atleast_2d(points)
        ta = expr_jet((sp.cos(v) + 0.6) / 0.4, self.vars, sub, order)
        tb = expr_jet((0.6 - sp.cos(v)) / 0.4, self.vars, sub, order)
        pa, pb = step_jet(ta), step_jet(tb)
        inv = jet_inverse(pa + pb)
        return jet_scalar_mul(pa if which == "A" else pb, inv)

    def jet(self, points, order) -> Jet:
        out = None
        for axis, c in enumerate(self.label):
            f = self._factor(axis, c, points, order)
            out = f if out is None else jet_scalar_mul(out, f)
        return out

    def __repr__(self):
        return f"AngleWeight({self.label})"


def circle_weights() -> dict[str, AngleWeight]:
    return {"A": AngleWeight("A"), "B": AngleWeight("B")}


def torus_weights() -> dict[str, AngleWeight]:
    return {a + b: AngleWeight(a + b) for a in "AB" for b in "AB"}


def apply(net: SmoothingNet, eps: float, u: DistributionalSection, points, order: int = 0, chart: str | None = None) -> Jet:
    """Sample ``Phi_eps(u)`` and its derivatives up to ``order`` at points of one chart."""
    chart = chart or next(iter(u.components))
    return net.apply(eps, u, chart, points, order)
