"""Built-in scenarios: named bundles of sweeps with expected verdicts.

Every scenario also carries a probe: one generalized section R whose
negligibility is decided twice, once with derivatives (spatial and in the
net) and once from the order-0 sup norm plus a moderateness certificate.
The two verdicts must agree.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import sympy as sp

from . import boxes
from . import distributions as D
from . import genfun as F
from . import geometry as G
from . import smoothing as S
from .asymptotics import (AsymptoticReport, EpsGrid, Seminorm, association_test, moderateness_test,
                          negligibility_noderiv, negligibility_test, residual_check)
from .expr import coords

NEG_GRID = EpsGrid(1, 8)
MOD_GRID = EpsGrid(3, 12)
ASSOC_GRID = EpsGrid(3, 12)
ZOO_GRID = EpsGrid(3, 8)
RES_GRID = EpsGrid(3, 8)
TORUS_GRID = EpsGrid(1, 4)
K1 = ((-1.0, 1.0),)
K2 = ((-1.0, 1.0), (-1.0, 1.0))


@dataclass(frozen=True)
class GridOverride:
    """Command-line grid bounds; fields left as None keep the per-test default."""

    k_min: int | None = None
    k_max: int | None = None
    count: int | None = None

    def apply(self, grid: EpsGrid) -> EpsGrid:
        k_min = grid.k_min if self.k_min is None else self.k_min
        k_max = grid.k_max if self.k_max is None else self.k_max
        count = grid.count if self.count is None else self.count
        return EpsGrid(k_min, k_max, grid.eps0, count)


NO_OVERRIDE = GridOverride()

Runner = Callable[[GridOverride, bool], AsymptoticReport]


@dataclass
class Check:
    name: str
    run: Runner
    expect: bool = True
    verdict: str | None = None
    probe: bool = False

    def matches(self, rep: AsymptoticReport) -> bool:
        if rep.passed != self.expect:
            return False
        return self.verdict is None or rep.verdict == self.verdict


@dataclass
class Outcome:
    check: Check
    report: AsymptoticReport

    @property
    def matched(self) -> bool:
        return self.check.matches(self.report)

    @property
    def expected(self) -> str:
        want = self.check.verdict or ("pass" if self.check.expect else "fail")
        return want


@dataclass
class Scenario:
    name: str
    summary: str
    build: Callable[[], list[Check]]
    checks_cache: list = field(default_factory=list, repr=False)

    def checks(self) -> list[Check]:
        if not self.checks_cache:
            self.checks_cache.extend(self.build())
        return self.checks_cache


def run_checks(name: str, checks: list[Check], override: GridOverride = NO_OVERRIDE, parallel: bool = False,
               probes_only: bool = False) -> list[Outcome]:
    out = []
    for chk in checks:
        if probes_only and not chk.probe:
            continue
        rep = chk.run(override, parallel)
        rep = replace(rep, scenario=name, test=f"{rep.test}[{chk.name}]")
        out.append(Outcome(chk, rep))
    return out


def run_scenario(name: str, override: GridOverride = NO_OVERRIDE, parallel: bool = False,
                 probes_only: bool = False) -> list[Outcome]:
    return run_checks(name, get(name).checks(), override, parallel, probes_only)


# ----------------------------------------------------------------------------
# check builders


def neg_check(name, r, family, directions=(), seminorm=None, m=3, grid=NEG_GRID, expect=True, probe=False) -> Check:
    def run(ov, par):
        return negligibility_test(r, family, list(directions), seminorm or Seminorm(K1), m, ov.apply(grid), parallel=par)
    return Check(name, run, expect, f"negligible({m})" if expect else "failed", probe)


def mod_check(name, r, family, seminorm=None, grid=MOD_GRID, verdict=None, expect=True) -> Check:
    def run(ov, par):
        return moderateness_test(r, family, [], seminorm or Seminorm(K1), ov.apply(grid), parallel=par)
    return Check(name, run, expect, verdict)


def assoc_check(name, r, other, family, grid=ASSOC_GRID, expect=True, witnesses=None) -> Check:
    from .asymptotics import default_witnesses

    wit = witnesses or default_witnesses()

    def run(ov, par):
        return association_test(r, other, wit, family, ov.apply(grid), parallel=par)
    return Check(name, run, expect, "associated" if expect else "failed")


def res_check(name, residual, grid=RES_GRID, tol=1e-9, seminorm="") -> Check:
    def run(ov, par):
        return residual_check(name, ov.apply(grid).values, residual, tol, seminorm=seminorm)
    return Check(name, run, True, "identity")


def probe_checks(r, family, directions=(), m=3, expect=True, compact=K1, chart="main", samples=65,
                 order=1, mod_grid=MOD_GRID, neg_grid=NEG_GRID) -> list[Check]:
    """Moderateness certificate, derivative negligibility and derivative-free negligibility of one R."""
    cache = {}
    sem0 = Seminorm(boxes.as_box(compact), 0, samples, chart)
    sem1 = Seminorm(boxes.as_box(compact), order, samples, chart)

    def cert(ov, par):
        if ov not in cache:
            cache[ov] = moderateness_test(r, family, [], sem0, ov.apply(mod_grid), parallel=par)
        return cache[ov]

    def with_derivatives(ov, par):
        return negligibility_test(r, family, list(directions), sem1, m, ov.apply(neg_grid), parallel=par)

    def without_derivatives(ov, par):
        return negligibility_noderiv(r, family, [cert(ov, par)], compact, m, ov.apply(neg_grid), parallel=par,
                                     chart=chart, samples=samples)

    verdict = f"negligible({m})" if expect else "failed"
    return [
        Check("probe moderate", cert, True, None, True),
        Check("probe derivative test", with_derivatives, expect, verdict, True),
        Check("probe derivative-free test", without_derivatives, expect, verdict, True),
    ]


# ----------------------------------------------------------------------------
# shared setups


@dataclass
class LineSetup:
    manifold: G.ChartedManifold
    line: G.Bundle
    tangent: G.Bundle
    net: S.SmoothingNet
    psi: S.SmoothingNet

    @property
    def family(self):
        return {self.line.name: self.net, self.tangent.name: self.net}

    @property
    def direction(self):
        return {self.line.name: self.psi, self.tangent.name: self.psi}

    def section(self, d) -> D.DistributionalSection:
        return D.DistributionalSection.scalar(self.line, d)

    def embed(self, d) -> F.Embed:
        return F.embed(self.section(d))

    def smooth(self, expr) -> F.SmoothCoeff:
        return F.sigma(G.SmoothSection(self.line, {"main": expr}))


def line_setup(domain=(-2.0, 2.0), q: int = 4) -> LineSetup:
    m = G.box_manifold([domain])
    net = S.convolution_net(q, [domain])
    psi = S.convolution_net(q, [domain], support_radius=0.6) - net
    return LineSetup(m, G.line(m), G.tangent(m), net, psi)


def sup_diff(a, b, points, order=1) -> float:
    return float(np.max(np.abs(a.truncate(order).data - b.truncate(order).data), initial=0.0))


# ----------------------------------------------------------------------------
# scenarios


def _schwartz_product():
    s = line_setup()
    f, g = D.SmoothDensity("sin(x)", 1), D.SmoothDensity("exp(x)", 1)
    fg = D.SmoothDensity("sin(x)*exp(x)", 1)
    product = s.embed(f) * s.embed(g) - s.embed(fg)
    smooth = s.embed(f) - s.smooth("sin(x)")
    fam = {"R": s.net}
    out = []
    for label, r in [("embed(sin)*embed(exp) - embed(sin*exp)", product), ("embed(sin) - sigma(sin)", smooth)]:
        for order in range(4):
            for j in range(3):
                out.append(neg_check(f"{label} m={order} j={j}", r, fam, [{"R": s.psi}] * j, Seminorm(K1, order), 3))
    return out + probe_checks(smooth, fam, [{"R": s.psi}])


def _heaviside_powers():
    s = line_setup()
    h = s.embed(D.heaviside(0.0))
    fam = {"R": s.net}
    return [
        assoc_check("H*H ~ H", h * h, h, fam),
        assoc_check("H*H*H ~ H", h * h * h, h, fam),
        mod_check("H*H moderate", h * h, fam, verdict="moderate(0)"),
        neg_check("H*H - H negligible", h * h - h, fam, m=1, expect=False),
    ] + probe_checks(h * h - h, fam, [{"R": s.psi}], m=1, expect=False)


def _h_delta():
    s = line_setup()
    h, d = s.embed(D.heaviside(0.0)), s.embed(D.delta(0.0))
    fam = {"R": s.net}
    half = s.section(D.LinearCombination([(0.5, D.delta(0.0))], 1))
    return [
        assoc_check("H*delta ~ delta/2", h * d, half, fam),
        assoc_check("H*delta ~ delta", h * d, s.section(D.delta(0.0)), fam, expect=False),
        mod_check("H*delta moderate", h * d, fam, verdict="moderate(1)"),
    ] + probe_checks(h * d - F.Scale(0.5, d), fam, [{"R": s.psi}], m=1, expect=False)


def _delta_square():
    s = line_setup()
    d = s.embed(D.delta(0.0))
    fam = {"R": s.net}
    out = [
        mod_check("delta moderate", d, fam, verdict="moderate(1)"),
        mod_check("delta^2 moderate", d * d, fam, verdict="moderate(2)"),
    ]
    for name, z in D.zoo().items():
        out.append(assoc_check(f"delta^2 ~ {name}", d * d, s.section(z), fam, ZOO_GRID, expect=False))
    return out + probe_checks(d * d, fam, [{"R": s.psi}], m=1, expect=False)


LIE_FIELD = "1 + x/2"


def _lie_commute():
    s = line_setup()
    x = G.vector_field(s.manifold, [LIE_FIELD])
    fam = s.family
    pts = boxes.grid(K1, 64)
    out = []
    cases = [("delta", s.section(D.delta(0.0))), ("heaviside", s.section(D.heaviside(0.25))),
             ("sin", s.section(D.SmoothDensity("sin(x)", 1))),
             ("vector delta", D.DistributionalSection.uniform(s.tangent, [D.delta(-0.3)]))]
    diffs = []
    for label, u in cases:
        lhs = F.lie_hat(x, F.embed(u))
        lu = D.DistributionalSection(u.bundle, {"main": D.lie_derivative_section([LIE_FIELD], u, "main")})
        rhs = F.embed(lu)
        diffs.append(lhs - rhs)

        def residual(eps, lhs=lhs, rhs=rhs):
            return sup_diff(F.evaluate(lhs, fam, eps, pts, 1), F.evaluate(rhs, fam, eps, pts, 1), pts)
        out.append(res_check(f"hat-Lie commutes with embedding ({label})", residual))
    out.append(neg_check("hat-Lie(embed delta) - embed(Lie delta) negligible", diffs[0], fam, [s.direction], m=3))
    return out + probe_checks(diffs[0], fam, [s.direction], m=3)


def _hat_tilde_assoc():
    s = line_setup()
    x = G.vector_field(s.manifold, [LIE_FIELD])
    d = s.embed(D.delta(0.0))
    hat, tilde = F.lie_hat(x, d), F.lie_tilde(F.sigma(x), d)
    fam = s.family
    return [
        assoc_check("hat-Lie(delta) ~ tilde-Lie(delta)", hat, tilde, fam),
        neg_check("hat-Lie(delta) - tilde-Lie(delta) negligible", hat - tilde, fam, m=1, expect=False),
    ] + probe_checks(hat - tilde, fam, [s.direction], m=1, expect=False)


CONFORMAL_FACTOR = "sin(x)*cos(y)/3"


@dataclass
class TorusSetup:
    manifold: G.ChartedManifold
    metric: G.SmoothSection
    net: S.AtlasNet

    @property
    def family(self):
        return {self.metric.bundle.name: self.net}

    def embed_metric(self, g: G.SmoothSection) -> F.Embed:
        comps = [D.SmoothDensity(e, 2) for e in g.chart_exprs("AA").ravel()]
        return F.embed(D.DistributionalSection.uniform(g.bundle, comps))


def torus_setup(factor: str = CONFORMAL_FACTOR, q: int = 4) -> TorusSetup:
    tor = G.torus()
    g = G.conformal_metric(tor, factor)
    nets = {k: S.convolution_net(q, tor.chart(k).domain, rank=g.bundle.rank) for k in tor.charts}
    return TorusSetup(tor, g, S.AtlasNet(g.bundle, nets, S.torus_weights()))


def _smooth_levi_civita():
    t = torus_setup()
    gamma = F.MetricChristoffel(t.embed_metric(t.metric))
    classical = F.GenConnection.from_smooth(G.levi_civita_classical(t.metric)).gamma
    diff = gamma - classical
    flat = G.metric(t.manifold, [["1", "0"], ["0", "1"]])
    curv = F.curvature_tensor(F.levi_civita(t.embed_metric(flat)))
    pts = boxes.grid(K2, 8)

    def flat_residual(eps):
        return float(np.max(np.abs(F.evaluate(curv, t.family, eps, pts, 0, "AA").data)))

    fam = t.family
    return [
        neg_check("Levi-Civita(embed g) - classical m=0", diff, fam, (), Seminorm(K2, 0, 27, "AA"), 4, TORUS_GRID),
        neg_check("Levi-Civita(embed g) - classical m=1", diff, fam, (), Seminorm(K2, 1, 27, "AA"), 4, TORUS_GRID),
        res_check("curvature of embedded flat metric", flat_residual, TORUS_GRID, tol=1e-9, seminorm="K=T2;chart=AA"),
    ] + probe_checks(diff, fam, (), m=4, compact=K2, chart="AA", samples=27, mod_grid=TORUS_GRID,
                     neg_grid=TORUS_GRID)


def conformal_oracle(factor: str):
    """Scalar curvature of ``exp(2u)(dx^2 + dy^2)``: ``-2 exp(-2u) (u_xx + u_yy)``."""
    x, y = coords(2)
    u = sp.sympify(factor, locals={"x": x, "y": y})
    return -2 * sp.exp(-2 * u) * (sp.diff(u, x, 2) + sp.diff(u, y, 2))


def _conformal_curvature():
    t = torus_setup()
    x, y = coords(2)
    classical = G.scalar_curvature_exprs(t.metric.chart_exprs("AA"), (x, y))
    gap = sp.lambdify((x, y), classical - conformal_oracle(CONFORMAL_FACTOR), "numpy")
    pts = boxes.grid(K2, 8)

    def oracle_residual(eps):
        return float(np.max(np.abs(np.broadcast_to(gap(pts[:, 0], pts[:, 1]), len(pts)))))

    smooth = F.sigma(G.SmoothSection.uniform(G.line(t.manifold), sp.sympify(classical)))
    diff = F.scalar_curvature(t.embed_metric(t.metric)) - smooth
    fam = t.family
    return [
        res_check("classical scalar curvature vs conformal formula", oracle_residual, EpsGrid(0, 0), tol=1e-6,
                  seminorm="K=T2;chart=AA"),
        neg_check("scalar curvature(embed g) - classical", diff, fam, (), Seminorm(K2, 0, 27, "AA"), 3, TORUS_GRID),
    ] + probe_checks(diff, fam, (), m=3, compact=K2, chart="AA", samples=27, mod_grid=TORUS_GRID,
                     neg_grid=TORUS_GRID)


NESTED = (((-2.0, 2.0), (-1.5, 1.5), (-1.0, 1.0)),
          ((-1.0, 2.0), (0.0, 1.5), (0.25, 1.0)),
          ((-3.0, 3.0), (-2.0, 1.0), (-1.5, 0.0)))


def _first_pows(eps0: float, count: int = 4, start: int = 1) -> list[float]:
    out, k = [], start
    while len(out) < count:
        if 2.0**-k <= eps0:
            out.append(2.0**-k)
        k += 1
    return out


def _restriction_sheaf():
    out = []
    for idx, (u_box, v_box, w_box) in enumerate(NESTED):
        s = line_setup(u_box)
        a, b = w_box
        c = 0.5 * (a + b)
        u = s.section(D.parse_spec(f"delta({c + 0.1 * (b - a)}) + heaviside({c - 0.1 * (b - a)})", 1, (u_box,)))
        fam = {"R": s.net}
        fam_v = F.restrict_family(fam, [v_box])
        fam_w = F.restrict_family(fam, [w_box])
        fam_vw = F.restrict_family(fam_v, [w_box])
        core_v = fam_v["R"].partition.weights.core
        core_w = fam_w["R"].partition.weights.core
        pts_v = boxes.grid(core_v, 64)
        pts_w = boxes.grid(core_w, 64)
        iu = F.embed(u)
        f = s.smooth("cos(x) + x")
        r = f * iu

        eps_v = fam_v["R"].agreement_eps(core_v)
        eps_w = min(fam_w["R"].agreement_eps(core_w), fam_vw["R"].agreement_eps(core_w),
                    fam_v["R"].agreement_eps(fam_vw["R"].parent_domain_compact()))
        tag = f"config {idx + 1}"

        def morphism(eps, iu=iu, fam=fam, fam_v=fam_v, v_box=v_box, pts_v=pts_v):
            lhs = F.evaluate(F.restrict_gensec(iu, [v_box]), fam_v, eps, pts_v, 1)
            return sup_diff(lhs, F.evaluate(iu, fam, eps, pts_v, 1), pts_v)

        def transitive(eps, r=r, v_box=v_box, w_box=w_box, fam_vw=fam_vw, fam_w=fam_w, pts_w=pts_w):
            twice = F.restrict_gensec(F.restrict_gensec(r, [v_box]), [w_box])
            once = F.restrict_gensec(r, [w_box])
            return sup_diff(F.evaluate(twice, fam_vw, eps, pts_w, 1), F.evaluate(once, fam_w, eps, pts_w, 1), pts_w)

        def module(eps, r=r, iu=iu, f=f, v_box=v_box, fam_v=fam_v, pts_v=pts_v):
            lhs = F.evaluate(F.restrict_gensec(r, [v_box]), fam_v, eps, pts_v, 1)
            fv = F.evaluate(F.restrict_gensec(f, [v_box]), fam_v, eps, pts_v, 1)
            uv = F.evaluate(F.restrict_gensec(iu, [v_box]), fam_v, eps, pts_v, 1)
            from .jets import jet_mul
            return sup_diff(lhs, jet_mul(fv, uv), pts_v)

        out += [
            _fixed_residual(f"{tag}: embedding commutes with restriction", morphism, _first_pows(eps_v)),
            _fixed_residual(f"{tag}: restriction is transitive", transitive, _first_pows(eps_w)),
            _fixed_residual(f"{tag}: restriction is module-linear", module, _first_pows(eps_v)),
        ]
    s = line_setup(NESTED[0][0])
    v_box = NESTED[0][1]
    fam_v = F.restrict_family({"R": s.net}, [v_box])
    psi_v = {"R": S.restrict_so(s.psi, [v_box], parent_domain=[NESTED[0][0]])}
    r_v = F.restrict_gensec(s.embed(D.SmoothDensity("sin(x)", 1)) - s.smooth("sin(x)"), [v_box])
    core = fam_v["R"].partition.weights.core
    eps0 = fam_v["R"].agreement_eps(core)
    grid = EpsGrid(1, 8, eps0)
    return out + probe_checks(r_v, fam_v, [psi_v], m=3, compact=core, mod_grid=grid, neg_grid=grid)


def _fixed_residual(name, residual, eps_values, tol=1e-9) -> Check:
    """Residual on eps values below an agreement threshold; only the grid count is taken from overrides."""
    def run(ov, par):
        return residual_check(name, eps_values, residual, tol)
    return Check(name, run, True, "identity")


GLUE_COVER = [((-1.0, 1.0),), ((0.0, 2.0),)]


def glue_partition() -> S.PartitionOfUnity:
    return S.PartitionOfUnity([S.Cutoff([(-0.6, 0.4)], [(-0.7, 0.8)]), S.Cutoff([(0.6, 1.6)], [(0.3, 1.7)])],
                              [(-0.5, 1.5)])


def _glue_test_objects():
    domain = (-1.0, 2.0)
    m = G.box_manifold([domain])
    line = G.line(m)
    nets = [S.convolution_net(4, list(GLUE_COVER[0])), S.convolution_net(2, list(GLUE_COVER[1]))]
    glued = S.glue_so(GLUE_COVER, nets, glue_partition())
    v = [(-0.5, 0.3)]
    part = S.restriction_partition(v)
    from_glued = S.restrict_so(glued, v, part)
    from_piece = S.restrict_so(nets[0], v, part)
    u = D.DistributionalSection.scalar(line, D.parse_spec("delta(-0.1) + heaviside(0.05)", 1, (domain,)))
    pts = boxes.grid(part.weights.core, 64)
    eps0 = min(from_glued.agreement_eps(part.weights.core), from_piece.agreement_eps(part.weights.core))

    def glue_restrict(eps):
        return sup_diff(from_glued.apply(eps, u, "main", pts, 1), from_piece.apply(eps, u, "main", pts, 1), pts)

    k = ((-0.4, 1.4),)
    sin = D.DistributionalSection.scalar(line, D.SmoothDensity("sin(x)", 1))
    r = F.embed(sin) - F.sigma(G.SmoothSection(line, {"main": "sin(x)"}))
    fam = {"R": glued}
    grid = EpsGrid(1, 8, glued.eps_max(k))
    return [
        _fixed_residual("glued net restricted to the plateau of one weight", glue_restrict, _first_pows(eps0)),
        neg_check("glued: embed(sin) - sigma(sin)", r, fam, (), Seminorm(k, 0), 2, grid),
    ] + probe_checks(r, fam, (), m=2, compact=k, mod_grid=grid, neg_grid=grid)


_BUILTINS = [
    Scenario("schwartz-product", "embedding and smooth multiplication agree on smooth functions", _schwartz_product),
    Scenario("heaviside-powers", "powers of H are associated to H but not equal to it", _heaviside_powers),
    Scenario("h-delta", "H times delta is associated to delta/2", _h_delta),
    Scenario("delta-square", "delta^2 is moderate of order 2 and has no distributional limit", _delta_square),
    Scenario("lie-commute", "the hat Lie derivative commutes with the embedding", _lie_commute),
    Scenario("hat-tilde-assoc", "hat and tilde Lie derivatives of delta are associated", _hat_tilde_assoc),
    Scenario("smooth-levi-civita", "Levi-Civita of an embedded smooth metric on T^2", _smooth_levi_civita),
    Scenario("restriction-sheaf", "restriction of nets and sections on nested intervals", _restriction_sheaf),
    Scenario("glue-test-objects", "gluing test objects with a partition of unity", _glue_test_objects),
    Scenario("conformal-curvature", "scalar curvature of a conformally flat metric on T^2", _conformal_curvature),
]

BUILTINS = {s.name: s for s in _BUILTINS}


def names() -> list[str]:
    return list(BUILTINS)


def get(name: str) -> Scenario:
    try:
        return BUILTINS[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; known: {', '.join(BUILTINS)}") from None
