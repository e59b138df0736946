"""Eps-sweeps that certify moderateness, negligibility and association.

Every sweep samples a seminorm (or a pairing) on a dyadic eps grid and fits a
power law on (log 1/eps, -log value).  Values at the quadrature noise floor are
excluded from fits; the floor is estimated per sample by re-evaluating with a
coarser quadrature rule.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import boxes
from .distributions import DistributionalSection, TestFunction, WitnessFunction, pair
from .genfun import GenSection, differential
from .mollifiers import gauss_legendre

SLOPE_TOL = 0.25
FIT_RESIDUAL = 0.3
SLOPE_FLOOR = -40.0
ASSOCIATION_TOL = 1e-3
NOISE_FACTOR = 10.0

SURROGATE_NOTE = (
    "certificates are computed on the finite family of nets listed here; "
    "uniformity over all test objects is not checked"
)


class ConfigurationError(ValueError):
    """A test was requested with parameters the nets cannot support."""


class PreconditionError(ValueError):
    """A test was requested without the certificate it depends on."""


class SweepError(RuntimeError):
    def __init__(self, eps: float, cause: Exception):
        super().__init__(f"evaluation failed at eps={eps:g}: {cause}")
        self.eps = eps
        self.cause = cause


@dataclass(frozen=True)
class EpsGrid:
    """Dyadic grid ``2^-k`` for k = k_min..k_max, optionally cut at eps0.

    With ``count`` set, the grid has that many log-spaced points from
    ``2^-k_min`` down to ``2^-k_max`` instead of one per integer k.
    """

    k_min: int = 3
    k_max: int = 12
    eps0: float = math.inf
    count: int | None = None

    def __post_init__(self):
        if self.k_max < self.k_min:
            raise ConfigurationError(f"empty eps grid: k_min={self.k_min} > k_max={self.k_max}")
        if self.count is not None and self.count < 2:
            raise ConfigurationError(f"an eps grid needs at least 2 points (got {self.count})")

    @property
    def values(self) -> tuple[float, ...]:
        if self.count is None:
            ks = [float(k) for k in range(self.k_min, self.k_max + 1)]
        else:
            ks = np.linspace(self.k_min, self.k_max, self.count).tolist()
        return tuple(2.0**-k for k in ks if 2.0**-k <= self.eps0)

    def cut(self, eps0: float) -> "EpsGrid":
        return EpsGrid(self.k_min, self.k_max, min(self.eps0, eps0), self.count)

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class Seminorm:
    """``sup over x in K, |alpha| <= m, fiber components of |d^alpha R(x)|`` on a sampled box K."""

    compact: boxes.Box
    order: int = 0
    samples: int = 65
    chart: str = "main"

    @property
    def ident(self) -> str:
        return f"K={boxes.to_text(self.compact)};m={self.order};chart={self.chart}"

    def points(self, eps: float = 0.0, singular=(), radius: float = 0.0) -> np.ndarray:
        """Sample grid of K, refined near singular points on the scale of the kernel radius."""
        k = boxes.as_box(self.compact)
        n = len(k)
        base = boxes.grid(k, self.samples if n == 1 else max(9, int(round(self.samples ** (2 / 3)))))
        extra = []
        if radius > 0:
            for p in singular:
                p = np.atleast_1d(np.asarray(p, dtype=float))
                if n == 1:
                    loc = p[0] + radius * np.linspace(-1.25, 1.25, 41)
                    extra.append(loc[:, None])
                else:
                    axis = radius * np.linspace(-1.25, 1.25, 11)
                    mesh = np.stack(np.meshgrid(*([axis] * n), indexing="ij"), -1).reshape(-1, n)
                    extra.append(p + mesh)
        pts = np.concatenate([base] + extra) if extra else base
        return pts[boxes.contains_points(k, pts)]

    def value(self, jet) -> float:
        return jet.sup(self.order)


@dataclass
class FitResult:
    slope: float
    residual: float
    log_constant: float
    used: int
    flags: list[str] = field(default_factory=list)
    zero: bool = False


def fit_slope(eps, values, noise=None) -> FitResult:
    """Least squares on (log 1/eps, -log value); value ~ C eps^slope.

    Samples at or below ``NOISE_FACTOR * noise`` are excluded.  If nothing is
    left the result is flagged ``zero``.
    """
    eps = np.asarray(eps, dtype=float)
    vals = np.asarray(values, dtype=float)
    if len(eps) != len(vals):
        raise ValueError("eps and values differ in length")
    flags = []
    keep = vals > 0
    if np.any(vals < 0):
        raise ValueError("seminorm values must be non-negative")
    if noise is not None:
        floor = NOISE_FACTOR * np.asarray(noise, dtype=float)
        above = vals > floor
        if not np.all(above[keep]):
            flags.append(f"excluded {int(np.sum(keep & ~above))} samples at the roundoff floor")
        keep &= above
    if not np.any(keep):
        return FitResult(math.inf, 0.0, -math.inf, 0, flags + ["zero within roundoff"], zero=True)
    if np.any(vals == 0) and np.any(vals > 0):
        flags.append("mixed zero and positive values; fitted the positive subset")
    x = np.log(1.0 / eps[keep])
    y = -np.log(vals[keep])
    used = int(np.sum(keep))
    if used < 2:
        flags.append("single usable sample; no slope")
        return FitResult(math.nan, math.inf, math.nan, used, flags)
    if used < 4:
        flags.append(f"only {used} usable samples")
    a = np.vstack([x, np.ones_like(x)]).T
    (slope, icpt), *_ = np.linalg.lstsq(a, y, rcond=None)
    resid = float(np.sqrt(np.mean((a @ np.array([slope, icpt]) - y) ** 2)))
    return FitResult(float(slope), resid, float(-icpt), used, flags)


@dataclass
class AsymptoticReport:
    scenario: str
    test: str
    seminorm: str
    j: int
    eps: list
    values: list
    noise: list
    slope: float
    residual: float
    verdict: str
    passed: bool
    target: int | None = None
    witnesses: list = field(default_factory=list)
    nets: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    certificate: str | None = None
    note: str = SURROGATE_NOTE

    @property
    def moderate_degree(self) -> int | None:
        if self.verdict.startswith("moderate("):
            return int(self.verdict[len("moderate(") : -1])
        return None

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["slope"] = _finite(self.slope)
        rec["residual"] = _finite(self.residual)
        return rec

    def key(self) -> str:
        return f"{self.scenario}|{self.test}|{self.seminorm}|j={self.j}"


def _finite(v):
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return None if v is None or math.isnan(v) else ("inf" if v > 0 else "-inf")
    return v


# ----------------------------------------------------------------------------
# sampling


def _map(fn, items, parallel: bool):
    if parallel and len(items) > 1:
        with ThreadPoolExecutor() as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def _singular(r: GenSection, chart: str) -> list:
    out = []
    stack = [r]
    while stack:
        node = stack.pop()
        u = getattr(node, "u", None)
        if isinstance(u, DistributionalSection) and chart in u.components:
            out.extend(u.singular_points(chart))
        stack.extend(node.children)
    uniq = {tuple(np.round(p, 12)) for p in out}
    return [np.array(p) for p in sorted(uniq)]


def _radius(family: dict, directions) -> float:
    nets = list(family.values()) + [n for d in directions for n in d.values()]
    return max(net.radius(1.0) for net in nets)


def _sweep(r, family, directions, seminorm: Seminorm, grid: EpsGrid, parallel: bool):
    j = len(directions)
    sing = _singular(r, seminorm.chart)
    rad = _radius(family, directions)

    def one(eps):
        pts = seminorm.points(eps, sing, rad * eps)
        try:
            hi = differential(r, j, family, directions, eps, pts, seminorm.order, seminorm.chart, level=0)
            lo = differential(r, j, family, directions, eps, pts, seminorm.order, seminorm.chart, level=1)
        except Exception as exc:  # evaluation errors carry the offending eps
            raise SweepError(eps, exc) from exc
        val = seminorm.value(hi)
        noise = (hi - lo).sup(seminorm.order)
        return val, noise

    eps = list(grid.values)
    if len(eps) < 4:
        raise ConfigurationError(f"eps grid has {len(eps)} points after the eps0 cut; need at least 4")
    res = _map(one, eps, parallel)
    return eps, [v for v, _ in res], [n for _, n in res]


def _net_ids(family, directions) -> list[str]:
    out = [f"Phi[{k}]={v!r}" for k, v in sorted(family.items())]
    for i, d in enumerate(directions):
        out += [f"Psi{i + 1}[{k}]={v!r}" for k, v in sorted(d.items())]
    return out


def _min_q(family, directions) -> int:
    nets = list(family.values()) + [n for d in directions for n in d.values()]
    return min(net.q for net in nets)


# ----------------------------------------------------------------------------
# tests


def moderateness_test(r: GenSection, family: dict, directions=(), seminorm: Seminorm | None = None,
                      grid: EpsGrid | None = None, scenario: str = "", parallel: bool = False) -> AsymptoticReport:
    """``p(d^j R(Phi_eps)(Psi_1, ..., Psi_j)) = O(eps^-N)``: verdict moderate(N) or failed."""
    directions = list(directions)
    seminorm = seminorm or Seminorm(((-1.0, 1.0),))
    grid = grid or EpsGrid()
    if _min_q(family, directions) < seminorm.order:
        raise ConfigurationError(f"moment order below the seminorm order {seminorm.order}")
    eps, vals, noise = _sweep(r, family, directions, seminorm, grid, parallel)
    fit = fit_slope(eps, vals, noise)
    if fit.zero:
        verdict, ok = "moderate(0)", True
    elif math.isfinite(fit.slope) and fit.residual < FIT_RESIDUAL and fit.slope > SLOPE_FLOOR:
        verdict, ok = f"moderate({max(0, math.ceil(-fit.slope - SLOPE_TOL))})", True
    else:
        verdict, ok = "failed", False
    return AsymptoticReport(scenario, "moderateness", seminorm.ident, len(directions), eps, vals, noise,
                            fit.slope, fit.residual, verdict, ok, None, [], _net_ids(family, directions), fit.flags)


def negligibility_test(r: GenSection, family: dict, directions=(), seminorm: Seminorm | None = None,
                       m_target: int = 1, grid: EpsGrid | None = None, scenario: str = "",
                       parallel: bool = False) -> AsymptoticReport:
    """``p(d^j R(Phi_eps)(Psi...)) = O(eps^m)``: verdict negligible(m) if the slope is at least m - 0.25."""
    directions = list(directions)
    seminorm = seminorm or Seminorm(((-1.0, 1.0),))
    grid = grid or EpsGrid()
    q = _min_q(family, directions)
    if q < m_target:
        raise ConfigurationError(
            f"negligibility of order {m_target} needs a mollifier with at least {m_target} vanishing moments (got q={q})"
        )
    eps, vals, noise = _sweep(r, family, directions, seminorm, grid, parallel)
    return _negligible_report(scenario, "negligibility", seminorm, directions, eps, vals, noise, m_target,
                              _net_ids(family, directions))


def _negligible_report(scenario, test, seminorm, directions, eps, vals, noise, m_target, nets, certificate=None):
    fit = fit_slope(eps, vals, noise)
    ok = fit.zero or (math.isfinite(fit.slope) and fit.slope >= m_target - SLOPE_TOL)
    verdict = f"negligible({m_target})" if ok else "failed"
    return AsymptoticReport(scenario, test, seminorm.ident, len(directions), eps, vals, noise, fit.slope,
                            fit.residual, verdict, ok, m_target, [], nets, fit.flags, certificate)


def negligibility_noderiv(r: GenSection, family: dict, certificates, compact=((-1.0, 1.0),), m_target: int = 1,
                          grid: EpsGrid | None = None, scenario: str = "", parallel: bool = False,
                          chart: str = "main", samples: int = 65) -> AsymptoticReport:
    """Order-0 sup-norm sweep only; requires a passing moderateness certificate for R."""
    certs = [c for c in certificates if c.test.startswith("moderateness") and c.passed]
    if not certs:
        raise PreconditionError("the derivative-free negligibility test needs a moderateness certificate for R")
    seminorm = Seminorm(boxes.as_box(compact), 0, samples, chart)
    grid = grid or EpsGrid()
    eps, vals, noise = _sweep(r, family, [], seminorm, grid, parallel)
    return _negligible_report(scenario, "negligibility-noderiv", seminorm, [], eps, vals, noise, m_target,
                              _net_ids(family, []), ";".join(c.key() for c in certs))


def residual_check(label: str, eps, residual, tol: float = 1e-9, scenario: str = "",
                   seminorm: str = "", flags=()) -> AsymptoticReport:
    """Exact-identity check: ``residual(eps)`` must stay at or below tol on every grid point."""
    eps = list(eps)
    vals = [float(residual(e)) for e in eps]
    ok = bool(vals) and max(vals) <= tol
    return AsymptoticReport(scenario, f"residual:{label}", seminorm or "residual", 0, eps, vals, [0.0] * len(eps),
                            math.nan, math.nan, "identity" if ok else "failed", ok, None, [], [],
                            list(flags) + [f"max residual {max(vals) if vals else math.nan:.3e} (tol {tol:g})"])


# ----------------------------------------------------------------------------
# association


def default_witnesses(center: float = 0.0, count_: int = 5) -> list[WitnessFunction]:
    """Bump witnesses with polynomial factors, all supported in [-0.9, 0.9] around the center."""
    factors = ["1", "1 + x", "2 - x**2", "exp(x)", "cos(3*x) + x"]
    radii = [0.9, 0.7, 0.8, 0.6, 0.75]
    return [WitnessFunction([center], radii[i], factors[i]) for i in range(count_)]


def _panels(lo, hi, breaks, per_panel: int = 48):
    cuts = sorted({lo, hi} | {b for b in breaks if lo < b < hi})
    t, w = gauss_legendre(per_panel)
    xs, ws = [], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        h = 0.5 * (b - a)
        xs.append(a + h * (t + 1.0))
        ws.append(h * w)
    return np.concatenate(xs), np.concatenate(ws)


def generalized_pairing(r: GenSection, family: dict, eps: float, psi: TestFunction, chart: str = "main",
                        level: int = 0) -> float:
    """``<R(Phi_eps), psi>`` by composite Gauss-Legendre panels refined at kernel-scale breakpoints (1D scalar)."""
    if r.fiber not in ((), (1,)) or len(psi.support) != 1:
        raise ConfigurationError("pairing of generalized functions is implemented for scalar sections in one dimension")
    (lo, hi), = psi.support
    rad = _radius(family, []) * eps
    breaks = []
    for p in _singular(r, chart):
        c = float(p[0])
        breaks += [c - rad, c - rad / 2, c, c + rad / 2, c + rad]
    n_panel = 48 if level == 0 else 40
    # uniform panels of width about the kernel radius near singular points keep the rule exact to roundoff
    extra = []
    for p in _singular(r, chart):
        extra += list(float(p[0]) + rad * np.linspace(-1, 1, 9))
    x, w = _panels(lo, hi, breaks + extra + list(np.linspace(lo, hi, 9)), n_panel)
    vals = differential(r, 0, family, [], eps, x[:, None], 0, chart, level).value.reshape(len(x))
    return float(np.sum(vals * psi(x[:, None]) * w))


def association_test(r: GenSection, other, witnesses, family: dict, grid: EpsGrid | None = None,
                     scenario: str = "", tol: float = ASSOCIATION_TOL, parallel: bool = False) -> AsymptoticReport:
    """``<R(Phi_eps) - S(Phi_eps), psi> -> 0`` (or ``- <u, psi>`` for a distribution u) for every witness."""
    grid = grid or EpsGrid()
    eps = list(grid.values)
    if len(eps) < 4:
        raise ConfigurationError("association needs at least 4 grid points")
    seqs = []
    scale = 1.0
    for psi in witnesses:
        if isinstance(other, GenSection):
            def diff(e, psi=psi):
                return generalized_pairing(r, family, e, psi) - generalized_pairing(other, family, e, psi)
        else:
            comps = other.chart_components("main") if isinstance(other, DistributionalSection) else [other]
            ref = pair(comps[0], psi)
            scale = max(scale, abs(ref))

            def diff(e, psi=psi, ref=ref):
                return generalized_pairing(r, family, e, psi) - ref
        seqs.append(_map(diff, eps, parallel))
    ok = True
    flags = []
    worst = 0.0
    for k, seq in enumerate(seqs):
        mags = np.abs(np.asarray(seq))
        worst = max(worst, float(mags[-1]))
        tail = mags[-4:]
        monotone = all(tail[i + 1] <= tail[i] * 1.05 + 1e-10 * scale for i in range(len(tail) - 1))
        if mags[-1] >= tol * scale or not monotone:
            ok = False
            flags.append(f"witness {k}: last |pairing| {mags[-1]:.3e}, monotone tail {monotone}")
    fit = fit_slope(eps, [max(abs(s[i]) for s in seqs) for i in range(len(eps))])
    verdict = "associated" if ok else "failed"
    other_name = type(other).__name__
    return AsymptoticReport(scenario, "association", f"pairing vs {other_name}", 0, eps,
                            [max(abs(s[i]) for s in seqs) for i in range(len(eps))], [0.0] * len(eps),
                            fit.slope, fit.residual, verdict, ok, None, [repr(w) for w in witnesses],
                            _net_ids(family, []), flags + [f"max |pairing| at smallest eps {worst:.3e}"])


# ----------------------------------------------------------------------------
# output


CSV_COLUMNS = ("scenario", "K", "m", "j", "eps", "value")


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rep in sorted(reports, key=lambda r: r.key()):
        k, m = _split_seminorm(rep.seminorm)
        for e, v in zip(rep.eps, rep.values):
            w.writerow([rep.scenario, k, m, rep.j, repr(float(e)), repr(float(v))])
    return buf.getvalue()


def _split_seminorm(ident: str):
    parts = dict(p.split("=", 1) for p in ident.split(";") if "=" in p)
    return parts.get("K", ident), parts.get("m", "")


def reports_to_json(reports, header: dict | None = None) -> str:
    doc = {"note": SURROGATE_NOTE, "reports": [r.to_record() for r in sorted(reports, key=lambda r: r.key())]}
    if header:
        doc.update(header)
    return json.dumps(doc, sort_keys=True, indent=2, default=_json_default)


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    raise TypeError(f"cannot serialize {type(v).__name__}")
