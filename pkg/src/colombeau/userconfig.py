"""Scenarios written by hand in the line-oriented config format.

Example::

    [scenario]
    name = products
    domain = -2, 2
    q = 4
    r0 = 1.0

    [distributions]
    d = delta(0)
    h = heaviside(0)

    [fields]
    X = 1 + x/2

    [smooth]
    f = sin(x)

    [objects]
    R = embed(h) * embed(d) - 0.5 * embed(d)
    L = liehat(X, embed(d)) - lietilde(X, embed(d))

    [test: half-delta]
    kind = association
    object = embed(h) * embed(d)
    other = 0.5 * delta(0)
    expect = pass

Test kinds: ``moderateness``, ``negligibility``, ``noderiv`` (derivative-free
negligibility, preceded by a moderateness sweep) and ``association``.  Keys:
``object``, ``compact``, ``m``, ``j``, ``grid = kmin, kmax``, ``expect``
(``pass``, ``fail`` or an exact verdict such as ``moderate(2)``), ``other``
(an object expression or a distribution) for association.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass

from . import distributions as D
from . import genfun as F
from . import geometry as G
from . import smoothing as S
from .asymptotics import (EpsGrid, Seminorm, association_test, default_witnesses, moderateness_test,
                          negligibility_noderiv, negligibility_test)
from .config import ConfigError, ConfigFile, Entry, Section, parse_config
from .expr import ExpressionError, parse
from .scenarios import ASSOC_GRID, MOD_GRID, NEG_GRID, Check

KINDS = ("moderateness", "negligibility", "noderiv", "association")


@dataclass
class UserScenario:
    name: str
    summary: str
    q: int
    domain: tuple
    check_list: list

    def checks(self) -> list[Check]:
        return self.check_list


def load(path: str) -> UserScenario:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return from_text(text, path)


def from_text(text: str, source: str = "<config>") -> UserScenario:
    return _Builder(parse_config(text, source)).build()


def _floats(entry: Entry, src: str, count: int | None = None) -> list[float]:
    try:
        vals = [float(v) for v in entry.value.split(",")]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {entry.value!r}", entry.line, entry.column, src) from None
    if count is not None and len(vals) != count:
        raise ConfigError(f"expected {count} numbers, got {len(vals)}", entry.line, entry.column, src)
    return vals


def _int(entry: Entry, src: str, low: int = 0) -> int:
    try:
        v = int(entry.value)
    except ValueError:
        raise ConfigError(f"expected an integer, got {entry.value!r}", entry.line, entry.column, src) from None
    if v < low:
        raise ConfigError(f"expected an integer >= {low}, got {v}", entry.line, entry.column, src)
    return v


class _Builder:
    def __init__(self, cfg: ConfigFile):
        self.cfg = cfg
        self.src = cfg.source

    def err(self, msg, entry: Entry, offset: int = 0):
        return ConfigError(msg, entry.line, entry.column + offset, self.src)

    def build(self) -> UserScenario:
        head = self.cfg.section("scenario")
        if head is None:
            raise ConfigError("missing [scenario] section", 1, 1, self.src)
        known = {"scenario", "distributions", "fields", "smooth", "objects"}
        for sec in self.cfg.sections:
            if sec.name not in known and not sec.name.startswith("test:"):
                raise ConfigError(f"unknown section [{sec.name}]", sec.line, 1, self.src)
        self.name = head.require("name", self.src).value
        dom = head.entries.get("domain")
        lo, hi = _floats(dom, self.src, 2) if dom else (-2.0, 2.0)
        if not lo < hi:
            raise self.err("domain must be an interval lo, hi with lo < hi", dom)
        self.domain = (lo, hi)
        self.q = _int(head.entries["q"], self.src) if "q" in head.entries else 4
        r0 = _floats(head.entries["r0"], self.src, 1)[0] if "r0" in head.entries else 1.0
        if not 0 < r0 <= 1:
            raise self.err("r0 must lie in (0, 1]", head.entries["r0"])
        self.manifold = G.box_manifold([self.domain])
        self.line = G.line(self.manifold)
        self.tangent = G.tangent(self.manifold)
        self.net = S.convolution_net(self.q, [self.domain], support_radius=r0)
        self.psi = S.convolution_net(self.q, [self.domain], support_radius=0.6 * r0) - self.net
        self.family = {self.line.name: self.net, self.tangent.name: self.net}
        self.direction = {self.line.name: self.psi, self.tangent.name: self.psi}
        self.dists = self._table("distributions", self._distribution)
        self.fields = self._table("fields", lambda e: G.vector_field(self.manifold, [self._expr(e)]))
        self.smooth = self._table("smooth", lambda e: G.SmoothSection(self.line, {"main": self._expr(e)}))
        self.objects = {}
        sec = self.cfg.section("objects")
        if sec is not None:
            for key, entry in sec.entries.items():
                self._check_fresh(key, entry)
                self.objects[key] = self.object(entry)
        checks = []
        for sec in self.cfg.prefixed("test:"):
            checks.extend(self._test(sec))
        if not checks:
            raise ConfigError("no [test: ...] sections", head.line, 1, self.src)
        return UserScenario(self.name, head.get("summary", ""), self.q, self.domain, checks)

    def _check_fresh(self, key, entry):
        for table in ("dists", "fields", "smooth"):
            if key in getattr(self, table, {}):
                raise self.err(f"name {key!r} is already defined", entry)

    def _table(self, name, make):
        out = {}
        sec = self.cfg.section(name)
        if sec is None:
            return out
        for key, entry in sec.entries.items():
            if not key.isidentifier():
                raise ConfigError(f"invalid name {key!r}", entry.line, 1, self.src)
            self._check_fresh(key, entry)
            out[key] = make(entry)
        return out

    def _expr(self, entry: Entry):
        try:
            return parse(entry.value, ("x",))
        except ExpressionError as exc:
            raise self.err(str(exc), entry, (exc.column or 1) - 1) from None

    def _distribution(self, entry: Entry):
        try:
            return D.parse_spec(entry.value, 1, (self.domain,))
        except (ValueError, ExpressionError) as exc:
            raise self.err(str(exc), entry) from None

    # object expressions

    def object(self, entry: Entry) -> F.GenSection:
        try:
            tree = ast.parse(entry.value, mode="eval")
        except SyntaxError as exc:
            raise self.err(f"cannot parse object expression: {exc.msg}", entry, (exc.offset or 1) - 1) from None
        out = self._node(tree.body, entry)
        if not isinstance(out, F.GenSection):
            raise self.err("expression does not denote a generalized section", entry)
        return out

    def _node(self, node, entry):
        at = getattr(node, "col_offset", 0)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
            v = self._node(node.operand, entry)
            return -v if isinstance(v, float) else F.Scale(-1.0, v)
        if isinstance(node, ast.Name):
            if node.id in self.objects:
                return self.objects[node.id]
            raise self.err(f"unknown object {node.id!r}", entry, at)
        if isinstance(node, ast.BinOp):
            a, b = self._node(node.left, entry), self._node(node.right, entry)
            try:
                return self._binop(node.op, a, b)
            except (F.GenFunError, TypeError) as exc:
                raise self.err(str(exc), entry, at) from None
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
            return self._call(node, entry)
        raise self.err("unsupported syntax in object expression", entry, at)

    def _binop(self, op, a, b):
        if isinstance(op, ast.Add) and not isinstance(a, float) and not isinstance(b, float):
            return a + b
        if isinstance(op, ast.Sub) and not isinstance(a, float) and not isinstance(b, float):
            return a - b
        if isinstance(op, ast.Mult):
            if isinstance(a, float) and isinstance(b, float):
                return a * b
            if isinstance(a, float):
                return F.Scale(a, b)
            if isinstance(b, float):
                return F.Scale(b, a)
            return a * b
        if isinstance(op, ast.Pow) and isinstance(b, float) and b.is_integer() and b >= 1 and not isinstance(a, float):
            out = a
            for _ in range(int(b) - 1):
                out = out * a
            return out
        raise TypeError("unsupported operator or operand types")

    def _ident(self, arg, table, what, entry):
        if not isinstance(arg, ast.Name) or arg.id not in table:
            name = arg.id if isinstance(arg, ast.Name) else ast.unparse(arg)
            raise self.err(f"unknown {what} {name!r}", entry, getattr(arg, "col_offset", 0))
        return table[arg.id]

    def _call(self, node, entry):
        fn, args = node.func.id, node.args
        at = node.col_offset

        def need(k):
            if len(args) != k:
                raise self.err(f"{fn}() takes {k} argument(s), got {len(args)}", entry, at)

        if fn == "embed":
            need(1)
            return F.embed(D.DistributionalSection.scalar(self.line, self._ident(args[0], self.dists, "distribution", entry)))
        if fn == "sigma":
            need(1)
            return F.sigma(self._ident(args[0], self.smooth, "smooth function", entry))
        if fn in ("liehat", "lietilde"):
            need(2)
            x = self._ident(args[0], self.fields, "vector field", entry)
            a = self._node(args[1], entry)
            if isinstance(a, float):
                raise self.err(f"{fn}() needs a generalized section", entry, args[1].col_offset)
            return F.lie_hat(x, a) if fn == "liehat" else F.lie_tilde(F.sigma(x), a)
        raise self.err(f"unknown function {fn!r}", entry, at)

    # tests

    def _test(self, sec: Section) -> list[Check]:
        label = sec.name[len("test:"):].strip() or f"test@{sec.line}"
        kind_e = sec.require("kind", self.src)
        kind = kind_e.value
        if kind not in KINDS:
            raise self.err(f"unknown test kind {kind!r}; expected one of {', '.join(KINDS)}", kind_e)
        r = self.object(sec.require("object", self.src))
        comp_e = sec.entries.get("compact")
        compact = ((-1.0, 1.0),)
        if comp_e is not None:
            a, b = _floats(comp_e, self.src, 2)
            if not (self.domain[0] < a < b < self.domain[1]):
                raise self.err("compact must be an interval strictly inside the domain", comp_e)
            compact = ((a, b),)
        m = _int(sec.entries["m"], self.src) if "m" in sec.entries else (3 if kind in ("negligibility", "noderiv") else 0)
        if kind in ("negligibility", "noderiv") and m > self.q:
            e = sec.entries.get("m") or sec.entries["kind"]
            raise self.err(f"order m={m} needs a mollifier with q >= {m} (scenario has q={self.q})", e)
        j = _int(sec.entries["j"], self.src) if "j" in sec.entries else 0
        default = {"moderateness": MOD_GRID, "association": ASSOC_GRID}.get(kind, NEG_GRID)
        grid = default
        if "grid" in sec.entries:
            k_min, k_max = (int(v) for v in _floats(sec.entries["grid"], self.src, 2))
            grid = EpsGrid(k_min, k_max)
        expect, verdict = self._expect(sec.entries.get("expect"))
        fam, dirs = self.family, [self.direction] * j

        if kind == "moderateness":
            sem = Seminorm(compact, m)

            def run(ov, par):
                return moderateness_test(r, fam, dirs, sem, ov.apply(grid), parallel=par)
        elif kind == "negligibility":
            order = _int(sec.entries["order"], self.src) if "order" in sec.entries else 0
            sem = Seminorm(compact, order)

            def run(ov, par):
                return negligibility_test(r, fam, dirs, sem, m, ov.apply(grid), parallel=par)
        elif kind == "noderiv":
            def run(ov, par):
                cert = moderateness_test(r, fam, [], Seminorm(compact, 0), ov.apply(MOD_GRID), parallel=par)
                return negligibility_noderiv(r, fam, [cert], compact, m, ov.apply(grid), parallel=par)
        else:
            other = self._other(sec.require("other", self.src))

            def run(ov, par):
                return association_test(r, other, default_witnesses(), fam, ov.apply(grid), parallel=par)
        if verdict is None and expect:
            verdict = {"negligibility": f"negligible({m})", "noderiv": f"negligible({m})",
                       "association": "associated"}.get(kind)
        return [Check(label, run, expect, verdict)]

    def _expect(self, entry: Entry | None):
        if entry is None or entry.value == "pass":
            return True, None
        if entry.value == "fail":
            return False, "failed"
        v = entry.value
        if v.startswith(("moderate(", "negligible(")) or v == "associated":
            return True, v
        raise self.err(f"expect must be pass, fail or a verdict, got {v!r}", entry)

    def _other(self, entry: Entry):
        try:
            return self.object(entry)
        except ConfigError:
            pass
        try:
            return D.DistributionalSection.scalar(self.line, D.parse_spec(entry.value, 1, (self.domain,)))
        except (ValueError, ExpressionError):
            raise self.err(f"{entry.value!r} is neither an object expression nor a distribution", entry) from None
