"""Closed-form expressions: a small text grammar and fast derivative evaluation.

Grammar: numbers, variables, ``+ - * / ^`` (``**`` also accepted), parentheses,
``exp sin cos tan tanh log sqrt``, constants ``pi`` and ``E``, comparisons and
the guard ``where(cond, a, b)``.  Conditions may be combined with ``&`` and ``|``.
"""

from __future__ import annotations

import ast
from functools import lru_cache

import numpy as np
import sympy as sp
from sympy.parsing.sympy_parser import convert_xor, parse_expr, standard_transformations

from .jets import Jet, count, multi_indices


class ExpressionError(ValueError):
    """Malformed expression text; carries a 1-based column when known."""

    def __init__(self, message: str, column: int | None = None):
        super().__init__(message if column is None else f"{message} (column {column})")
        self.column = column


def _where(cond, a, b):
    return sp.Piecewise((a, cond), (b, True))


_FUNCTIONS = {
    "exp": sp.exp,
    "sin": sp.sin,
    "cos": sp.cos,
    "tan": sp.tan,
    "tanh": sp.tanh,
    "log": sp.log,
    "sqrt": sp.sqrt,
    "pi": sp.pi,
    "E": sp.E,
    "where": _where,
}

_TRANSFORMS = standard_transformations + (convert_xor,)


def symbols(names) -> tuple[sp.Symbol, ...]:
    return tuple(sp.Symbol(n, real=True) for n in names)


def parse(text: str, variables=("x",)) -> sp.Expr:
    """Parse expression text over the given variable names."""
    if not isinstance(text, str):
        return sp.sympify(text)
    lead = len(text) - len(text.lstrip())
    text = text.strip()
    try:
        ast.parse(text.replace("^", "*"), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}", None if exc.offset is None else exc.offset + lead) from None
    names = {str(v): v for v in symbols(variables)} if variables else {}
    local = dict(_FUNCTIONS)
    local.update(names)
    try:
        out = parse_expr(text, local_dict=local, transformations=_TRANSFORMS)
    except Exception as exc:  # sympy raises a zoo of types here
        raise ExpressionError(f"cannot parse {text!r}: {exc}") from None
    unknown = {str(s) for s in out.free_symbols} - set(names)
    if unknown:
        bad = sorted(unknown)[0]
        raise ExpressionError(f"unknown name {bad!r} in {text!r}", text.find(bad) + 1 + lead)
    return out


def as_expr(e, dim: int) -> sp.Expr:
    """Expression text over the coordinates of R^dim, or an existing sympy object."""
    return parse(e, coord_names(dim)) if isinstance(e, str) else sp.sympify(e)


def to_text(expr) -> str:
    return sp.sstr(sp.sympify(expr), order="lex")


@lru_cache(maxsize=8192)
def _derivative(expr: sp.Expr, variables: tuple[sp.Symbol, ...], alpha: tuple[int, ...]) -> sp.Expr:
    """Derivatives built one order at a time so lower orders are shared."""
    if not any(alpha):
        return expr
    i = max(k for k, a in enumerate(alpha) if a)
    lower = tuple(a - (k == i) for k, a in enumerate(alpha))
    return sp.diff(_derivative(expr, variables, lower), variables[i])


@lru_cache(maxsize=8192)
def _compiled(expr: sp.Expr, variables: tuple[sp.Symbol, ...], alpha: tuple[int, ...]):
    d = _derivative(expr, variables, alpha)
    if d == 0:
        return None
    return sp.lambdify(variables, d, "numpy")


def derivative(expr, variables, alpha) -> sp.Expr:
    d = sp.sympify(expr)
    for v, a in zip(variables, alpha):
        if a:
            d = sp.diff(d, v, a)
    return d


def eval_derivative(expr, variables, alpha, points: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(points)
    fn = _compiled(sp.sympify(expr), tuple(variables), tuple(alpha))
    if fn is None:
        return np.zeros(len(pts))
    with np.errstate(all="ignore"):
        val = fn(*[pts[:, i] for i in range(pts.shape[1])])
    return np.broadcast_to(np.asarray(val, dtype=float), (len(pts),)).copy()


def expr_jet(exprs, variables, points: np.ndarray, order: int) -> Jet:
    """Jet of an array of expressions (any shape) at ``points``."""
    arr = np.empty(np.shape(exprs), dtype=object)
    if np.ndim(exprs):
        arr[...] = exprs
    else:
        while isinstance(exprs, np.ndarray):
            exprs = exprs[()]
        arr[()] = sp.sympify(exprs)
    pts = np.atleast_2d(points)
    n = len(variables)
    data = np.zeros((count(n, order), len(pts)) + arr.shape)
    for ai, alpha in enumerate(multi_indices(n, order)):
        for idx in np.ndindex(arr.shape):
            data[(ai, slice(None)) + idx] = eval_derivative(arr[idx], variables, alpha, pts)
    return Jet(n, order, data)


class ScalarFunction:
    """A closed-form scalar function of the chart coordinates."""

    def __init__(self, expr, variables):
        self.variables = tuple(variables)
        self.expr = parse(expr, [str(v) for v in self.variables]) if isinstance(expr, str) else sp.sympify(expr)

    def jet(self, points, order: int) -> Jet:
        return expr_jet(self.expr, self.variables, points, order)

    def __call__(self, points) -> np.ndarray:
        return eval_derivative(self.expr, self.variables, (0,) * len(self.variables), points)

    def __repr__(self):
        return f"ScalarFunction({to_text(self.expr)})"


_COORD_NAMES = {1: ("x",), 2: ("x", "y"), 3: ("x", "y", "z")}


def coord_names(n: int) -> tuple[str, ...]:
    return _COORD_NAMES.get(n) or tuple(f"x{i}" for i in range(n))


def coords(n: int) -> tuple[sp.Symbol, ...]:
    """Chart coordinate symbols for dimension n."""
    return symbols(coord_names(n))
