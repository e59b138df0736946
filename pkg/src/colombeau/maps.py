"""Closed-form diffeomorphisms between chart domains."""

from __future__ import annotations

import numpy as np
import sympy as sp

from . import boxes
from .expr import coords, eval_derivative, expr_jet, parse, to_text
from .jets import Jet


class SingularJacobianError(ValueError):
    """The map's Jacobian is not invertible somewhere on its domain."""


class Diffeomorphism:
    """``mu: source -> target`` with closed-form forward and inverse maps.

    Both are expressions in the chart coordinates (``x``, ``y``, ...).
    """

    def __init__(self, forward, inverse, source, target, name: str = "mu"):
        self.source = boxes.as_box(source)
        self.target = boxes.as_box(target)
        self.n = len(self.source)
        self.vars = coords(self.n)
        names = [str(v) for v in self.vars]
        self.forward_exprs = tuple(parse(e, names) if isinstance(e, str) else sp.sympify(e) for e in forward)
        self.inverse_exprs = tuple(parse(e, names) if isinstance(e, str) else sp.sympify(e) for e in inverse)
        self.name = name
        jac = sp.Matrix([[sp.diff(f, v) for v in self.vars] for f in self.forward_exprs])
        self.jacobian_expr = jac
        self.det_expr = sp.simplify(jac.det())

    @classmethod
    def translation(cls, shift, source, name="translation"):
        n = len(shift)
        xs = coords(n)
        fwd = [xs[i] + shift[i] for i in range(n)]
        inv = [xs[i] - shift[i] for i in range(n)]
        target = [(lo + s, hi + s) for (lo, hi), s in zip(source, shift)]
        return cls(fwd, inv, source, target, name)

    @classmethod
    def linear(cls, matrix, shift, source, name="affine"):
        a = sp.Matrix(matrix)
        if a.det() == 0:
            raise SingularJacobianError("linear map has zero determinant")
        n = a.shape[0]
        xs = sp.Matrix(coords(n))
        b = sp.Matrix(shift)
        fwd = list(a * xs + b)
        inv = list(a.inv() * (xs - b))
        corners = boxes.grid(boxes.as_box(source), 2)
        img = (np.array(a.tolist(), dtype=float) @ corners.T).T + np.array(shift, dtype=float)
        target = [(img[:, i].min(), img[:, i].max()) for i in range(n)]
        return cls(fwd, inv, source, target, name)

    def inverse(self) -> "Diffeomorphism":
        return Diffeomorphism(self.inverse_exprs, self.forward_exprs, self.target, self.source, f"{self.name}^-1")

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(points)
        zero = (0,) * self.n
        return np.stack([eval_derivative(f, self.vars, zero, pts) for f in self.forward_exprs], axis=-1)

    def apply_inverse(self, points) -> np.ndarray:
        pts = np.atleast_2d(points)
        zero = (0,) * self.n
        return np.stack([eval_derivative(f, self.vars, zero, pts) for f in self.inverse_exprs], axis=-1)

    def jet(self, points, order: int) -> Jet:
        return expr_jet(np.array(self.forward_exprs, dtype=object), self.vars, points, order)

    def det(self, points) -> np.ndarray:
        return eval_derivative(self.det_expr, self.vars, (0,) * self.n, points)

    def check_invertible(self, samples: int = 9) -> None:
        pts = boxes.grid(self.source, samples)
        d = self.det(pts)
        bad = np.argmin(np.abs(d))
        if abs(d[bad]) < 1e-12:
            raise SingularJacobianError(f"Jacobian of {self.name} is singular near {pts[bad].tolist()}")

    def to_record(self) -> dict:
        return {
            "name": self.name,
            "forward": [to_text(e) for e in self.forward_exprs],
            "inverse": [to_text(e) for e in self.inverse_exprs],
            "source": [list(s) for s in self.source],
            "target": [list(t) for t in self.target],
        }

    @classmethod
    def from_record(cls, rec) -> "Diffeomorphism":
        return cls(rec["forward"], rec["inverse"], rec["source"], rec["target"], rec["name"])

    def __repr__(self):
        return f"Diffeomorphism({self.name}: {[to_text(e) for e in self.forward_exprs]})"
