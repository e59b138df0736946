"""Mollifier profiles with vanishing moments and the kernel nets built from them."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from math import gamma, pi

import numpy as np
import sympy as sp
from scipy.integrate import quad

from .expr import symbols
from .jets import multi_indices

QUAD_TOL = 1e-13


class ConstructionError(ValueError):
    """The moment system for a requested mollifier is singular."""


class DerivativeOrderError(ValueError):
    """A kernel derivative beyond the profile's declared order was requested."""


def _bump(s):
    """exp(-1/(1-s)) for s = |z|^2 < 1, else 0; vectorized and overflow-safe."""
    s = np.asarray(s, dtype=float)
    inside = s < 1.0
    out = np.zeros_like(s)
    out[inside] = np.exp(-1.0 / (1.0 - s[inside]))
    return out


@dataclass(frozen=True)
class BaseProfile:
    """A nonnegative bump on the unit ball; ``radial`` bumps depend on |z| only."""

    name: str
    radial: bool
    numeric: object  # vectorized callable of z (shape (npts, n))
    symbolic: object  # callable building the sympy expression from coordinate symbols


def _radial_bump_sym(zs):
    s = sum(z**2 for z in zs)
    return sp.exp(-1 / (1 - s))


def _skew_bump_sym(zs):
    (z,) = zs
    return sp.exp(-1 / (1 - z**2)) * (1 + z / 2)


BASE_PROFILES = {
    "bump": BaseProfile("bump", True, lambda z: _bump(np.sum(z**2, axis=-1)), _radial_bump_sym),
    "skew-bump": BaseProfile(
        "skew-bump", False, lambda z: _bump(z[..., 0] ** 2) * (1 + z[..., 0] / 2), _skew_bump_sym
    ),
}


def sphere_area(n: int) -> float:
    return 2 * pi ** (n / 2) / gamma(n / 2)


def sphere_monomial(gamma_: tuple[int, ...]) -> float:
    """Integral of theta^gamma over the unit sphere in R^n (exact)."""
    if any(g % 2 for g in gamma_):
        return 0.0
    n = len(gamma_)
    num = 2.0
    for g in gamma_:
        num *= gamma((g + 1) / 2)
    return num / gamma((sum(gamma_) + n) / 2)


def _quad(fn, a, b):
    val, err = quad(fn, a, b, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=400)
    return val


@dataclass
class Mollifier:
    """Profile ``rho(z) = P(z) * base(z / r)`` with unit mass and moments vanishing up to ``q``.

    For radial bases ``P`` is a polynomial in ``|z|^2`` with coefficients ``coefficients[k]``
    of ``|z|^(2k)``; otherwise (one dimension) ``P`` is an ordinary polynomial in ``z``.
    """

    n: int
    q: int
    base: str = "bump"
    support_radius: float = 1.0
    coefficients: tuple[float, ...] = ()
    max_order: int = 8
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def profile(self) -> BaseProfile:
        return BASE_PROFILES[self.base]

    @property
    def radial(self) -> bool:
        return self.profile.radial

    @cached_property
    def variables(self):
        return symbols([f"z{i}" for i in range(self.n)])

    @cached_property
    def expr(self) -> sp.Expr:
        zs = self.variables
        r = sp.nsimplify(self.support_radius)
        base = self.profile.symbolic([z / r for z in zs])
        if self.radial:
            s = sum(z**2 for z in zs)
            poly = sum(sp.Float(c, 17) * s**k for k, c in enumerate(self.coefficients))
        else:
            (z,) = zs
            poly = sum(sp.Float(c, 17) * z**k for k, c in enumerate(self.coefficients))
        return poly * base

    @property
    def q_effective(self) -> int:
        if self.radial:
            return self.q if self.q % 2 else self.q + 1
        return self.q

    def _poly(self, z: np.ndarray) -> np.ndarray:
        if self.radial:
            s = np.sum(z**2, axis=-1)
            return sum(c * s**k for k, c in enumerate(self.coefficients))
        return sum(c * z[..., 0] ** k for k, c in enumerate(self.coefficients))

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.ndim == 1 and self.n == 1:
            z = z[:, None]
        return self._poly(z) * self.profile.numeric(z / self.support_radius)

    def derivative(self, alpha, z: np.ndarray) -> np.ndarray:
        """Closed-form partial derivative ``d^alpha rho`` at points ``z`` (shape (npts, n))."""
        alpha = tuple(int(a) for a in alpha)
        if sum(alpha) > self.max_order:
            raise DerivativeOrderError(
                f"derivative order {sum(alpha)} exceeds the profile's order {self.max_order}"
            )
        z = np.atleast_2d(np.asarray(z, dtype=float))
        if sum(alpha) == 0:
            return self(z)
        fn = self._compiled(alpha)
        s = np.sum(z**2, axis=-1) / self.support_radius**2
        inside = (1.0 - s) > 1e-3
        out = np.zeros(len(z))
        if np.any(inside):
            zi = z[inside]
            with np.errstate(all="ignore"):
                out[inside] = fn(*[zi[:, i] for i in range(self.n)])
        return out

    def _compiled(self, alpha):
        if alpha not in self._cache:
            d = self.expr
            for v, a in zip(self.variables, alpha):
                if a:
                    d = sp.diff(d, v, a)
            self._cache[alpha] = sp.lambdify(self.variables, d, "numpy", cse=True)
        return self._cache[alpha]

    def moment(self, gamma_) -> float:
        """Moment ``int z^gamma rho(z) dz`` by adaptive quadrature."""
        gamma_ = tuple(gamma_)
        r = self.support_radius
        if self.radial:
            ang = sphere_monomial(gamma_)
            if ang == 0.0:
                return 0.0
            k = sum(gamma_) + self.n - 1
            rad = _quad(lambda t: t**k * self._radial_value(t), 0.0, r)
            return ang * rad
        (g,) = gamma_
        return _quad(lambda t: t**g * float(self(np.array([[t]]))[0]), -r, r)

    def _radial_value(self, t: float) -> float:
        z = np.zeros((1, self.n))
        z[0, 0] = t
        return float(self(z)[0])

    def integral(self) -> float:
        return self.moment((0,) * self.n)

    def to_record(self) -> dict:
        return {
            "n": self.n,
            "q": self.q,
            "base": self.base,
            "support_radius": self.support_radius,
            "coefficients": [float(c) for c in self.coefficients],
            "max_order": self.max_order,
        }

    def to_text(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)

    @classmethod
    def from_record(cls, rec: dict) -> "Mollifier":
        return cls(
            n=int(rec["n"]),
            q=int(rec["q"]),
            base=rec["base"],
            support_radius=float(rec["support_radius"]),
            coefficients=tuple(float(c) for c in rec["coefficients"]),
            max_order=int(rec.get("max_order", 8)),
        )

    @classmethod
    def from_text(cls, text: str) -> "Mollifier":
        return cls.from_record(json.loads(text))


def _solve_moments(mat: np.ndarray, rhs: np.ndarray, orders: list[int]) -> np.ndarray:
    """Solve the moment system, naming the first moment that makes it singular."""
    for k in range(1, len(rhs) + 1):
        block = mat[:k, :k]
        sv = np.linalg.svd(block, compute_uv=False)
        if sv[-1] <= 1e-13 * sv[0]:
            raise ConstructionError(
                f"moment system is singular at the moment of order {orders[k - 1]}"
            )
    return np.linalg.solve(mat, rhs)


@lru_cache(maxsize=64)
def make_mollifier(n: int, q: int, base: str = "bump", support_radius: float = 1.0, max_order: int = 8) -> Mollifier:
    """Build a profile whose moments of orders 1..q vanish and whose integral is 1."""
    if n < 1 or q < 0:
        raise ValueError("need n >= 1 and q >= 0")
    if base not in BASE_PROFILES:
        raise ValueError(f"unknown base profile {base!r}; known: {sorted(BASE_PROFILES)}")
    prof = BASE_PROFILES[base]
    r = float(support_radius)
    unit = np.zeros((1, n))

    if prof.radial:
        size = q // 2 + 1

        def b(t):
            unit[0, 0] = t / r
            return float(prof.numeric(unit)[0])

        m = np.array(
            [[_quad(lambda t, p=2 * (j + k) + n - 1: t**p * b(t), 0.0, r) for k in range(size)] for j in range(size)]
        )
        rhs = np.zeros(size)
        rhs[0] = 1.0 / sphere_area(n)
        coeffs = _solve_moments(m, rhs, [2 * j for j in range(size)])
    else:
        if n != 1:
            raise ConstructionError("non-radial base profiles are only supported in one dimension")

        def b(t):
            unit[0, 0] = t / r
            return float(prof.numeric(unit)[0])

        size = q + 1
        m = np.array([[_quad(lambda t, p=j + k: t**p * b(t), -r, r) for k in range(size)] for j in range(size)])
        rhs = np.zeros(size)
        rhs[0] = 1.0
        coeffs = _solve_moments(m, rhs, list(range(size)))

    moll = Mollifier(n, q, base, r, tuple(float(c) for c in coeffs), max_order)
    _verify(moll)
    return moll


def _verify(moll: Mollifier) -> None:
    mass = moll.integral()
    if abs(mass - 1.0) > 1e-10:
        raise ConstructionError(f"profile integral is {mass!r}, not 1")
    for gamma_ in multi_indices(moll.n, moll.q)[1:]:
        mom = moll.moment(gamma_)
        if abs(mom) > 1e-8:
            raise ConstructionError(f"moment {gamma_} is {mom:.3e}; the system did not converge")


def gauss_legendre(npts: int, a: float = -1.0, b: float = 1.0):
    x, w = np.polynomial.legendre.leggauss(npts)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


@lru_cache(maxsize=32)
def _rule(n: int, r: float, level: int):
    """Fixed quadrature over the ball of radius r: nodes (N, n), weights (N,)."""
    if n == 1:
        x, w = gauss_legendre(160 if level == 0 else 128, -r, r)
        return x[:, None], w
    if n == 2:
        nr, nt = (96, 64) if level == 0 else (80, 56)
        t, wt = gauss_legendre(nr, 0.0, r)
        th = 2 * pi * np.arange(nt) / nt
        tt, hh = np.meshgrid(t, th, indexing="ij")
        nodes = np.stack([(tt * np.cos(hh)).ravel(), (tt * np.sin(hh)).ravel()], axis=-1)
        weights = (wt[:, None] * t[:, None] * np.full(nt, 2 * pi / nt)[None, :]).ravel()
        return nodes, weights
    m = 40 if level == 0 else 32
    x, w = gauss_legendre(m, -r, r)
    mesh = np.meshgrid(*([x] * n), indexing="ij")
    wmesh = np.meshgrid(*([w] * n), indexing="ij")
    nodes = np.stack([g.ravel() for g in mesh], axis=-1)
    weights = np.prod(np.stack([g.ravel() for g in wmesh], axis=-1), axis=-1)
    keep = np.sum(nodes**2, axis=-1) < r * r
    return nodes[keep], weights[keep]


class KernelNet:
    """The kernel net ``k_eps(x, y) = eps^-n rho((y - x) / eps)``."""

    def __init__(self, mollifier: Mollifier):
        self.mollifier = mollifier

    @property
    def n(self) -> int:
        return self.mollifier.n

    @property
    def q(self) -> int:
        return self.mollifier.q

    def radius(self, eps: float) -> float:
        return eps * self.mollifier.support_radius

    def rule(self, level: int = 0):
        """Quadrature nodes and weights in the rescaled variable z = (y - x) / eps."""
        return _rule(self.n, self.mollifier.support_radius, level)

    def eval(self, eps, x, y, alpha=None, beta=None) -> np.ndarray:
        return eval_kernel(self, eps, x, y, alpha, beta)

    def __repr__(self):
        m = self.mollifier
        return f"KernelNet(n={m.n}, q={m.q}, base={m.base!r}, r={m.support_radius:g})"


def eval_kernel(net: KernelNet, eps: float, x, y, alpha=None, beta=None) -> np.ndarray:
    """``d_x^alpha d_y^beta k_eps(x, y)`` in closed form; x and y broadcast over points."""
    n = net.n
    alpha = tuple(alpha) if alpha is not None else (0,) * n
    beta = tuple(beta) if beta is not None else (0,) * n
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if x.shape[-1] != n or y.shape[-1] != n:
        raise ValueError(f"points must have {n} coordinates")
    z = (y - x) / eps
    total = tuple(a + b for a, b in zip(alpha, beta))
    sign = -1.0 if sum(alpha) % 2 else 1.0
    scale = eps ** (-n - sum(alpha) - sum(beta))
    return sign * scale * net.mollifier.derivative(total, z)
