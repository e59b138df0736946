"""Tensor-slot calculus on jets: Lie derivatives, covariant derivatives, contractions."""

from __future__ import annotations

import numpy as np

from .geometry import DOWN, EXT, EXTDUAL, UP
from .jets import Jet, jet_product, jet_scalar_mul

_LETTERS = "abcdefghijklmnopqrstuvw"


def _slot_op(rank: int, axis: int, transpose: bool):
    """Op for jet_product: (matrix field) x (tensor field) acting on one slot."""
    t_idx = _LETTERS[:rank]
    out_idx = t_idx[:axis] + "z" + t_idx[axis + 1 :]
    m_idx = (t_idx[axis] + "z") if transpose else ("z" + t_idx[axis])
    spec = f"...{m_idx},...{t_idx}->...{out_idx}"
    return lambda m, t: np.einsum(spec, m, t)


def slot_apply(mat: Jet, t: Jet, axis: int, transpose: bool = False) -> Jet:
    """``out[.., i, ..] = sum_k M[i, k] T[.., k, ..]`` (or ``M[k, i]`` if transpose)."""
    return jet_product(mat, t, _slot_op(len(t.fiber), axis, transpose))


def gradient_matrix(x: Jet) -> Jet:
    """From a vector-field jet (fiber (n,)) build D[a, k] = d_k X^a, one order lower."""
    parts = [x.partial(k) for k in range(x.dim)]
    return Jet(x.dim, x.order - 1, np.stack([p.data for p in parts], axis=-1))


def directional(x: Jet, t: Jet) -> Jet:
    """``X^k d_k T``; needs T one order higher than the result."""
    out = None
    for k in range(x.dim):
        xk = Jet(x.dim, x.order, x.data[..., k])
        term = jet_scalar_mul(xk, t.partial(k))
        out = term if out is None else out + term
    return out


def lie_jet(x: Jet, t: Jet, kinds) -> Jet:
    """Lie derivative of a tensor field; ``x`` and ``t`` at order k+1, result at order k."""
    out = directional(x, t)
    if any(k in (UP, DOWN) for k in kinds):
        d = gradient_matrix(x)
        for axis, kind in enumerate(kinds):
            if kind == UP:
                out = out - slot_apply(d, t, axis)
            elif kind == DOWN:
                out = out + slot_apply(d, t, axis, transpose=True)
    return out


def contract_direction(x: Jet, gamma: Jet) -> Jet:
    """``A[j, k] = X^i gamma[i, j, k]``."""
    return jet_product(x, gamma, lambda xv, g: np.einsum("...i,...ijk->...jk", xv, g))


def slot_action(a: Jet, t: Jet, kinds, acts) -> Jet | None:
    """Apply the matrix field A to every slot the connection acts on (dual slots with a minus sign)."""
    out = None
    for axis, kind in enumerate(kinds):
        if not acts(kind):
            continue
        if kind in (UP, EXT):
            term = slot_apply(a, t, axis, transpose=True)
        else:
            term = -slot_apply(a, t, axis)
        out = term if out is None else out + term
    return out


def connection_action(x: Jet, gamma: Jet, t: Jet, kinds, acts) -> Jet | None:
    """Zeroth-order part of a covariant derivative: ``X^i gamma[i, j, k]`` acting on slots."""
    return slot_action(contract_direction(x, gamma), t, kinds, acts)


def cov_jet(x: Jet, gamma: Jet | None, t: Jet, kinds, acts) -> Jet:
    """``nabla_X T``: X and gamma at order k, T at order k+1."""
    out = directional(x, t)
    if gamma is not None:
        extra = connection_action(x, gamma, t, kinds, acts)
        if extra is not None:
            out = out + extra
    return out


def contract_jet(t: Jet, i: int, j: int) -> Jet:
    rank = len(t.fiber)
    idx = list(_LETTERS[:rank])
    idx[j] = idx[i]
    out = "".join(c for k, c in enumerate(idx) if k not in (i, j))
    spec = f"...{''.join(idx)}->...{out}"
    return Jet(t.dim, t.order, np.einsum(spec, t.data))


def tm_acts(kind: str) -> bool:
    return kind in (UP, DOWN)


def ext_acts(kind: str) -> bool:
    return kind in (EXT, EXTDUAL)
