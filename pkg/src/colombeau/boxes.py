"""Axis-aligned boxes used as chart domains, compacts and support bounds."""

from __future__ import annotations

import numpy as np

Box = tuple[tuple[float, float], ...]


def as_box(spec) -> Box:
    box = tuple((float(lo), float(hi)) for lo, hi in spec)
    for lo, hi in box:
        if not lo <= hi:
            raise ValueError(f"empty box side ({lo}, {hi})")
    return box


def dim(box: Box) -> int:
    return len(box)


def contains_points(box: Box, points: np.ndarray, margin: float = 0.0) -> np.ndarray:
    pts = np.atleast_2d(points)
    ok = np.ones(len(pts), dtype=bool)
    for i, (lo, hi) in enumerate(box):
        ok &= (pts[:, i] >= lo + margin) & (pts[:, i] <= hi - margin)
    return ok


def inner_margin(points: np.ndarray, box: Box) -> float:
    """Smallest distance from the points to the boundary of ``box`` (negative if outside)."""
    pts = np.atleast_2d(points)
    if pts.size == 0:
        return np.inf
    best = np.inf
    for i, (lo, hi) in enumerate(box):
        best = min(best, float(np.min(pts[:, i] - lo)), float(np.min(hi - pts[:, i])))
    return best


def box_margin(inner: Box, outer: Box) -> float:
    """Distance from ``inner`` to the boundary of ``outer`` (sup-norm, per axis)."""
    return min(min(ilo - olo, ohi - ihi) for (ilo, ihi), (olo, ohi) in zip(inner, outer))


def intersect(a: Box, b: Box) -> Box | None:
    out = tuple((max(al, bl), min(ah, bh)) for (al, ah), (bl, bh) in zip(a, b))
    if any(lo > hi for lo, hi in out):
        return None
    return out


def subset(inner: Box, outer: Box) -> bool:
    return all(olo <= ilo and ihi <= ohi for (ilo, ihi), (olo, ohi) in zip(inner, outer))


def grow(box: Box, r: float) -> Box:
    return tuple((lo - r, hi + r) for lo, hi in box)


def around(points: np.ndarray, r: float) -> Box:
    pts = np.atleast_2d(points)
    return tuple((float(pts[:, i].min()) - r, float(pts[:, i].max()) + r) for i in range(pts.shape[1]))


def grid(box: Box, n: int) -> np.ndarray:
    """Tensor grid with ``n`` points per axis, shape ``(n**d, d)``."""
    axes = [np.linspace(lo, hi, n) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def to_text(box: Box) -> str:
    return " x ".join(f"[{lo:g}, {hi:g}]" for lo, hi in box)
