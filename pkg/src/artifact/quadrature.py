"""Composite Gauss-Legendre rules on piecewise intervals."""

from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=32)
def _gl(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def panel_rule(breaks, order: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of a Gauss-Legendre rule on every panel [breaks[i], breaks[i+1]]."""
    b = np.asarray(breaks, dtype=float)
    a, c = b[:-1], b[1:]
    x, w = _gl(order)
    half = 0.5 * (c - a)
    mid = 0.5 * (c + a)
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def subdivide(breaks, pieces_per_unit: float, min_pieces: int = 1) -> np.ndarray:
    """Refine every interval of ``breaks`` into equal panels of length <= 1/pieces_per_unit."""
    b = np.asarray(breaks, dtype=float)
    out = [b[:1]]
    for a, c in zip(b[:-1], b[1:]):
        n = max(min_pieces, int(np.ceil((c - a) * pieces_per_unit)))
        out.append(np.linspace(a, c, n + 1)[1:])
    return np.concatenate(out)


def geometric_breaks(a: float, b: float, ratio: float = 1.3) -> np.ndarray:
    """Breakpoints from a to b whose panel lengths grow geometrically (a > 0)."""
    if b <= a:
        return np.array([a, b])
    pts = [a]
    h = a * (ratio - 1.0) if a > 0 else (b - a) / 64
    while pts[-1] + h < b:
        pts.append(pts[-1] + h)
        h *= ratio
    if b - pts[-1] < 0.3 * h / ratio and len(pts) > 1:
        pts[-1] = b
    else:
        pts.append(b)
    return np.array(pts)
