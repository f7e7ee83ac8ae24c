"""Planar polygon state in edge-vector form, with shape diagnostics.

A polygon with d sides is stored as the d edge vectors (x_j, y_j) plus an
accumulated natural-log rescaling factor, so that the true edge j is
exp(log_scale) * (x_j, y_j).  Closed chains satisfy sum(x) = sum(y) = 0.
Keeping the stored components O(1) and pushing the shrinking scale into
``log_scale`` is what lets long subdivision runs avoid underflow.

All operations are pure; chains are immutable once constructed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "EdgeChain",
    "TriangleShape",
    "edges_from_vertices",
    "signed_area",
    "max_side",
    "log_max_side",
    "flatness_ratio",
    "angular_distance",
    "triangle_shape",
    "lift_to_d",
]


@dataclass(frozen=True)
class TriangleShape:
    """Apex (g, h) of a triangle rescaled so the longest side is (0,0)-(1,0).

    Vertices are relabeled so side lengths decrease as B1B2 >= B3B1 >= B2B3,
    which pins g to [1/2, 1]; a reflection is applied if needed so h >= 0.
    """

    g: float
    h: float


def _as_readonly(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class EdgeChain:
    """d edge vectors of a closed planar polygon plus a log scale factor."""

    x: np.ndarray
    y: np.ndarray
    log_scale: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", _as_readonly(self.x))
        object.__setattr__(self, "y", _as_readonly(self.y))
        if self.x.ndim != 1 or self.x.shape != self.y.shape:
            raise ValueError("x and y must be equal-length 1-d arrays")
        if self.d < 3:
            raise ValueError("a chain needs at least 3 edges")
        scale = max(np.abs(self.x).max(), np.abs(self.y).max())
        if scale == 0.0:
            raise ValueError("all edges are zero")
        tol = 1e-9 * scale
        if abs(self.x.sum()) > tol or abs(self.y.sum()) > tol:
            raise ValueError("edge vectors do not close up (component sums exceed tolerance)")

    @property
    def d(self) -> int:
        return self.x.shape[0]

    def vertices(self) -> np.ndarray:
        """(d, 2) vertex array of the stored (unscaled) polygon, first at origin."""
        vx = np.concatenate([[0.0], np.cumsum(self.x)[:-1]])
        vy = np.concatenate([[0.0], np.cumsum(self.y)[:-1]])
        return np.column_stack([vx, vy])

    def csv_row(self, step: int) -> list:
        """Row (step, x_1..x_d, y_1..y_d, log_scale) for chain CSV output."""
        return [step, *self.x.tolist(), *self.y.tolist(), self.log_scale]


def edges_from_vertices(vertices) -> EdgeChain:
    """Build the edge chain of a convex polygon given its vertices in order.

    Edge j is vertex_{j+1} - vertex_j (cyclically); log_scale starts at 0.
    The polygon must be strictly convex (either orientation); repeated or
    collinear vertices are rejected.
    """
    v = np.asarray(vertices, dtype=float)
    if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
        raise ValueError("need at least 3 planar vertices")
    e = np.roll(v, -1, axis=0) - v
    cross = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
    scale2 = (e**2).sum(axis=1).max()
    if scale2 == 0.0:
        raise ValueError("repeated vertices")
    tol = 1e-12 * scale2
    if np.any(np.abs(cross) <= tol) or not (np.all(cross > 0) or np.all(cross < 0)):
        raise ValueError("vertices are not in strictly convex position")
    return EdgeChain(x=e[:, 0], y=e[:, 1], log_scale=0.0)


def _pairwise_cross_sq_sum(x: np.ndarray, y: np.ndarray) -> float:
    """sum over i<j of (x_i y_j - x_j y_i)^2, computed term by term.

    Forming each 2x2 determinant before squaring keeps the result accurate
    for nearly parallel x and y, where the equivalent Lagrange form
    |x|^2|y|^2 - (x.y)^2 loses everything to cancellation.
    """
    c = np.outer(x, y)
    s = c - c.T
    return float((s * s).sum() / 2.0)


def signed_area(chain: EdgeChain) -> float:
    """Signed area of the polygon, scale-corrected by exp(2 log_scale).

    Twice the signed area equals the sum of the 2x2 determinants of edge
    pairs (i, j) with 1 <= i < j <= d-1; positive for counterclockwise
    convex chains.
    """
    x, y = chain.x[:-1], chain.y[:-1]
    c = np.outer(x, y)
    s = c - c.T
    twice = float(np.triu(s, 1).sum())
    return 0.5 * twice * math.exp(2.0 * chain.log_scale)


def stored_signed_area(chain: EdgeChain) -> float:
    """Signed area of the stored (unscaled) chain."""
    x, y = chain.x[:-1], chain.y[:-1]
    c = np.outer(x, y)
    s = c - c.T
    return 0.5 * float(np.triu(s, 1).sum())


def max_side(chain: EdgeChain) -> float:
    """Length of the longest side, scale-corrected.

    Underflows to 0.0 once log_scale drops below about -744; use
    :func:`log_max_side` for deeply shrunken chains.
    """
    return float(np.hypot(chain.x, chain.y).max()) * math.exp(chain.log_scale)


def stored_max_side(chain: EdgeChain) -> float:
    return float(np.hypot(chain.x, chain.y).max())


def log_max_side(chain: EdgeChain) -> float:
    """log of the true longest side length; exact bookkeeping for tiny polygons."""
    return math.log(stored_max_side(chain)) + chain.log_scale


def flatness_ratio(chain: EdgeChain) -> float:
    """|area| / (longest side)^2; dimensionless and independent of log_scale."""
    m = stored_max_side(chain)
    return abs(stored_signed_area(chain)) / (m * m)


def angular_distance(x, y) -> float:
    """Sine of the angle between the lines spanned by x and y, in [0, 1].

    Equals sqrt(1 - (x.y)^2 / (|x|^2 |y|^2)), evaluated through the pairwise
    cross terms so that nearly parallel inputs (distances down to ~1e-15)
    are resolved instead of being swamped by cancellation.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d vectors of equal length")
    nx = float(np.dot(x, x))
    ny = float(np.dot(y, y))
    if nx == 0.0 or ny == 0.0:
        raise ValueError("angular distance is undefined for the zero vector")
    val = math.sqrt(_pairwise_cross_sq_sum(x, y) / (nx * ny))
    return min(val, 1.0)


def lift_to_d(x) -> np.ndarray:
    """Append the negated component sum, producing a zero-sum vector."""
    x = np.asarray(x, dtype=float)
    return np.concatenate([x, [-x.sum()]])


_PERMS3 = ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0))


def triangle_shape(chain: EdgeChain) -> TriangleShape:
    """Shape coordinates (g, h) of a triangle chain (d = 3).

    The vertices are relabeled (stable in the original vertex order when
    side lengths tie) so that B1B2 >= B3B1 >= B2B3, then mapped by the
    similarity taking B1 to (0,0) and B2 to (1,0), reflecting if necessary
    so the apex height h is non-negative.  Then g in [1/2, 1] and
    h in [0, sqrt(3)/2], with h = 2 area / (longest side)^2.
    """
    if chain.d != 3:
        raise ValueError("triangle_shape needs d = 3")
    lengths = np.hypot(chain.x, chain.y)
    if np.any(lengths == 0.0):
        raise ValueError("zero-length edge")
    v = chain.vertices()
    g, h = _shape_from_vertices(v)
    return TriangleShape(g=g, h=h)


def _shape_from_vertices(v: np.ndarray) -> tuple[float, float]:
    def side(i, j):
        return math.hypot(v[j, 0] - v[i, 0], v[j, 1] - v[i, 1])

    for (i, j, k) in _PERMS3:
        s12, s31, s23 = side(i, j), side(k, i), side(j, k)
        if s12 >= s31 >= s23:
            base = v[j] - v[i]
            apex = v[k] - v[i]
            m2 = s12 * s12
            g = float(np.dot(apex, base) / m2)
            h = abs(float(base[0] * apex[1] - base[1] * apex[0])) / m2
            return g, h
    raise AssertionError("no ordering-consistent labeling found")


def triangle_shape_batch(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized (g, h) for a batch of triangle edge arrays of shape (n, 3).

    Matches :func:`triangle_shape` exactly, including the tie-breaking
    order over vertex labelings.
    """
    n = x.shape[0]
    vx = np.concatenate([np.zeros((n, 1)), np.cumsum(x, axis=1)[:, :-1]], axis=1)
    vy = np.concatenate([np.zeros((n, 1)), np.cumsum(y, axis=1)[:, :-1]], axis=1)

    def side(i, j):
        return np.hypot(vx[:, j] - vx[:, i], vy[:, j] - vy[:, i])

    g = np.full(n, np.nan)
    h = np.full(n, np.nan)
    unset = np.ones(n, dtype=bool)
    for (i, j, k) in _PERMS3:
        s12, s31, s23 = side(i, j), side(k, i), side(j, k)
        pick = unset & (s12 >= s31) & (s31 >= s23)
        if not np.any(pick):
            continue
        bx, by = vx[pick, j] - vx[pick, i], vy[pick, j] - vy[pick, i]
        ax, ay = vx[pick, k] - vx[pick, i], vy[pick, k] - vy[pick, i]
        m2 = s12[pick] ** 2
        g[pick] = (ax * bx + ay * by) / m2
        h[pick] = np.abs(bx * ay - by * ax) / m2
        unset &= ~pick
    if np.any(unset):
        raise AssertionError("no ordering-consistent labeling found")
    return g, h
