"""The subdivision Markov chain on polygons.

One step picks a point on each side at the drawn proportions and passes to
the polygon they form; on edge vectors this is the linear map ``build_H``.
Each step the stored edges are renormalized by the current longest side and
the log of that factor is accumulated, so thousands of steps run without
underflow even though the true polygons shrink like exp(mu_1 n).

For triangles the area picks up an exact factor det(T) per step, so the
log of the flatness ratio (and of the rescaled height h = 2 area / M^2) is
tracked through the recursion

    log h_n = log h_{n-1} + log det(T_n) + 2 (log M_{n-1} - log M_n),

which stays meaningful far below the smallest positive double; the direct
geometric computation bottoms out near 1e-16 once the stored edges are
numerically collinear.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    EdgeChain,
    TriangleShape,
    edges_from_vertices,
    flatness_ratio,
    log_max_side,
    stored_max_side,
    triangle_shape,
    triangle_shape_batch,
)
from .matrices import build_H, det_T_closed_form
from .rng import RngStream
from .splits import SplitSpec, sample_vector, sample_vector_batch

__all__ = [
    "ConvergenceError",
    "TrajectoryRecord",
    "TrajectoryBatch",
    "LimitPointEstimate",
    "subdivide_step",
    "run_trajectory",
    "run_batch",
    "estimate_limit_point",
    "limit_point_batch",
    "vertex_radius_check",
    "regular_polygon_chain",
]


class ConvergenceError(RuntimeError):
    """An iterative estimate failed to reach its tolerance."""


@dataclass(frozen=True)
class TrajectoryRecord:
    """Observables of one recorded step.

    ``flatness`` is area/M^2 (for d = 3 it is exp of the tracked log and
    underflows gracefully to 0.0); ``log_flatness`` carries the tracked
    value itself for rate regressions.  ``shape`` is present only for d=3.
    """

    step: int
    log_M: float
    flatness: float
    log_flatness: float
    delta_xy: float
    shape: TriangleShape | None = None


def subdivide_step(chain: EdgeChain, xi) -> EdgeChain:
    """One subdivision step: apply H(xi) to both coordinate vectors, then
    renormalize by the new longest side, accumulating its log.

    The component sums are re-zeroed after the step.  H preserves them
    exactly in real arithmetic, but rounding injects a small closure defect
    and the renormalization amplifies it by 1/M per step, so without the
    projection the chain stops closing up after a few dozen steps.
    """
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (chain.d,):
        raise ValueError("xi must have one proportion per side")
    H = build_H(xi)
    x = H @ chain.x
    y = H @ chain.y
    x -= x.mean()
    y -= y.mean()
    m = float(np.hypot(x, y).max())
    return EdgeChain(x=x / m, y=y / m, log_scale=chain.log_scale + math.log(m))


def _delta_xy(x: np.ndarray, y: np.ndarray) -> float:
    c = np.outer(x, y)
    s = c - c.T
    num = float((s * s).sum() / 2.0)
    return min(math.sqrt(num / (float(x @ x) * float(y @ y))), 1.0)


def run_trajectory(
    initial: EdgeChain,
    spec: SplitSpec,
    n_steps: int,
    rng: RngStream,
    record_every: int = 1,
) -> list[TrajectoryRecord]:
    """Run the chain ``n_steps`` steps, recording observables every
    ``record_every`` steps (at steps record_every, 2*record_every, ...)."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    d = initial.d
    chain = initial
    is_tri = d == 3
    log_flat = math.log(flatness_ratio(chain)) if is_tri else None
    records: list[TrajectoryRecord] = []
    for step in range(1, n_steps + 1):
        xi = sample_vector(spec, d, rng)
        prev_log_m = log_max_side(chain)
        chain = subdivide_step(chain, xi)
        log_m = log_max_side(chain)
        if is_tri:
            log_flat += math.log(det_T_closed_form(xi)) + 2.0 * (prev_log_m - log_m)
        if step % record_every == 0:
            if is_tri:
                flat = math.exp(log_flat) if log_flat > -745.0 else 0.0
                lf = log_flat
                shp = triangle_shape(chain)
            else:
                flat = flatness_ratio(chain)
                lf = math.log(flat) if flat > 0.0 else -math.inf
                shp = None
            records.append(
                TrajectoryRecord(
                    step=step,
                    log_M=log_m,
                    flatness=flat,
                    log_flatness=lf,
                    delta_xy=_delta_xy(chain.x, chain.y),
                    shape=shp,
                )
            )
    return records


@dataclass(frozen=True)
class TrajectoryBatch:
    """Column-oriented records of a replica batch: arrays (replicas, n_recorded)."""

    steps: np.ndarray
    log_M: np.ndarray
    log_flatness: np.ndarray
    delta_xy: np.ndarray
    g: np.ndarray | None
    h: np.ndarray | None


def regular_polygon_chain(d: int) -> EdgeChain:
    """Regular d-gon on the unit circle; the standard initial polygon."""
    ang = 2.0 * np.pi * np.arange(d) / d
    return edges_from_vertices(np.column_stack([np.cos(ang), np.sin(ang)]))


def run_batch(
    spec: SplitSpec,
    d: int,
    n_steps: int,
    replicas: int,
    rng: RngStream,
    record_every: int = 1,
    initial: EdgeChain | None = None,
    draw_mode: str = "replica",
    with_shape: bool | None = None,
) -> TrajectoryBatch:
    """Vectorized multi-replica trajectories sharing one initial polygon.

    ``draw_mode="replica"`` gives every replica its own child stream
    (scheduling-independent reproducibility; proportions are pre-drawn in
    step blocks to bound memory).  ``draw_mode="pooled"`` draws all replicas
    from the master stream step by step, which is cheaper for very large
    replica counts and equally deterministic single-threaded.
    """
    if initial is None:
        initial = regular_polygon_chain(d)
    if initial.d != d:
        raise ValueError("initial chain has the wrong number of sides")
    is_tri = d == 3
    if with_shape is None:
        with_shape = is_tri

    x = np.tile(initial.x, (replicas, 1))
    y = np.tile(initial.y, (replicas, 1))
    log_scale = np.full(replicas, float(initial.log_scale))
    ln_max = np.full(replicas, math.log(stored_max_side(initial)))
    log_flat = np.full(replicas, math.log(flatness_ratio(initial))) if is_tri else None

    rec_steps = list(range(record_every, n_steps + 1, record_every))
    k = len(rec_steps)
    out_logM = np.empty((replicas, k))
    out_logflat = np.empty((replicas, k))
    out_delta = np.empty((replicas, k))
    out_g = np.empty((replicas, k)) if with_shape else None
    out_h = np.empty((replicas, k)) if with_shape else None

    gens = None
    block = None
    block_start = 0
    if draw_mode == "replica":
        gens = [rng.spawn(r) for r in range(replicas)]
        block_steps = max(1, min(n_steps, int(48e6 // max(1, replicas * d * 8))))
    elif draw_mode != "pooled":
        raise ValueError("draw_mode must be 'replica' or 'pooled'")

    ptr = 0
    for step in range(1, n_steps + 1):
        if draw_mode == "replica":
            if block is None or step - 1 >= block_start + block.shape[1]:
                block_start = step - 1
                count = min(block_steps, n_steps - block_start)
                block = np.empty((replicas, count, d))
                for r, g in enumerate(gens):
                    block[r] = sample_vector_batch(spec, count, d, g)
            xi = block[:, step - 1 - block_start, :]
        else:
            xi = sample_vector_batch(spec, replicas, d, rng)

        prev_logM = log_scale + ln_max
        x = (1.0 - xi) * x + np.roll(xi, -1, axis=1) * np.roll(x, -1, axis=1)
        y = (1.0 - xi) * y + np.roll(xi, -1, axis=1) * np.roll(y, -1, axis=1)
        # re-zero the component sums; rounding otherwise re-injects a closure
        # defect that the renormalization amplifies exponentially
        x -= x.mean(axis=1, keepdims=True)
        y -= y.mean(axis=1, keepdims=True)
        norms2 = x * x + y * y
        m = np.sqrt(norms2.max(axis=1))
        x /= m[:, None]
        y /= m[:, None]
        log_scale += np.log(m)
        ln_max = 0.5 * np.log((x * x + y * y).max(axis=1))
        log_M = log_scale + ln_max
        if is_tri:
            log_flat += np.log(det_T_closed_form(xi)) + 2.0 * (prev_logM - log_M)

        if ptr < k and step == rec_steps[ptr]:
            out_logM[:, ptr] = log_M
            if is_tri:
                out_logflat[:, ptr] = log_flat
            else:
                s = x[:, :-1, None] * y[:, None, :-1] - x[:, None, :-1] * y[:, :-1, None]
                area = np.abs(np.triu(s, 1).sum(axis=(1, 2))) / 2.0
                with np.errstate(divide="ignore"):
                    out_logflat[:, ptr] = np.log(area) - 2.0 * ln_max
            sfull = x[:, :, None] * y[:, None, :] - x[:, None, :] * y[:, :, None]
            num = (sfull * sfull).sum(axis=(1, 2)) / 2.0
            nx = (x * x).sum(axis=1)
            ny = (y * y).sum(axis=1)
            out_delta[:, ptr] = np.minimum(np.sqrt(num / (nx * ny)), 1.0)
            if with_shape:
                gq, hq = triangle_shape_batch(x, y)
                out_g[:, ptr] = gq
                out_h[:, ptr] = hq
            ptr += 1

    return TrajectoryBatch(
        steps=np.array(rec_steps),
        log_M=out_logM,
        log_flatness=out_logflat,
        delta_xy=out_delta,
        g=out_g,
        h=out_h,
    )


@dataclass(frozen=True)
class LimitPointEstimate:
    """Limit point of the shrinking polygons and its vertex weight vector."""

    point: np.ndarray
    weights: np.ndarray


def _transposed_H_batch(xi: np.ndarray) -> np.ndarray:
    n, d = xi.shape
    HT = np.zeros((n, d, d))
    idx = np.arange(d)
    HT[:, idx, idx] = 1.0 - xi
    HT[:, idx, (idx - 1) % d] = xi
    return HT


def _limit_point_from_weights(w: np.ndarray, verts: np.ndarray) -> np.ndarray:
    # weight k multiplies the vertex one position back in the cyclic order
    # (the enumeration that makes the vertex recursion use transposed H)
    d = len(w)
    perm = (np.arange(d) - 1) % d
    return w @ verts[perm]


def estimate_limit_point(
    vertices,
    spec: SplitSpec,
    n_steps: int,
    rng: RngStream,
    tol: float = 1e-9,
) -> LimitPointEstimate:
    """Estimate the a.s. limit point via the product of transposed H matrices.

    The left product of row-stochastic transposed H matrices converges to a
    rank-one matrix 1 w; the run fails with :class:`ConvergenceError` if the
    rows of the accumulated product do not agree within ``tol`` after
    ``n_steps`` steps.  The weight vector is applied to the initial vertices
    in the shifted cyclic enumeration used by the vertex recursion.
    """
    chain = edges_from_vertices(vertices)
    verts = np.asarray(vertices, dtype=float)
    d = chain.d
    prod = np.eye(d)
    for _ in range(n_steps):
        xi = sample_vector(spec, d, rng)
        prod = _transposed_H_batch(xi[None, :])[0] @ prod
    disagree = float((prod.max(axis=0) - prod.min(axis=0)).max())
    if disagree > tol:
        raise ConvergenceError(
            f"stochastic product rows disagree by {disagree:.3e} > {tol:.1e} after {n_steps} steps"
        )
    w = prod[0].copy()
    return LimitPointEstimate(point=_limit_point_from_weights(w, verts), weights=w)


def limit_point_batch(
    vertices,
    spec: SplitSpec,
    n_steps: int,
    replicas: int,
    rng: RngStream,
    tol: float = 1e-9,
) -> tuple[np.ndarray, np.ndarray]:
    """Replica batch of limit points: returns (points (R, 2), weights (R, d))."""
    chain = edges_from_vertices(vertices)
    verts = np.asarray(vertices, dtype=float)
    d = chain.d
    prod = np.tile(np.eye(d), (replicas, 1, 1))
    for _ in range(n_steps):
        xi = sample_vector_batch(spec, replicas, d, rng)
        prod = _transposed_H_batch(xi) @ prod
    disagree = (prod.max(axis=1) - prod.min(axis=1)).max(axis=1)
    worst = float(disagree.max())
    if worst > tol:
        raise ConvergenceError(
            f"stochastic product rows disagree by {worst:.3e} > {tol:.1e} after {n_steps} steps"
        )
    w = prod[:, 0, :].copy()
    perm = (np.arange(d) - 1) % d
    pts = w @ verts[perm]
    return pts, w


def vertex_radius_check(vertices, point) -> tuple[float, float]:
    """(max_j |P - A_j|, longest side M) for a strictly interior point P.

    Raises if P is not strictly inside the convex polygon.  The companion
    inequalities |A_k A_{k+1}|/2 <= max_j |P - A_j| <= d M are asserted by
    the test suite, not here.
    """
    chain = edges_from_vertices(vertices)
    v = np.asarray(vertices, dtype=float)
    p = np.asarray(point, dtype=float)
    e = np.roll(v, -1, axis=0) - v
    rel = p[None, :] - v
    cross = e[:, 0] * rel[:, 1] - e[:, 1] * rel[:, 0]
    if not (np.all(cross > 0) or np.all(cross < 0)):
        raise ValueError("point is not strictly inside the polygon")
    radii = np.hypot(rel[:, 0], rel[:, 1])
    m = stored_max_side(chain)
    return float(radii.max()), m


def trajectory_csv_rows(records: list[TrajectoryRecord], replica: int) -> list[list]:
    """Rows (replica, step, log_M, flatness, delta_xy, g, h) for trajectory CSV."""
    rows = []
    for r in records:
        g = r.shape.g if r.shape is not None else ""
        h = r.shape.h if r.shape is not None else ""
        rows.append([replica, r.step, r.log_M, r.flatness, r.delta_xy, g, h])
    return rows
