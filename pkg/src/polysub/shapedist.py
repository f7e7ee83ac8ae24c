"""Triangle shape-distribution machinery.

As the triangles flatten, the rescaled apex abscissa g_n converges in
distribution; with symmetric splitting densities the folded variable
2g - 1 has an invariant density phi on (0, 1).  This module provides:

* the one-dimensional middle-point chain (one subdivision step on a
  degenerate triangle) and its Monte Carlo kernel;
* the conditional transition CDF as nested integrals of the splitting
  density, evaluated by Gauss-Legendre quadrature (the innermost integral
  is taken exactly through the marginal CDF);
* a grid fixed-point solver for the invariant density, plus the closed-form
  solutions phi_1..phi_5 for Beta(n,n) proportions;
* the conditional one-step log largest-side expectation zeta(x, 0) (closed
  form for uniform proportions, Monte Carlo for the rest) and the rate
  identity   lim (1/n) log h_n = E log det T - 2 int zeta(x,0) dP_eta(x);
* a Kolmogorov-Smirnov distance for goodness-of-fit reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial
from scipy.special import betainc, betaln

from .dynamics import ConvergenceError, run_batch
from .rng import RngStream
from .splits import SplitSpec, heavy_tail_cdf, heavy_tail_pdf, sample_vector_batch

__all__ = [
    "DensityGrid",
    "MarginalDensity",
    "density_from_spec",
    "phi_closed_form",
    "phi_cdf_closed_form",
    "phi_folded_cdf",
    "middle_point_chain_step",
    "transition_cdf",
    "transition_kernel_matrix",
    "apply_transition_kernel",
    "solve_invariant_density",
    "zeta_uniform_closed_form",
    "zeta_mc_oracle",
    "eta_histogram",
    "expected_log_det_quadrature",
    "rate_via_eq_speed",
    "ks_distance",
]


# ---------------------------------------------------------------------------
# density grid


@dataclass(frozen=True)
class DensityGrid:
    """Density tabulated on a uniform open grid over (0, 1).

    Nodes are (i+1) h, i = 0..N-1 with h = 1/(N+1); quadrature weights are
    trapezoid-style (h inside, 3h/2 at the two boundary cells), which
    integrate constants exactly.  Values are non-negative and integrate to
    one under the grid quadrature within 1e-6.
    """

    nodes: np.ndarray
    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        for name in ("nodes", "values", "weights"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.nodes.shape == self.values.shape == self.weights.shape):
            raise ValueError("nodes, values and weights must have equal shapes")
        if np.any(self.values < 0):
            raise ValueError("density values must be non-negative")
        total = float(self.weights @ self.values)
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"density integrates to {total}, not 1 within 1e-6")

    @staticmethod
    def make_grid(n: int) -> tuple[np.ndarray, np.ndarray]:
        if n < 3:
            raise ValueError("grid needs at least 3 nodes")
        h = 1.0 / (n + 1)
        nodes = h * np.arange(1, n + 1)
        weights = np.full(n, h)
        weights[0] = weights[-1] = 1.5 * h
        return nodes, weights

    @classmethod
    def from_function(cls, f: Callable, n: int) -> "DensityGrid":
        nodes, weights = cls.make_grid(n)
        vals = np.asarray(f(nodes), dtype=float)
        vals = np.maximum(vals, 0.0)
        return cls(nodes=nodes, values=vals / (weights @ vals), weights=weights)

    @classmethod
    def from_values(cls, values, n: int | None = None) -> "DensityGrid":
        values = np.asarray(values, dtype=float)
        nodes, weights = cls.make_grid(len(values) if n is None else n)
        return cls(nodes=nodes, values=values / (weights @ values), weights=weights)

    def integral(self) -> float:
        return float(self.weights @ self.values)

    def cell_edges(self) -> np.ndarray:
        mid = 0.5 * (self.nodes[:-1] + self.nodes[1:])
        return np.concatenate([[0.0], mid, [1.0]])


# ---------------------------------------------------------------------------
# symmetric marginal densities


@dataclass(frozen=True)
class MarginalDensity:
    """A continuous density on (0, 1) with vectorized pdf and cdf.

    ``poly_degree`` is set when the density is a polynomial on (0, 1);
    the kernel quadratures are then exact with fewer Gauss-Legendre nodes
    (the integrands have per-axis degree at most 3 deg + 2).
    """

    pdf: Callable
    cdf: Callable
    name: str
    symmetric: bool
    poly_degree: int | None = None

    def require_symmetric(self):
        if not self.symmetric:
            raise ValueError(f"density {self.name!r} is not symmetric about 1/2")

    def exact_quadrature_nodes(self, default: int) -> int:
        if self.poly_degree is None:
            return default
        needed = (3 * self.poly_degree + 2 + 1 + 1) // 2 + 1
        return min(default, max(10, needed))


def _beta_density(alpha: float, beta: float) -> MarginalDensity:
    if alpha == beta and float(alpha).is_integer() and 2 <= alpha <= 16:
        # integer symmetric case: the density is the polynomial
        # t^(n-1) (1-t)^(n-1) / B(n, n); exact Horner evaluation is much
        # cheaper than exp/log and betainc inside the kernel quadratures
        n = int(alpha)
        poly = Polynomial([0.0, 1.0, -1.0]) ** (n - 1) / math.exp(betaln(n, n))
        cdf_poly = poly.integ(lbnd=0.0)

        def pdf(t):
            return poly(np.clip(t, 0.0, 1.0))

        def cdf(t):
            return cdf_poly(np.clip(t, 0.0, 1.0))

        return MarginalDensity(
            pdf=pdf, cdf=cdf, name=f"beta({n},{n})", symmetric=True, poly_degree=2 * (n - 1)
        )

    lognorm = betaln(alpha, beta)

    def pdf(t):
        t = np.asarray(t, dtype=float)
        inside = (t > 0.0) & (t < 1.0)
        tt = np.where(inside, t, 0.5)
        out = np.exp((alpha - 1) * np.log(tt) + (beta - 1) * np.log1p(-tt) - lognorm)
        return np.where(inside, out, 0.0)

    def cdf(t):
        return betainc(alpha, beta, np.clip(t, 0.0, 1.0))

    return MarginalDensity(pdf=pdf, cdf=cdf, name=f"beta({alpha},{beta})", symmetric=alpha == beta)


def density_from_spec(spec: SplitSpec) -> MarginalDensity:
    """Continuous marginal density of a spec; atom-only kinds are rejected."""
    if spec.kind == "uniform":
        return MarginalDensity(
            pdf=lambda t: np.where((np.asarray(t) > 0) & (np.asarray(t) < 1), 1.0, 0.0),
            cdf=lambda t: np.clip(t, 0.0, 1.0),
            name="uniform",
            symmetric=True,
            poly_degree=0,
        )
    if spec.kind == "beta":
        return _beta_density(spec.alpha, spec.beta)
    if spec.kind == "heavy_tail":
        delta = spec.delta
        return MarginalDensity(
            pdf=lambda t: heavy_tail_pdf(t, delta),
            cdf=lambda t: heavy_tail_cdf(t, delta),
            name=f"heavy_tail({delta})",
            symmetric=True,
        )
    raise ValueError(f"spec kind {spec.kind!r} has no continuous marginal density")


def _as_density(p) -> MarginalDensity:
    if isinstance(p, MarginalDensity):
        return p
    if isinstance(p, SplitSpec):
        return density_from_spec(p)
    raise TypeError("expected a MarginalDensity or SplitSpec")


# ---------------------------------------------------------------------------
# closed-form invariant densities for Beta(n, n) proportions


def _phi_polynomials() -> dict[int, Polynomial]:
    u = Polynomial([0.0, 1.0, -1.0])  # z (1 - z)
    one = Polynomial([1.0])
    return {
        1: one.copy(),
        2: (6.0 / 7.0) * (u + 1),
        3: (30.0 / 143.0) * (3 * u**2 + 4 * u + 4),
        4: (140.0 / 4199.0) * (13 * u**3 + 22 * u**2 + 25 * u + 25),
        5: (6174.0 / 7429.0)
        * ((17.0 / 49.0) * u**4 + (5.0 / 7.0) * u**3 + (13.0 / 14.0) * u**2 + u + 1),
    }


_PHI = _phi_polynomials()
_PHI_CDF = {n: poly.integ(lbnd=0.0) for n, poly in _PHI.items()}


def phi_closed_form(n: int, z):
    """Invariant density of 2 eta - 1 for Beta(n, n) proportions, n = 1..5."""
    if n not in _PHI:
        raise ValueError("closed forms are available for n in 1..5 only")
    out = _PHI[n](np.asarray(z, dtype=float))
    return float(out) if np.ndim(z) == 0 else out


def phi_cdf_closed_form(n: int, z):
    """CDF of the closed-form density phi_n (exact polynomial integral)."""
    if n not in _PHI_CDF:
        raise ValueError("closed forms are available for n in 1..5 only")
    zz = np.clip(np.asarray(z, dtype=float), 0.0, 1.0)
    out = np.clip(_PHI_CDF[n](zz), 0.0, 1.0)
    return float(out) if np.ndim(z) == 0 else out


def phi_folded_cdf(n: int, u):
    """CDF of |2 Z - 1| when Z has density phi_n.

    This is the law the triangle shape statistic 2 g - 1 follows: the shape
    ordering folds the middle-point position z and 1 - z onto one point, so
    the folded CDF is 2 (Phi_n((1 + u)/2) - 1/2).  It coincides with Phi_n
    only in the uniform case n = 1.
    """
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    out = 2.0 * (phi_cdf_closed_form(n, (1.0 + u) / 2.0) - 0.5)
    out = np.clip(out, 0.0, 1.0)
    return float(out) if np.ndim(u) == 0 else out


# ---------------------------------------------------------------------------
# the middle-point chain and its transition kernel


def middle_point_chain_step(z, xi1, xi2, xi3):
    """One step of the middle-point chain on the degenerate triangle.

    Given the middle point at z and split proportions (xi1, xi2, xi3), the
    three new points are z xi1, xi2, z + (1-z) xi3; sorted y1 <= y2 <= y3,
    the next middle position is (y2 - y1)/(y3 - y1).  Vectorized.
    """
    z = np.asarray(z, dtype=float)
    pts = np.stack(
        np.broadcast_arrays(
            z * np.asarray(xi1, dtype=float),
            np.asarray(xi2, dtype=float) + 0.0 * z,
            z + (1.0 - z) * np.asarray(xi3, dtype=float),
        ),
        axis=-1,
    )
    pts.sort(axis=-1)
    out = (pts[..., 1] - pts[..., 0]) / (pts[..., 2] - pts[..., 0])
    return float(out) if out.ndim == 0 else out


def _gl01(n: int) -> tuple[np.ndarray, np.ndarray]:
    t, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (t + 1.0), 0.5 * w


def _lower_branch_cdf(z: np.ndarray, x: np.ndarray, p: MarginalDensity, nodes: int) -> np.ndarray:
    """P(next middle point < z | current = x) for z <= x, batched.

    Two of the three new points fall on the same side of x; conditioning on
    which side gives three smooth double integrals once the innermost
    variable is integrated exactly through the marginal CDF.  Each remaining
    axis uses ``nodes``-point Gauss-Legendre.
    """
    t, w = _gl01(nodes)
    z = z[:, None, None]
    x = x[:, None, None]
    ti = t[None, :, None]
    tj = t[None, None, :]
    ww = w[None, :, None] * w[None, None, :]
    pdf, cdf = p.pdf, p.cdf

    # both lower points below x, third point x3 above:
    # ratio < z automatically when z x3 + (1-z) y1 > x (term A), otherwise
    # the middle point y2 must fall below z x3 + (1-z) y1 (term B)
    x3 = x + (1.0 - x) * ti
    w3 = pdf((x3 - x) / (1.0 - x))  # the (1-x) jacobian cancels the density scaling
    lo = (x - z * x3) / (1.0 - z)

    y1a = lo + (x - lo) * tj
    inner_a = (1.0 / x) * pdf(y1a / x) * (cdf(x) - cdf(y1a)) + pdf(y1a) * (1.0 - cdf(y1a / x))
    term_a = (ww * w3 * (x - lo) * inner_a).sum(axis=(1, 2))

    y1b = lo * tj
    ub = z * x3 + (1.0 - z) * y1b
    inner_b = (1.0 / x) * pdf(y1b / x) * (cdf(ub) - cdf(y1b)) + pdf(y1b) * (
        cdf(ub / x) - cdf(y1b / x)
    )
    term_b = (ww * w3 * lo * inner_b).sum(axis=(1, 2))

    # lowest point x1 below x, both others above; y3 must exceed
    # (y2 - (1-z) x1)/z for the ratio to stay below z
    lo1 = (x - z) / (1.0 - z)
    x1 = lo1 + (x - lo1) * ti
    wx1 = (x - lo1) * (1.0 / x) * pdf(x1 / x)
    v = (1.0 - z) * x1 + z
    y2 = x + (v - x) * tj
    big = (y2 - (1.0 - z) * x1) / z
    inner_2 = pdf(y2) * (1.0 - cdf((big - x) / (1.0 - x))) + (1.0 / (1.0 - x)) * pdf(
        (y2 - x) / (1.0 - x)
    ) * (1.0 - cdf(big))
    term_2 = (ww * wx1 * (v - x) * inner_2).sum(axis=(1, 2))

    return term_a + term_b + term_2


def transition_cdf(z, x, p, nodes: int = 32):
    """Conditional CDF of the next middle-point position given the current one.

    For z <= x this is the pair of nested integrals I1 + I2 of the
    symmetric density; for z > x the reflected survival identity
    1 - (I1 + I2)(1 - z, 1 - x) applies.  ``p`` may be a SplitSpec with a
    continuous symmetric density or a MarginalDensity; asymmetric densities
    are rejected.
    """
    p = _as_density(p)
    p.require_symmetric()
    scalar = np.ndim(z) == 0 and np.ndim(x) == 0
    z, x = np.broadcast_arrays(np.asarray(z, dtype=float), np.asarray(x, dtype=float))
    shape = z.shape
    z = z.ravel().copy()
    x = x.ravel().copy()
    if np.any((x <= 0.0) | (x >= 1.0)):
        raise ValueError("the current position x must lie strictly in (0, 1)")
    out = np.empty_like(z)
    out[z <= 0.0] = 0.0
    out[z >= 1.0] = 1.0
    lower = (z > 0.0) & (z < 1.0) & (z <= x)
    upper = (z > 0.0) & (z < 1.0) & (z > x)
    if np.any(lower):
        out[lower] = _batched_lower(z[lower], x[lower], p, nodes)
    if np.any(upper):
        out[upper] = 1.0 - _batched_lower(1.0 - z[upper], 1.0 - x[upper], p, nodes)
    out = np.clip(out, 0.0, 1.0)
    if scalar:
        return float(out[0])
    return out.reshape(shape)


def _batched_lower(z, x, p, nodes, chunk: int = 2048):
    out = np.empty_like(z)
    for start in range(0, len(z), chunk):
        sl = slice(start, min(start + chunk, len(z)))
        out[sl] = _lower_branch_cdf(z[sl], x[sl], p, nodes)
    return out


def transition_kernel_matrix(p, grid_size: int, nodes: int = 32) -> tuple[np.ndarray, DensityGrid]:
    """Grid discretization K of the middle-point transition operator.

    K[i, j] is the probability mass the chain moves from node j into grid
    cell i, divided by the cell width and weighted for quadrature in x, so
    that (K @ values) tabulates the pushed-forward density on the nodes.
    Returns (K, uniform starting grid).  For polynomial densities the node
    count is tightened to the provably exact level.
    """
    p = _as_density(p)
    p.require_symmetric()
    nodes = p.exact_quadrature_nodes(nodes)
    nodes_z, weights = DensityGrid.make_grid(grid_size)
    start = DensityGrid(nodes=nodes_z, values=np.ones(grid_size), weights=weights)
    edges = start.cell_edges()
    ee = np.repeat(edges, grid_size)
    xx = np.tile(nodes_z, len(edges))
    cdf_vals = transition_cdf(ee, xx, p, nodes=nodes).reshape(len(edges), grid_size)
    mass = np.diff(cdf_vals, axis=0)
    mass = np.maximum(mass, 0.0)
    K = (mass * weights[None, :]) / weights[:, None]
    return K, start


def apply_transition_kernel(p, grid: DensityGrid, nodes: int = 32, kernel: np.ndarray | None = None) -> np.ndarray:
    """One application of the transition operator to a tabulated density."""
    if kernel is None:
        kernel, _ = transition_kernel_matrix(p, len(grid.nodes), nodes=nodes)
    return kernel @ grid.values


def solve_invariant_density(
    p,
    grid_size: int,
    tol: float = 1e-6,
    max_sweeps: int = 1000,
    nodes: int = 32,
) -> DensityGrid:
    """Fixed-point iteration for the invariant middle-point density.

    Starts from the uniform density and applies the grid kernel, with
    renormalization each sweep, until the sup-norm change drops below
    ``tol``.  Raises :class:`ConvergenceError` after ``max_sweeps``.
    """
    if grid_size < 101:
        raise ValueError("grid_size must be >= 101")
    K, grid = transition_kernel_matrix(p, grid_size, nodes=nodes)
    w = grid.weights
    v = np.ones(grid_size)
    for _ in range(max_sweeps):
        nv = K @ v
        nv = np.maximum(nv, 0.0)
        nv /= w @ nv
        change = float(np.abs(nv - v).max())
        v = nv
        if change < tol:
            return DensityGrid(nodes=grid.nodes, values=v, weights=w)
    raise ConvergenceError(
        f"invariant-density iteration did not reach {tol:g} in {max_sweeps} sweeps "
        f"(last sup-norm change {change:.3e})"
    )


# ---------------------------------------------------------------------------
# zeta and the rate identity


def zeta_uniform_closed_form(x):
    """E[log largest side after one step | flat triangle with apex x],
    uniform proportions:

        (x (2 x^2 log x - 5 x + 5) - 2 (x-1)^3 log(1-x)) / (6 (x-1) x).
    """
    x = np.asarray(x, dtype=float)
    if np.any((x <= 0.0) | (x >= 1.0)):
        raise ValueError("x must lie strictly in (0, 1)")
    num = x * (2.0 * x**2 * np.log(x) - 5.0 * x + 5.0) - 2.0 * (x - 1.0) ** 3 * np.log1p(-x)
    out = num / (6.0 * (x - 1.0) * x)
    return float(out) if out.ndim == 0 else out


def zeta_mc_oracle(x: float, spec: SplitSpec, samples: int, rng: RngStream) -> tuple[float, float]:
    """Monte Carlo zeta(x, 0): one subdivision step on the flat triangle
    with vertices (0,0), (1,0), (x,0); returns (mean log max side, se)."""
    if not (0.0 < x < 1.0):
        raise ValueError("x must lie strictly in (0, 1)")
    xi = sample_vector_batch(spec, samples, 3, rng)
    e1, e2, e3 = 1.0, x - 1.0, -x
    n1 = (1.0 - xi[:, 0]) * e1 + xi[:, 1] * e2
    n2 = (1.0 - xi[:, 1]) * e2 + xi[:, 2] * e3
    n3 = (1.0 - xi[:, 2]) * e3 + xi[:, 0] * e1
    m = np.maximum(np.abs(n1), np.maximum(np.abs(n2), np.abs(n3)))
    logs = np.log(m)
    return float(logs.mean()), float(logs.std(ddof=1) / math.sqrt(samples))


def eta_histogram(
    spec: SplitSpec,
    replicas: int,
    steps_per_replica: int,
    rng: RngStream,
) -> np.ndarray:
    """Samples of 2 g - 1 from the final step of independent triangle runs."""
    batch = run_batch(
        spec,
        3,
        steps_per_replica,
        replicas,
        rng,
        record_every=steps_per_replica,
        draw_mode="pooled",
        with_shape=True,
    )
    return 2.0 * batch.g[:, -1] - 1.0


def expected_log_det_quadrature(p, nodes: int = 48) -> float:
    """E log det T for d = 3 by tensor Gauss-Legendre quadrature of
    log((1-a)(1-b)(1-c) + abc) against the product density."""
    p = _as_density(p)
    t, w = _gl01(nodes)
    pd = p.pdf(t) * w
    a = t[:, None, None]
    b = t[None, :, None]
    c = t[None, None, :]
    integrand = np.log((1 - a) * (1 - b) * (1 - c) + a * b * c)
    return float(np.einsum("i,j,k,ijk->", pd, pd, pd, integrand))


_EXACT_UNIFORM_LOG_DET = (math.pi**2 - 24.0) / 9.0


def rate_via_eq_speed(
    spec: SplitSpec,
    eta_density=None,
    rng: RngStream | None = None,
    zeta_fn: Callable | None = None,
    zeta_samples: int = 10**6,
    log_det: float | None = None,
    quad_nodes: int = 64,
) -> float:
    """The flatness rate  E log det T - 2 int zeta(x, 0) dP_eta(x)  for d = 3.

    ``eta_density`` describes the law feeding the zeta integral.  An
    integer n picks the closed form phi_n, a DensityGrid or callable is a
    density, and all three are read as the invariant density of the
    middle-point *position* on (0, 1); eta is its folded image
    max(z, 1 - z), so the integral evaluates zeta at max(z, 1 - z).  (For
    the uniform case phi_1 = 1 this coincides with substituting
    x = (1 + z)/2 against phi_1; for n >= 2 the folded and unfolded laws
    differ and the folded one is what the triangle shapes follow.)  An
    array is treated as Monte Carlo samples of 2 g - 1, evaluated at
    x = (1 + u)/2.  None picks the closed form matching the spec
    (uniform -> phi_1, Beta(n,n) with integer n <= 5 -> phi_n).  zeta uses
    the uniform closed form when applicable, otherwise the Monte Carlo
    oracle (rng required).
    """
    if log_det is None:
        if spec.kind == "uniform":
            log_det = _EXACT_UNIFORM_LOG_DET
        elif spec.kind == "beta":
            log_det = expected_log_det_quadrature(spec)
        else:
            raise ValueError("pass log_det explicitly for this spec kind")

    if zeta_fn is None:
        if spec.kind == "uniform":
            zeta_fn = zeta_uniform_closed_form
        else:
            if rng is None:
                raise ValueError("rng is required for the Monte Carlo zeta oracle")

            def zeta_fn(xs):
                xs = np.atleast_1d(xs)
                return np.array(
                    [zeta_mc_oracle(float(u), spec, zeta_samples, rng)[0] for u in xs]
                )

    if eta_density is None:
        if spec.kind == "uniform":
            eta_density = 1
        elif spec.kind == "beta" and spec.alpha == spec.beta and float(spec.alpha).is_integer() and 1 <= spec.alpha <= 5:
            eta_density = int(spec.alpha)
        else:
            raise ValueError("no closed-form eta density for this spec; pass one")

    if isinstance(eta_density, (int, np.integer)):
        phi = _PHI[int(eta_density)]
        t, w = _gl01(quad_nodes)
        integral = float((w * phi(t) * np.asarray(zeta_fn(np.maximum(t, 1.0 - t)))).sum())
    elif isinstance(eta_density, DensityGrid):
        g = eta_density
        zx = np.asarray(zeta_fn(np.maximum(g.nodes, 1.0 - g.nodes)))
        integral = float(g.weights @ (g.values * zx))
    elif callable(eta_density):
        t, w = _gl01(quad_nodes)
        zx = np.asarray(zeta_fn(np.maximum(t, 1.0 - t)))
        integral = float((w * np.asarray(eta_density(t)) * zx).sum())
    else:
        samples = np.asarray(eta_density, dtype=float)
        integral = float(np.mean(zeta_fn((1.0 + samples) / 2.0)))

    return log_det - 2.0 * integral


def ks_distance(samples, cdf: Callable) -> float:
    """Sup-norm distance between the empirical CDF of ``samples`` and ``cdf``."""
    s = np.sort(np.asarray(samples, dtype=float))
    n = len(s)
    if n < 10:
        raise ValueError("need at least 10 samples")
    f = np.asarray(cdf(s), dtype=float)
    hi = np.abs(np.arange(1, n + 1) / n - f)
    lo = np.abs(f - np.arange(0, n) / n)
    return float(max(hi.max(), lo.max()))
