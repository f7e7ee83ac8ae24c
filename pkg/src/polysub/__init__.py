"""polysub: consecutive random subdivision of convex polygons.

Pick a random point on each side of a convex d-gon (i.i.d. proportions),
pass to the polygon those points form, and repeat.  The polygons shrink to
a random point and their shapes flatten at an exponential rate governed by
the Lyapunov spectrum of products of random transfer matrices.  This
package simulates the chain, estimates the spectrum and the flatness rate,
verifies the algebraic identities behind them, and reproduces the triangle
shape-distribution results (closed-form invariant densities, transition
kernel, limit-point law).
"""

from .rng import RngStream, derive_replica_seed, splitmix64
from .splits import (
    LogMoments,
    SplitSpec,
    heavy_tail_cdf,
    heavy_tail_inverse_cdf,
    heavy_tail_pdf,
    log_moment_diagnostics,
    sample,
    sample_vector,
)
from .geometry import (
    EdgeChain,
    TriangleShape,
    angular_distance,
    edges_from_vertices,
    flatness_ratio,
    lift_to_d,
    log_max_side,
    max_side,
    signed_area,
    triangle_shape,
)
from .matrices import (
    build_H,
    build_Q,
    build_T,
    contraction_witness_odd,
    contraction_witness_product,
    det_T_closed_form,
    det_T_lu,
    matrix_csv,
    q_product,
    q_t,
    verify_eigenstructure,
)
from .dynamics import (
    ConvergenceError,
    LimitPointEstimate,
    TrajectoryRecord,
    estimate_limit_point,
    regular_polygon_chain,
    run_trajectory,
    subdivide_step,
    vertex_radius_check,
)
from .lyapunov import (
    LyapunovSpectrum,
    estimate_flatness_rate,
    estimate_spectrum,
    estimate_top_exponent_from_sides,
    expected_log_abs_det,
    log_det_divergence_scan,
)
from .shapedist import (
    DensityGrid,
    MarginalDensity,
    density_from_spec,
    eta_histogram,
    ks_distance,
    middle_point_chain_step,
    phi_cdf_closed_form,
    phi_closed_form,
    phi_folded_cdf,
    rate_via_eq_speed,
    solve_invariant_density,
    transition_cdf,
    zeta_mc_oracle,
    zeta_uniform_closed_form,
)

__version__ = "0.1.0"

__all__ = [
    "RngStream",
    "derive_replica_seed",
    "splitmix64",
    "SplitSpec",
    "LogMoments",
    "sample",
    "sample_vector",
    "log_moment_diagnostics",
    "heavy_tail_inverse_cdf",
    "heavy_tail_pdf",
    "heavy_tail_cdf",
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
    "build_H",
    "build_T",
    "build_Q",
    "q_t",
    "q_product",
    "det_T_closed_form",
    "det_T_lu",
    "verify_eigenstructure",
    "contraction_witness_odd",
    "contraction_witness_product",
    "matrix_csv",
    "ConvergenceError",
    "TrajectoryRecord",
    "LimitPointEstimate",
    "subdivide_step",
    "run_trajectory",
    "estimate_limit_point",
    "vertex_radius_check",
    "regular_polygon_chain",
    "LyapunovSpectrum",
    "estimate_spectrum",
    "estimate_top_exponent_from_sides",
    "estimate_flatness_rate",
    "expected_log_abs_det",
    "log_det_divergence_scan",
    "DensityGrid",
    "MarginalDensity",
    "density_from_spec",
    "phi_closed_form",
    "phi_cdf_closed_form",
    "phi_folded_cdf",
    "middle_point_chain_step",
    "transition_cdf",
    "solve_invariant_density",
    "zeta_uniform_closed_form",
    "zeta_mc_oracle",
    "eta_histogram",
    "rate_via_eq_speed",
    "ks_distance",
]
