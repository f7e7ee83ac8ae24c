"""Tests for the splitting-proportion laws."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.stats import beta as beta_dist

from polysub.matrices import det_T_closed_form
from polysub.rng import RngStream
from polysub.splits import (
    LogMoments,
    SplitSpec,
    assumption2_violation_possible,
    heavy_tail_cdf,
    heavy_tail_inverse_cdf,
    heavy_tail_pdf,
    log_moment_diagnostics,
    sample,
    sample_array,
    sample_log_pair,
    sample_vector,
    sample_vector_batch,
)


def test_two_point_degenerate_weight_always_first_atom():
    spec = SplitSpec.two_point(0.3, 0.7, 1.0)
    rng = RngStream(1)
    draws = sample_array(spec, 1000, rng)
    assert np.all(draws == 0.3)
    assert sample(spec, rng) == 0.3


def test_uniform_mean_near_half():
    rng = RngStream(2)
    draws = sample_array(SplitSpec.uniform(), 10**6, rng)
    assert abs(draws.mean() - 0.5) < 0.002


def test_beta_3_3_variance_matches_quadrature_oracle():
    # independent oracle: second central moment of x^2 (1-x)^2 / B(3,3)
    norm = quad(lambda x: x**2 * (1 - x) ** 2, 0, 1)[0]
    oracle_var = quad(lambda x: (x - 0.5) ** 2 * x**2 * (1 - x) ** 2 / norm, 0, 1)[0]
    assert abs(oracle_var - 1.0 / 28.0) < 1e-12
    draws = sample_array(SplitSpec.make_beta(3, 3), 10**6, RngStream(3))
    assert abs(draws.var() - oracle_var) < 0.001


def test_sample_vector_atom_kinds():
    rng = RngStream(4)
    vec = sample_vector(SplitSpec.two_point(0.3, 0.7, 1.0), 3, rng)
    assert np.all(vec == 0.3)
    joint = SplitSpec.joint_table([((0.2, 0.5, 0.8), 1.0)], d=3)
    assert np.allclose(sample_vector(joint, 3, rng), [0.2, 0.5, 0.8])


def test_sample_on_joint_spec_rejected():
    joint = SplitSpec.joint_table([((0.2, 0.5, 0.8), 1.0)], d=3)
    with pytest.raises(ValueError, match="sample_vector"):
        sample(joint, RngStream(5))


def test_uniform_even_d_det_never_exactly_zero():
    rng = RngStream(6)
    draws = sample_vector_batch(SplitSpec.uniform(), 10**4, 4, rng)
    assert np.all(det_T_closed_form(draws) != 0.0)


def test_heavy_tail_inverse_cdf_midpoint_and_quadrature():
    assert heavy_tail_inverse_cdf(0.5, 0.5) == 0.5
    assert heavy_tail_inverse_cdf(0.5, 0.1) == 0.5
    x = heavy_tail_inverse_cdf(0.25, 0.5)
    # oracle: the density c/(t |log t|^{1+d}) with c = d (log 2)^d / 2
    # becomes c u^{-(1+d)} under u = -log t; integrate that from -log x
    delta = 0.5
    c = delta * math.log(2.0) ** delta / 2.0
    mass, err = quad(lambda u: c * u ** -(1.0 + delta), -math.log(x), np.inf)
    assert err < 1e-7
    assert abs(mass - 0.25) < 1e-8
    # the pdf matches the spec density on the lower branch
    ts = np.array([1e-6, 1e-3, 0.1, 0.4])
    assert np.allclose(heavy_tail_pdf(ts, delta), c / (ts * np.abs(np.log(ts)) ** 1.5))
    # closed-form cdf agrees with the quadrature too
    assert abs(heavy_tail_cdf(x, 0.5) - 0.25) < 1e-12


def test_heavy_tail_inverse_cdf_monotone_on_grid():
    u = np.linspace(1e-4, 1 - 1e-4, 1000)
    x = heavy_tail_inverse_cdf(u, 0.5)
    assert np.all(np.diff(x) >= 0)


@settings(max_examples=50, deadline=None)
@given(
    st.floats(min_value=1e-6, max_value=1 - 1e-6),
    st.floats(min_value=1e-6, max_value=1 - 1e-6),
    st.floats(min_value=0.05, max_value=0.5),
)
def test_heavy_tail_inverse_cdf_monotone_pairs(u1, u2, delta):
    lo, hi = min(u1, u2), max(u1, u2)
    assert heavy_tail_inverse_cdf(lo, delta) <= heavy_tail_inverse_cdf(hi, delta)


def test_heavy_tail_rejects_bad_u():
    with pytest.raises(ValueError):
        heavy_tail_inverse_cdf(0.0, 0.5)
    with pytest.raises(ValueError):
        heavy_tail_inverse_cdf(1.0, 0.5)


def test_heavy_tail_log_moment_estimate_grows_with_sample_size():
    spec = SplitSpec.heavy_tail(0.5)
    means = []
    for k, n in enumerate((10**3, 10**5)):
        lm = log_moment_diagnostics(spec, n, RngStream(100 + k))
        means.append(lm.mean_abs_log)
    # the log moment is not integrable: estimates blow up with sample size
    assert means[1] > 10 * means[0] or means[1] > 1e3


def test_log_moment_uniform_matches_exact_integral():
    # integral of -log x over (0,1) equals 1 exactly
    lm = log_moment_diagnostics(SplitSpec.uniform(), 10**6, RngStream(7))
    assert abs(lm.mean_abs_log - 1.0) < 0.01
    assert abs(lm.mean_abs_log1m - 1.0) < 0.01
    assert abs(lm.mean_abs_log - 1.0) < 4 * lm.se_abs_log


def test_log_moment_two_point_is_exact():
    lm = log_moment_diagnostics(SplitSpec.two_point(0.3, 0.7, 0.5), 10**4, RngStream(8))
    expected = (abs(math.log(0.3)) + abs(math.log(0.7))) / 2
    assert lm.mean_abs_log == pytest.approx(expected, rel=1e-15)
    assert lm.mean_abs_log1m == pytest.approx(expected, rel=1e-15)
    assert lm.se_abs_log == 0.0 and lm.se_abs_log1m == 0.0


def test_log_moment_beta_stable_across_sizes():
    a = log_moment_diagnostics(SplitSpec.make_beta(3, 3), 10**4, RngStream(9))
    b = log_moment_diagnostics(SplitSpec.make_beta(3, 3), 10**5, RngStream(10))
    comb = math.hypot(a.se_abs_log, b.se_abs_log)
    assert abs(a.mean_abs_log - b.mean_abs_log) < 4 * comb


@pytest.mark.parametrize(
    "spec",
    [
        SplitSpec.uniform(),
        SplitSpec.make_beta(3, 3),
        SplitSpec.two_point(0.25, 0.5, 0.5),
        SplitSpec.heavy_tail(0.5),
    ],
    ids=["uniform", "beta33", "two_point", "heavy_tail"],
)
def test_million_draws_strictly_inside_unit_interval(spec):
    draws = sample_array(spec, 10**6, RngStream(11))
    assert draws.min() > 0.0
    assert draws.max() < 1.0


def test_empirical_cdf_close_to_analytic():
    for spec, cdf in [
        (SplitSpec.uniform(), lambda x: x),
        (SplitSpec.make_beta(3, 3), lambda x: beta_dist.cdf(x, 3, 3)),
    ]:
        draws = np.sort(sample_array(spec, 10**5, RngStream(12)))
        emp = np.arange(1, len(draws) + 1) / len(draws)
        assert np.abs(emp - cdf(draws)).max() < 0.01


def test_heavy_tail_log_pair_exact_in_the_deep_tail():
    log_xi, log_1m = sample_log_pair(SplitSpec.heavy_tail(0.5), 10**5, RngStream(13))
    # magnitudes far beyond exp-representable range must appear
    assert min(log_xi.min(), log_1m.min()) < -1e4
    assert np.all(np.maximum(log_xi, log_1m) <= 0.0)


def test_spec_validation_errors():
    with pytest.raises(ValueError):
        SplitSpec.two_point(0.4, 0.4, 0.5)
    with pytest.raises(ValueError):
        SplitSpec.two_point(0.0, 0.5, 0.5)
    with pytest.raises(ValueError):
        SplitSpec.make_beta(0.0, 1.0)
    with pytest.raises(ValueError):
        SplitSpec.heavy_tail(0.6)
    with pytest.raises(ValueError):
        SplitSpec.joint_table([((0.2, 0.5, 0.8), 0.5)], d=3)  # probs sum to 0.5
    with pytest.raises(ValueError):
        SplitSpec.joint_table([((0.2, 0.5), 1.0)], d=3)  # wrong length


def test_config_roundtrip():
    specs = [
        SplitSpec.uniform(),
        SplitSpec.make_beta(2, 2),
        SplitSpec.two_point(0.3, 0.7, 0.25),
        SplitSpec.heavy_tail(0.25),
        SplitSpec.joint_table([((0.2, 0.5, 0.8), 0.5), ((0.8, 0.5, 0.2), 0.5)], d=3),
    ]
    for spec in specs:
        assert SplitSpec.from_config(spec.to_config()) == spec


def test_even_d_singular_risk_detection_and_warning():
    risky = SplitSpec.two_point(0.3, 0.7, 0.5)  # a + b = 1: equal counts cancel
    assert assumption2_violation_possible(risky, 4)
    assert not assumption2_violation_possible(risky, 5)
    safe = SplitSpec.two_point(0.3, 0.6, 0.5)
    assert not assumption2_violation_possible(safe, 4)
    assert not assumption2_violation_possible(SplitSpec.uniform(), 4)
    with pytest.warns(UserWarning, match="singular"):
        sample_vector(risky, 4, RngStream(14))
