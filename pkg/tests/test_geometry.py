"""Tests for the edge-chain geometry and shape coordinates."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polysub.geometry import (
    EdgeChain,
    angular_distance,
    edges_from_vertices,
    flatness_ratio,
    lift_to_d,
    max_side,
    signed_area,
    triangle_shape,
    triangle_shape_batch,
)

SQRT3 = math.sqrt(3.0)


# ---- independent oracles -------------------------------------------------


def shoelace_area(vertices: np.ndarray) -> float:
    """Classic vertex-based signed area, used as the reference."""
    v = np.asarray(vertices, dtype=float)
    rolled = np.roll(v, -1, axis=0)
    return 0.5 * float(np.sum(v[:, 0] * rolled[:, 1] - rolled[:, 0] * v[:, 1]))


def shape_by_exhaustive_labeling(vertices: np.ndarray) -> tuple[float, float]:
    """Enumerate all 6 vertex labelings, pick the first (in index order)
    whose side lengths satisfy s12 >= s31 >= s23, and apply the similarity
    sending B1 to (0,0) and B2 to (1,0) with non-negative apex height."""
    v = np.asarray(vertices, dtype=float)
    from itertools import permutations

    for (i, j, k) in sorted(permutations(range(3))):
        s12 = np.linalg.norm(v[j] - v[i])
        s31 = np.linalg.norm(v[i] - v[k])
        s23 = np.linalg.norm(v[k] - v[j])
        if s12 >= s31 >= s23:
            base = v[j] - v[i]
            apex = v[k] - v[i]
            g = float(apex @ base) / s12**2
            h = abs(float(base[0] * apex[1] - base[1] * apex[0])) / s12**2
            return g, h
    raise AssertionError("no valid labeling")


def random_convex_vertices(rng: np.random.Generator, d: int) -> np.ndarray:
    """Convex position via sorted angles on an ellipse."""
    ang = np.sort(rng.uniform(0, 2 * np.pi, d))
    while np.min(np.diff(ang, append=ang[0] + 2 * np.pi)) < 1e-3:
        ang = np.sort(rng.uniform(0, 2 * np.pi, d))
    a, b = rng.uniform(0.5, 2.0, 2)
    return np.column_stack([a * np.cos(ang), b * np.sin(ang)])


# ---- construction ---------------------------------------------------------


def test_square_edges():
    chain = edges_from_vertices([(0, 0), (1, 0), (1, 1), (0, 1)])
    assert np.allclose(chain.x, [1, 0, -1, 0])
    assert np.allclose(chain.y, [0, 1, 0, -1])
    assert chain.log_scale == 0.0


def test_right_triangle_edges():
    chain = edges_from_vertices([(0, 0), (1, 0), (0, 1)])
    assert np.allclose(chain.x, [1, -1, 0])
    assert np.allclose(chain.y, [0, 1, -1])


def test_collinear_vertices_rejected():
    with pytest.raises(ValueError):
        edges_from_vertices([(0, 0), (1, 0), (2, 0)])


def test_repeated_vertices_rejected():
    with pytest.raises(ValueError):
        edges_from_vertices([(0, 0), (1, 0), (1, 0), (0, 1)])


def test_nonconvex_rejected():
    with pytest.raises(ValueError):
        edges_from_vertices([(0, 0), (2, 0), (1, 0.2), (2, 2), (0, 2)])


def test_clockwise_convex_accepted():
    chain = edges_from_vertices([(0, 0), (0, 1), (1, 1), (1, 0)])
    assert signed_area(chain) == pytest.approx(-1.0)


def test_open_chain_rejected():
    with pytest.raises(ValueError):
        EdgeChain(x=np.array([1.0, 0.0, 0.5]), y=np.array([0.0, 1.0, -1.0]))


# ---- area / side / flatness ----------------------------------------------


def test_signed_area_examples():
    assert signed_area(edges_from_vertices([(0, 0), (1, 0), (1, 1), (0, 1)])) == pytest.approx(1.0)
    assert signed_area(edges_from_vertices([(0, 0), (1, 0), (0, 1)])) == pytest.approx(0.5)


def test_signed_area_matches_shoelace_on_random_chains():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        d = int(rng.integers(3, 9))
        verts = random_convex_vertices(rng, d)
        chain = edges_from_vertices(verts)
        ref = shoelace_area(verts)
        assert signed_area(chain) == pytest.approx(ref, rel=1e-12)


def test_signed_area_scale_correction():
    chain = edges_from_vertices([(0, 0), (1, 0), (1, 1), (0, 1)])
    scaled = EdgeChain(x=chain.x, y=chain.y, log_scale=math.log(3.0))
    assert signed_area(scaled) == pytest.approx(9.0)
    assert max_side(scaled) == pytest.approx(3.0)


def test_max_side_examples():
    assert max_side(edges_from_vertices([(0, 0), (1, 0), (1, 1), (0, 1)])) == pytest.approx(1.0)
    tri = edges_from_vertices([(0, 0), (1, 0), (0, 1)])
    assert max_side(tri) == pytest.approx(math.sqrt(2.0))
    rng = np.random.default_rng(5)
    verts = random_convex_vertices(rng, 6)
    chain = edges_from_vertices(verts)
    brute = max(np.linalg.norm(verts[(j + 1) % 6] - verts[j]) for j in range(6))
    assert max_side(chain) == pytest.approx(brute)


def test_flatness_examples():
    assert flatness_ratio(edges_from_vertices([(0, 0), (1, 0), (1, 1), (0, 1)])) == pytest.approx(1.0)
    eps = 1e-6
    thin = EdgeChain(x=np.array([1.0, -1.0, 0.0]), y=np.array([0.0, eps, -eps]))
    assert flatness_ratio(thin) == pytest.approx(eps / 2, rel=1e-9)
    equilateral = edges_from_vertices([(0, 0), (1, 0), (0.5, SQRT3 / 2)])
    assert flatness_ratio(equilateral) == pytest.approx(SQRT3 / 4, rel=1e-12)


def test_flatness_independent_of_log_scale():
    chain = edges_from_vertices([(0, 0), (1, 0), (0.3, 0.9)])
    scaled = EdgeChain(x=chain.x, y=chain.y, log_scale=-500.0)
    assert flatness_ratio(scaled) == flatness_ratio(chain)


# ---- angular metric --------------------------------------------------------


def test_angular_distance_examples():
    assert angular_distance([1, 0], [0, 1]) == pytest.approx(1.0)
    assert angular_distance([1, 1], [2, 2]) == pytest.approx(0.0, abs=1e-15)
    assert angular_distance([1, 0], [1, 1]) == pytest.approx(math.sqrt(2) / 2, rel=1e-12)


def test_angular_distance_resolves_tiny_angles():
    x = np.array([3.0, 4.0, 0.0])
    t = 1e-13
    y = x + t * np.array([-4.0, 3.0, 0.0]) / 5.0  # unit normal direction
    # small-angle: distance ~ t / |x|
    assert angular_distance(x, y) == pytest.approx(t / 5.0, rel=1e-3)


def test_angular_distance_zero_vector_rejected():
    with pytest.raises(ValueError):
        angular_distance([0, 0], [1, 0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=3, max_size=6))
def test_lift_to_d_zero_sum(xs):
    lifted = lift_to_d(xs)
    assert len(lifted) == len(xs) + 1
    assert abs(lifted.sum()) < 1e-9 * max(1.0, np.abs(lifted).max())


def test_lift_examples():
    assert np.allclose(lift_to_d([1.0, -1.0]), [1.0, -1.0, 0.0])
    assert np.allclose(lift_to_d([0.2, 0.3, 0.1]), [0.2, 0.3, 0.1, -0.6])


def test_lift_bound_on_angular_distance():
    rng = np.random.default_rng(77)
    for _ in range(1000):
        d = int(rng.integers(3, 9))
        x = rng.normal(size=d - 1)
        y = rng.normal(size=d - 1)
        delta = angular_distance(x, y)
        lifted = angular_distance(lift_to_d(x), lift_to_d(y))
        assert lifted**2 <= d * delta**2 + 1e-12


def test_flatness_bounded_by_angular_distance():
    rng = np.random.default_rng(88)
    for _ in range(500):
        d = int(rng.integers(3, 9))
        verts = random_convex_vertices(rng, d)
        chain = edges_from_vertices(verts)
        delta = angular_distance(chain.x, chain.y)
        assert flatness_ratio(chain) <= 0.5 * d * math.sqrt(delta) + 1e-12


# ---- triangle shape --------------------------------------------------------


def test_equilateral_shape():
    chain = edges_from_vertices([(0, 0), (1, 0), (0.5, SQRT3 / 2)])
    shape = triangle_shape(chain)
    assert shape.g == pytest.approx(0.5, abs=1e-12)
    assert shape.h == pytest.approx(SQRT3 / 2, rel=1e-12)


def test_shape_matches_exhaustive_labeling_oracle():
    verts = np.array([(0.0, 0.0), (1.0, 0.0), (0.75, 0.1)])
    expected = shape_by_exhaustive_labeling(verts)
    assert expected == pytest.approx((0.75, 0.1))
    shape = triangle_shape(edges_from_vertices(verts))
    assert (shape.g, shape.h) == pytest.approx(expected, rel=1e-12)
    rng = np.random.default_rng(99)
    for _ in range(300):
        verts = random_convex_vertices(rng, 3)
        want = shape_by_exhaustive_labeling(verts)
        got = triangle_shape(edges_from_vertices(verts))
        assert (got.g, got.h) == pytest.approx(want, rel=1e-10, abs=1e-12)


def test_shape_invariant_under_rotation():
    rng = np.random.default_rng(123)
    theta = math.radians(37.0)
    rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    for _ in range(100):
        verts = random_convex_vertices(rng, 3)
        s1 = triangle_shape(edges_from_vertices(verts))
        s2 = triangle_shape(edges_from_vertices(verts @ rot.T))
        assert (s2.g, s2.h) == pytest.approx((s1.g, s1.h), abs=1e-12)


def test_shape_range_and_height_identity():
    rng = np.random.default_rng(321)
    for _ in range(500):
        verts = random_convex_vertices(rng, 3)
        chain = edges_from_vertices(verts)
        shape = triangle_shape(chain)
        assert 0.5 - 1e-12 <= shape.g <= 1.0 + 1e-12
        assert -1e-12 <= shape.h <= SQRT3 / 2 + 1e-12
        assert shape.h == pytest.approx(2.0 * flatness_ratio(chain), abs=1e-12)


def test_shape_batch_matches_scalar():
    rng = np.random.default_rng(456)
    chains = [edges_from_vertices(random_convex_vertices(rng, 3)) for _ in range(200)]
    xs = np.stack([c.x for c in chains])
    ys = np.stack([c.y for c in chains])
    g, h = triangle_shape_batch(xs, ys)
    for i, c in enumerate(chains):
        s = triangle_shape(c)
        assert g[i] == pytest.approx(s.g, abs=1e-14)
        assert h[i] == pytest.approx(s.h, abs=1e-14)


def test_shape_requires_triangle():
    with pytest.raises(ValueError):
        triangle_shape(edges_from_vertices([(0, 0), (1, 0), (1, 1), (0, 1)]))
