import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy.integrate import quad
from scipy.special import k0

from kreinlab.grid import build_grid, extend_to_origin, inner_product


def test_uniform_grid_nodes():
    g = build_grid(1.0, 2.0, 16, 1.0)
    assert_allclose(g.nodes, np.linspace(1.0, 2.0, 16), rtol=0, atol=1e-14)
    assert g.nodes[1] == pytest.approx(1.0667, abs=1e-4)


def test_graded_grid_clusters_at_obstacle():
    g = build_grid(1.0, 20.0, 400, 3.0)
    h = g.spacing
    assert np.argmin(h) == 0
    assert np.all(np.diff(h) > 0)
    assert g.nodes[0] == 1.0 and g.nodes[-1] == 20.0


def test_whole_plane_grid_starts_off_origin():
    g = build_grid(0.0, 20.0, 400, 1.0)
    assert g.is_whole_plane
    assert g.nodes[0] > 0
    assert g.nodes[-1] == 20.0
    assert_allclose(g.nodes[0], 0.5 * (g.nodes[1] - g.nodes[0]), rtol=1e-12)


@pytest.mark.parametrize(
    "args",
    [
        (1.0, 2.0, 15, 1.0),
        (1.0, 1.0, 64, 1.0),
        (2.0, 1.0, 64, 1.0),
        (-1.0, 2.0, 64, 1.0),
        (1.0, float("nan"), 64, 1.0),
        (1.0, float("inf"), 64, 1.0),
        (1.0, 2.0, 64, 0.5),
        (1.0, 2.0, 64.5, 1.0),
    ],
)
def test_build_grid_rejects_bad_input(args):
    with pytest.raises(ValueError):
        build_grid(*args)


@pytest.mark.parametrize("r_inner,R,N,grading", [(1.0, 30.0, 600, 3.0), (0.0, 20.0, 64, 1.0), (1.0, 5.0, 64, 2.0)])
def test_quadrature_consistency(r_inner, R, N, grading):
    g = build_grid(r_inner, R, N, grading)
    assert np.all(g.weights > 0)
    exact1 = (R**2 - r_inner**2) / 2
    assert abs(g.weights.sum() - exact1) / exact1 < 1e-6
    exact_r = (R**3 - r_inner**3) / 3
    assert abs(g.integrate(g.nodes) - exact_r) / exact_r < 1e-4


def test_grid_is_immutable():
    g = build_grid(1.0, 2.0, 16)
    with pytest.raises(ValueError):
        g.nodes[0] = 3.0
    with pytest.raises(ValueError):
        g.weights[0] = 3.0


def test_inner_product_unit_vectors():
    g = build_grid(1.0, 3.0, 32, 2.0)
    for k in (0, 7, 31):
        e = np.zeros(g.size)
        e[k] = 1.0
        assert inner_product(e, e, g) == g.weights[k]


def test_inner_product_of_ones_on_unit_annulus():
    g = build_grid(1.0, 2.0, 64, 1.0)
    ones = np.ones(g.size)
    assert inner_product(ones, ones, g) == pytest.approx(1.5, rel=1e-12)


def test_inner_product_bessel_norm_matches_quadrature():
    g = build_grid(1.0, 40.0, 4000, 3.0)
    u = k0(g.nodes) / k0(1.0)
    ref, _ = quad(lambda r: (k0(r) / k0(1.0)) ** 2 * r, 1.0, np.inf, epsabs=1e-13)
    assert abs(inner_product(u, u, g) - ref) < 1e-5


def test_inner_product_length_mismatch():
    g = build_grid(1.0, 2.0, 16)
    with pytest.raises(ValueError):
        inner_product(np.ones(15), np.ones(16), g)


@settings(max_examples=40, deadline=None)
@given(st.integers(16, 80), st.floats(1.0, 4.0), st.integers(0, 2**31 - 1))
def test_inner_product_symmetric_and_positive(N, grading, seed):
    g = build_grid(1.0, 10.0, N, grading)
    rng = np.random.default_rng(seed)
    u, v = rng.standard_normal((2, N))
    assert inner_product(u, v, g) == inner_product(v, u, g)
    assert inner_product(u, u, g) > 0


def test_extend_to_origin_matches_exterior_cells():
    ext = build_grid(1.0, 10.0, 100, 3.0)
    whole = extend_to_origin(ext, 40)
    assert whole.is_whole_plane
    assert_allclose(whole.nodes[40:], ext.nodes, rtol=0, atol=0)
    assert_allclose(whole.weights[41:], ext.weights[1:], rtol=1e-13)
    assert whole.weights.sum() == pytest.approx(50.0, rel=1e-12)
    assert math.isclose(whole.nodes[0], 1.0 / 80)
