import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import ndtr

from markov_abstraction.quadrature import (QuadratureError, QuadratureSpec, gauss_legendre_unit, integrate_boxes,
                                           integrate_cell)


def test_constant_one():
    val = integrate_boxes(lambda x, o: np.ones(x.shape[:-1]), [0.0], [1.0])
    assert val[0] == pytest.approx(1.0, abs=1e-15)


def test_degree_15_exact():
    rng = np.random.default_rng(3)
    c = rng.normal(size=16)
    poly = np.polynomial.Polynomial(c)
    exact = poly.integ()(1.3) - poly.integ()(-0.4)
    nodes, weights = gauss_legendre_unit(8, 1)
    single = 1.7 * weights @ poly(-0.4 + 1.7 * nodes[:, 0])
    assert single == pytest.approx(exact, rel=1e-13, abs=1e-13)
    val = integrate_boxes(lambda x, o: poly(x[..., 0]), [-0.4], [1.3])[0]
    assert val == pytest.approx(exact, rel=1e-13, abs=1e-13)


def test_gaussian_mass_against_cdf():
    sigma = 0.1
    exact = ndtr(6.0) - ndtr(-6.0)
    f = lambda x, o: np.exp(-0.5 * (x[..., 0] / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))
    val = integrate_boxes(f, [-0.6], [0.6], QuadratureSpec(tol=1e-12))[0]
    assert val == pytest.approx(exact, abs=1e-11)
    assert val > 0.99999999


def test_unit_rule_shape_and_weights():
    nodes, weights = gauss_legendre_unit(5, 3)
    assert nodes.shape == (125, 3)
    assert weights.sum() == pytest.approx(1.0)
    assert np.all((nodes > 0) & (nodes < 1))


def test_vector_integrand():
    f = lambda x, o: np.stack([np.ones(x.shape[:-1]), x[..., 0], x[..., 1] ** 2], axis=-1)
    val = integrate_boxes(f, [[0.0, 0.0]], [[2.0, 1.0]])
    assert val.shape == (1, 3)
    np.testing.assert_allclose(val[0], [2.0, 2.0, 2.0 / 3.0], rtol=1e-13)


def test_batched_boxes_and_owner():
    lo = np.array([[0.0], [1.0], [2.0]])
    hi = lo + 1.0
    scale = np.array([1.0, 2.0, 3.0])
    val = integrate_boxes(lambda x, o: scale[o][:, None] * np.ones(x.shape[:-1]), lo, hi)
    np.testing.assert_allclose(val, scale)


def test_nonconvergence_raises_with_box_index():
    spec = QuadratureSpec(points=2, max_depth=1, tol=1e-14)
    f = lambda x, o: np.sin(200 * x[..., 0])
    with pytest.raises(QuadratureError) as err:
        integrate_boxes(f, [[0.0], [0.0]], [[1e-6], [3.0]], spec)
    assert err.value.box_index == 1
    assert err.value.error_estimate > 0


def test_integrate_cell_returns_error():
    val, err = integrate_cell(lambda p: np.exp(p[:, 0]), ([0.0], [1.0]))
    assert val == pytest.approx(math.e - 1, rel=1e-13)
    assert err >= 0


def test_spec_validation():
    with pytest.raises(ValueError):
        QuadratureSpec(points=0)
    with pytest.raises(ValueError):
        QuadratureSpec(tol=-1.0)


def _gauss_bump(c, w):
    return lambda x, o: np.exp(-np.sum((x - c) ** 2, axis=-1) / w**2)


@given(st.floats(0.05, 0.95), st.floats(0.05, 0.95), st.floats(0.05, 0.5), st.integers(1, 4))
def test_additivity(cx, split, width, pieces):
    f = _gauss_bump(np.array([cx]), width)
    whole = integrate_boxes(f, [0.0], [1.0])[0]
    edges = np.sort(np.concatenate([[0.0, 1.0], np.linspace(split / 2, split, pieces)]))
    edges = np.unique(edges)
    parts = integrate_boxes(f, edges[:-1, None], edges[1:, None]).sum()
    assert abs(whole - parts) <= 2 * 1e-8 * (len(edges))


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.1, 0.9), st.floats(0.05, 0.5))
def test_linearity(a, b, c, w):
    f = _gauss_bump(np.array([c, 1 - c]), w)
    g = lambda x, o: np.cos(3 * x[..., 0]) * x[..., 1]
    lo, hi = [[0.0, 0.0]], [[1.0, 1.0]]
    combo = integrate_boxes(lambda x, o: a * f(x, o) + b * g(x, o), lo, hi)[0]
    sep = a * integrate_boxes(f, lo, hi)[0] + b * integrate_boxes(g, lo, hi)[0]
    assert abs(combo - sep) <= 1e-8 * (1 + abs(a) + abs(b))
