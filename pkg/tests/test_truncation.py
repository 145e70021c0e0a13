import numpy as np
import pytest
from hypothesis import given, strategies as st

from markov_abstraction import Box, linear_gaussian_1d
from markov_abstraction.geometry import support_recursion, truncated_domain
from markov_abstraction.kernels import Kernel, std_normal_pdf
from markov_abstraction.oracle import AnalyticLinGauss
from markov_abstraction.truncation import kappa, truncated_propagate, truncation_error


def _direct_sum(t, m):
    return sum(m**k for k in range(t))


def test_kappa_examples():
    assert kappa(7, 1.0) == 7
    assert kappa(5, 1 / 1.2) == pytest.approx(_direct_sum(5, 1 / 1.2))
    assert round(kappa(5, 1 / 1.2), 4) == 3.5887
    assert round(kappa(10, 1.25), 3) == 33.253
    assert kappa(0, 0.5) == 0.0
    assert kappa(3, 1.0 + 1e-12) == 3.0


@given(st.integers(0, 60), st.floats(0.01, 3.0))
def test_kappa_recursion(t, m):
    assert kappa(t + 1, m) == pytest.approx(1 + m * kappa(t, m), rel=1e-9)


def test_truncation_examples():
    eps = std_normal_pdf(2.4) / 0.1
    sched = truncation_error(eps, 0.0, 1 / 1.2, 5)
    for t in range(6):
        assert sched[t] == pytest.approx(kappa(t, 1 / 1.2) * eps)
    assert round(sched[5], 4) == pytest.approx(0.8036, abs=1e-4)
    zero = truncation_error(0.0, 0.0, 0.9, 8)
    assert all(v == 0 for v in zero.values)


@given(st.floats(0, 10), st.floats(0, 10), st.floats(0.05, 2.0), st.integers(0, 40))
def test_closed_form_matches_recursion(eps, eps0, m, n):
    sched = truncation_error(eps, eps0, m, n)
    for t in range(n + 1):
        closed = sched.closed_form(t)
        assert abs(closed - sched[t]) <= 1e-10 * max(1.0, abs(closed))


def test_invalid_inputs():
    with pytest.raises(ValueError):
        truncation_error(-1.0, 0.0, 1.0, 3)
    with pytest.raises(ValueError):
        kappa(-1, 0.5)


@pytest.mark.parametrize("a", [1.2, 0.8])
def test_analytic_density_small_outside_supports(a):
    alpha, sigma = 2.4, 0.1
    k, init = linear_gaussian_1d(a, 0.0, sigma, alpha, Box([0.0], [1.0]))
    sup = support_recursion(k.band, init.support, 5)
    sched = truncation_error(k.epsilon_tail, 0.0, k.m_f, 5)
    orc = AnalyticLinGauss(a, 0.0, sigma, 0.0, 1.0)
    for t in range(1, 6):
        lo, hi = sup[t].lower[0], sup[t].upper[0]
        x = np.concatenate([np.linspace(lo - 3, lo, 3000, endpoint=False), np.linspace(hi, hi + 3, 3000)[1:]])
        assert orc.density(t, x).max() <= sched[t]


def test_mu_matches_analytic_within_epsilon():
    k, init = linear_gaussian_1d(1.2, 0.0, 0.1, 2.4, Box([0.0], [1.0]))
    dom = truncated_domain(support_recursion(k.band, init.support, 5))
    nodes, weights, mus = truncated_propagate(k, init, dom, 5, points_per_axis=1600)
    sched = truncation_error(k.epsilon_tail, 0.0, k.m_f, 5)
    orc = AnalyticLinGauss(1.2, 0.0, 0.1, 0.0, 1.0)
    for t in range(1, 6):
        assert np.max(np.abs(mus[t] - orc.density(t, nodes))) <= sched[t]


def test_mu0_is_indicator_restriction():
    k, init = linear_gaussian_1d(1.2, 0.0, 0.1, 2.4, Box([0.2], [0.6]))
    nodes, _, mus = truncated_propagate(k, init, Box([-1.0], [2.0]), 0, points_per_axis=800)
    outside = (nodes < 0.2) | (nodes > 0.6)
    assert np.all(mus[0][outside] == 0)
    assert np.allclose(mus[0][~outside], 2.5)


def test_mass_constant_without_leakage():
    # Kernel supported on [0, 1] for every s in [0, 1]: a tent density, so nothing leaves.
    def density(x, s):
        x = np.asarray(x)[..., 0]
        return np.where((x >= 0) & (x <= 1), 2 * (1 - np.abs(2 * x - 1)), 0.0) * np.ones_like(np.asarray(s)[..., 0])

    k = Kernel(dim=1, density=density, lambda_f=4.0, m_f=2.0)
    _, init = linear_gaussian_1d(1.0, 0.0, 0.1, 2.0, Box([0.0], [1.0]))
    nodes, weights, mus = truncated_propagate(k, init, Box([0.0], [1.0]), 4, points_per_axis=800)
    masses = [float(weights @ m) for m in mus]
    np.testing.assert_allclose(masses, 1.0, atol=1e-6)
