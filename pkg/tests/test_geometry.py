import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from markov_abstraction.geometry import BandMap, Box, partition_uniform, support_recursion, truncated_domain


def test_box_basics():
    b = Box([0.0, 1.0], [2.0, 4.0])
    assert b.dim == 2
    assert b.volume == 6.0
    assert b.diameter == pytest.approx(math.sqrt(13))
    np.testing.assert_allclose(b.center, [1.0, 2.5])
    assert Box.from_dict(b.to_dict()) == b
    assert hash(Box.from_dict(b.to_dict())) == hash(b)
    with pytest.raises(ValueError):
        Box([1.0], [1.0])


def test_box_set_operations():
    a, b = Box([0.0], [1.0]), Box([0.5], [2.0])
    assert a.hull(b) == Box([0.0], [2.0])
    assert a.intersect(b) == Box([0.5], [1.0])
    assert a.intersect(Box([3.0], [4.0])) is None
    assert Box([0.2], [0.8]).issubset(a)


def test_band_contains_and_image():
    band = BandMap([[1.2]], [0.0], [0.24])
    assert band.contains(np.array([1.3]), np.array([1.0]))
    assert not band.contains(np.array([1.5]), np.array([1.0]))
    lo, hi = band.image_bounds([0.0], [1.0])
    np.testing.assert_allclose([lo[0], hi[0]], [-0.24, 1.44])


def test_identity_band_fixed_point():
    band = BandMap([[1.0]], [0.0], [0.0])
    sup = support_recursion(band, Box([0.0], [1.0]), 6)
    assert len(sup) == 7
    for s in sup:
        assert s == Box([0.0], [1.0])


def _closed_form(a, alpha, sigma=0.1, n=5):
    lo, hi = 0.0, 1.0
    for _ in range(n):
        lo, hi = a * lo - alpha * sigma, a * hi + alpha * sigma
    return lo, hi


@pytest.mark.parametrize("a", [1.2, 0.8])
def test_support_recursion_matches_closed_form(a):
    alpha = 2.4
    band = BandMap([[a]], [0.0], [alpha * 0.1])
    sup = support_recursion(band, Box([0.0], [1.0]), 5)
    lo, hi = _closed_form(a, alpha)
    assert sup[5].lower[0] == pytest.approx(lo)
    assert sup[5].upper[0] == pytest.approx(hi)


def test_support_recursion_rejects_non_band():
    with pytest.raises(TypeError):
        support_recursion("not a band", Box([0.0], [1.0]), 3)


def test_truncated_domain_examples():
    assert truncated_domain([Box([0.0], [1.0]), Box([-1.0], [2.0])]) == Box([-1.0], [2.0])
    b = Box([0.0, 0.0], [1.0, 2.0])
    assert truncated_domain([b]) == b


def test_truncated_domain_a12():
    # Hull over t = 0..5 of the a = 1.2, alpha = 2.4 band; equals Lambda_5 since the supports grow.
    band = BandMap([[1.2]], [0.0], [0.24])
    sup = support_recursion(band, Box([0.0], [1.0]), 5)
    dom = truncated_domain(sup)
    assert dom == sup[5]
    assert dom.lower[0] == pytest.approx(-0.7442 * 2.4, abs=1e-3)
    assert dom.upper[0] == pytest.approx(2.4883 + 0.7442 * 2.4, abs=1e-3)


def test_partition_examples():
    p = partition_uniform(Box([0.0], [1.0]), cells_per_axis=[4])
    np.testing.assert_allclose(p.cell_lower[:, 0], [0, 0.25, 0.5, 0.75])
    assert p.delta == pytest.approx(0.25)
    assert p.sink_index == 4
    q = partition_uniform(Box([0.0, 0.0], [1.0, 1.0]), cells_per_axis=[2, 2])
    assert q.n == 4
    assert q.delta == pytest.approx(math.sqrt(2) / 2)
    r = partition_uniform(Box([0.0], [1.0]), target_delta=0.3)
    assert r.n == 4 and r.delta == pytest.approx(0.25)


def test_partition_boundaries_half_open():
    p = partition_uniform(Box([0.0], [1.0]), cells_per_axis=[4])
    idx = p.locate(np.array([[0.0], [0.25], [0.5], [1.0], [1.0001], [-0.1]]))
    np.testing.assert_array_equal(idx, [0, 1, 2, 3, 4, 4])


def test_partition_coarse_target_warns():
    with pytest.warns(UserWarning):
        p = partition_uniform(Box([0.0], [1.0]), target_delta=5.0)
    assert p.n == 1


@given(st.lists(st.integers(1, 5), min_size=1, max_size=3), st.integers(0, 10**6))
def test_partition_tiles_domain(counts, seed):
    d = len(counts)
    rng = np.random.default_rng(seed)
    lo = rng.uniform(-2, 0, d)
    dom = Box(lo, lo + rng.uniform(0.5, 3, d))
    p = partition_uniform(dom, cells_per_axis=counts)
    assert p.volumes.sum() == pytest.approx(dom.volume, rel=1e-12)
    pts = dom.lower + rng.random((200, d)) * dom.widths
    idx = p.locate(pts)
    assert np.all(idx < p.n)
    inside = np.all((pts >= p.cell_lower[idx]) & (pts <= p.cell_upper[idx]), axis=-1)
    assert inside.all()
    assert np.all(p.diameters <= p.delta + 1e-12)


@given(st.floats(0.05, 1.0), st.integers(1, 3))
def test_target_delta_respected(target, d):
    dom = Box(np.zeros(d), np.full(d, 1.7))
    assume(target < dom.diameter)
    p = partition_uniform(dom, target_delta=target)
    assert p.delta <= target * (1 + 1e-9)


bands = st.tuples(st.floats(-1.5, 1.5).filter(lambda a: abs(a) > 0.05), st.floats(-1, 1), st.floats(0, 0.5))


@given(bands, st.floats(-1, 1), st.floats(0.1, 2), st.floats(0, 0.5), st.floats(0, 0.5), st.integers(1, 8))
def test_support_recursion_monotone(band, lo, w, shrink_lo, shrink_hi, n):
    a, b, h = band
    bm = BandMap([[a]], [b], [h])
    big = Box([lo], [lo + w])
    small = Box([lo + shrink_lo * w / 2], [lo + w - shrink_hi * w / 2])
    for s, l in zip(support_recursion(bm, small, n), support_recursion(bm, big, n)):
        assert s.issubset(l, atol=1e-9)


@given(bands, st.floats(-1, 1), st.floats(0.1, 2), st.integers(3, 10))
def test_support_trichotomy_persists(band, lo, w, n):
    a, b, h = band
    sup = support_recursion(BandMap([[a]], [b], [h]), Box([lo], [lo + w]), n)
    tol = 1e-9
    for t0 in range(n - 1):
        if sup[t0].issubset(sup[t0 + 1], atol=tol):
            for t in range(t0, n):
                assert sup[t].issubset(sup[t + 1], atol=tol * 10 ** (t - t0 + 1))
        if sup[t0 + 1].issubset(sup[t0], atol=tol):
            for t in range(t0, n):
                assert sup[t + 1].issubset(sup[t], atol=tol * 10 ** (t - t0 + 1))


def test_growing_supports_hull_is_last():
    band = BandMap([[1.0]], [0.0], [0.1])
    sup = support_recursion(band, Box([0.0], [1.0]), 4)
    assert truncated_domain(sup) == sup[-1]
