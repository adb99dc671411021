import numpy as np
import pytest
from hypothesis import given, strategies as st

from levyhjb.errors import BadParams, DeltaTooLarge, NotOnBoundary
from levyhjb.geometry import dilate, exterior_ball_check, make_domain, proximal_normal

DOMAINS = [
    make_domain("ball", [0.0, 0.0], radius=1.0),
    make_domain("interval", 0.0, halfwidth=1.0),
    make_domain("rounded_box", [0.0, 0.0], halfwidths=[1.0, 0.6], corner_radius=0.3),
    make_domain("ball", [0.5, -0.2, 0.1], radius=0.7),
]


def test_ball_closed_forms():
    b = make_domain("ball", [0.0, 0.0], radius=1.0)
    assert b.signed_distance(np.array([0.0, 0.0])) == pytest.approx(1.0)
    assert b.signed_distance(np.array([2.0, 0.0])) == pytest.approx(-1.0)
    assert b.signed_distance(np.array([np.cos(0.3), np.sin(0.3)])) == pytest.approx(0.0, abs=1e-15)


def test_interval_distance():
    assert make_domain("interval", 0.0, halfwidth=1.0).dist_to_complement(np.array([0.25])) == pytest.approx(0.75)


def test_dilation_examples():
    assert dilate(make_domain("ball", [0.0, 0.0], radius=1.0), 0.1).radius == pytest.approx(1.1)
    iv = dilate(make_domain("interval", 0.0, halfwidth=1.0), 0.05)
    assert iv.signed_distance(np.array([1.05])) == pytest.approx(0.0, abs=1e-15)
    assert iv.signed_distance(np.array([-1.05])) == pytest.approx(0.0, abs=1e-15)
    d = make_domain("ball", [0.0, 0.0], radius=1.0)
    with pytest.raises(DeltaTooLarge):
        dilate(d, d.eta / 2)


def test_prox_radius_in_unit_interval():
    for d in DOMAINS:
        assert 0 < d.eta < 1


def test_normals():
    assert np.allclose(proximal_normal(make_domain("ball", [0.0, 0.0], radius=1.0), [1.0, 0.0]), [1.0, 0.0])
    assert np.allclose(proximal_normal(make_domain("interval", 0.0, halfwidth=1.0), [-1.0]), [-1.0])
    with pytest.raises(NotOnBoundary):
        proximal_normal(make_domain("interval", 0.0, halfwidth=1.0), [0.5])


def test_rounded_box_corner_normal_matches_finite_differences():
    d = make_domain("rounded_box", [0.0, 0.0], halfwidths=[1.0, 0.6], corner_radius=0.3)
    arc_center = np.array([0.7, 0.3])
    x = arc_center + 0.3 * np.array([np.cos(np.pi / 4), np.sin(np.pi / 4)])
    n = proximal_normal(d, x)
    h = 1e-6
    fd = np.array([(d.signed_distance(x - h * e) - d.signed_distance(x + h * e)) / (2 * h) for e in np.eye(2)])
    assert np.allclose(n, fd / np.linalg.norm(fd), atol=1e-6)
    assert np.allclose(n, (x - arc_center) / 0.3, atol=1e-12)


def test_exterior_ball_examples():
    ball = make_domain("ball", [0.0, 0.0], radius=1.0)
    assert exterior_ball_check(ball, [1.0, 0.0], 0.5)
    assert not exterior_ball_check(ball, [1.0, 0.0], 0.5, inward=True)
    iv = make_domain("interval", 0.0, halfwidth=1.0)
    assert exterior_ball_check(dilate(iv, 0.05), [1.05], iv.eta / 2)


def test_bad_parameters():
    with pytest.raises(BadParams):
        make_domain("rounded_box", [0.0, 0.0], halfwidths=[1.0, 1.0])
    with pytest.raises(BadParams):
        make_domain("hexagon", [0.0, 0.0])


@pytest.mark.parametrize("dom", DOMAINS, ids=["ball", "interval", "rounded_box", "ball3d"])
def test_sign_consistency_and_lipschitz(dom, rng):
    lo, hi = dom.bounding_box
    span = hi - lo
    x = lo - 0.5 * span + 2 * span * rng.random((10_000, dom.dim))
    y = lo - 0.5 * span + 2 * span * rng.random((10_000, dom.dim))
    sx = dom.signed_distance(x)
    assert np.array_equal(sx > 0, dom.dist_to_complement(x) > 0)
    ratio = np.abs(sx - dom.signed_distance(y)) / np.linalg.norm(x - y, axis=1)
    assert np.max(ratio) <= 1 + 1e-9


@pytest.mark.parametrize("dom", DOMAINS[:3], ids=["ball", "interval", "rounded_box"])
def test_boundary_points_are_on_the_boundary(dom):
    pts = dom.boundary_points(100)
    assert np.max(np.abs(dom.signed_distance(pts))) < 1e-9


@given(st.floats(0.01, 0.49))
def test_dilation_shifts_signed_distance(frac):
    dom = make_domain("rounded_box", [0.0, 0.0], halfwidths=[1.0, 0.6], corner_radius=0.3)
    big = dilate(dom, frac * dom.eta)
    pts = np.random.default_rng(3).uniform(-2, 2, (500, 2))
    outside_or_near = dom.signed_distance(pts) > -dom.eta / 2
    # dilation adds delta to the signed distance wherever the projection is unique
    diff = big.signed_distance(pts) - dom.signed_distance(pts)
    assert np.allclose(diff[outside_or_near], frac * dom.eta, atol=1e-12)


def test_erosion_stays_inside(rng):
    dom = make_domain("ball", [0.0, 0.0], radius=1.0)
    small = dilate(dom, -0.2)
    x = small.sample_interior(1000, rng)
    assert np.all(dom.signed_distance(x) >= 0.2 - 1e-12)
