import numpy as np
import pytest

from cornerwaves.dynamics import PhysicsParams, flat_contact_abscissa
from cornerwaves.errors import AngleGuardError, ConfigError, GeometryError
from cornerwaves.geometry import (BOTTOM, TOP, BottomProfile, CornerDomain, ParametricCurve,
                                  StripDomain, SurfaceCurve, arclength_resample, check_angle,
                                  contact_angle, contact_speed, curvature, graph_spline,
                                  second_fundamental_form)


def test_flat_surface_has_zero_curvature():
    s = SurfaceCurve(np.linspace(0, 3, 30), np.full(30, 0.7))
    assert np.max(np.abs(curvature(s, np.linspace(0, 3, 77)))) < 1e-14


def test_cosine_crest_curvature():
    A, k = 0.1, 2.0
    x = np.linspace(0, np.pi, 401)
    s = SurfaceCurve(x, A * np.cos(k * x), wall_slope=0.0, corner_slope=0.0)
    assert curvature(s, 0.0) == pytest.approx(A * k**2, rel=1e-3)
    assert second_fundamental_form(s, 0.0) ** 2 == pytest.approx((A * k**2) ** 2, rel=2e-3)


def test_circular_cap_curvature():
    R = 2.0
    x = np.linspace(-0.9 * R, 0.9 * R, 601)
    s = SurfaceCurve(x, np.sqrt(R**2 - x**2), wall_slope=None)
    xs = np.linspace(-0.8 * R, 0.8 * R, 50)
    np.testing.assert_allclose(s.curvature(xs), 1 / R, rtol=1e-4)


def test_parametric_curve_matches_graph_convention():
    R = 1.5
    th = np.linspace(0.3, np.pi - 0.3, 201)[::-1]
    pts = R * np.column_stack([np.cos(th), np.sin(th)])
    c = ParametricCurve(pts)
    np.testing.assert_allclose(c.curvature()[5:-5], 1 / R, rtol=1e-7)
    t, n = c.frame()
    assert np.all(n[:, 1] > 0)
    fs, fss = c.d_ds(pts[:, 0])
    np.testing.assert_allclose(fs[5:-5], t[5:-5, 0], atol=1e-7)


def test_surface_frames_flat():
    s = SurfaceCurve(np.linspace(0, 1, 20), np.zeros(20))
    np.testing.assert_allclose(s.tangent(0.5), [-1.0, 0.0])
    np.testing.assert_allclose(s.normal(0.5), [0.0, 1.0])


def test_bottom_frames():
    flat = BottomProfile.flat(1.0)
    np.testing.assert_allclose(flat.tangent(0.3), [1.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(flat.normal(0.3), [0.0, -1.0], atol=1e-15)
    a = 0.3
    b = BottomProfile(a, 2.0, 4.0, 1.0)
    np.testing.assert_allclose(b.tangent(1.0), [np.cos(a), -np.sin(a)], atol=1e-14)
    grad = np.array([-b.slope(1.0), 1.0])
    np.testing.assert_allclose(b.normal(1.0) + grad / np.linalg.norm(grad), 0.0, atol=1e-14)


def test_bottom_blend_is_c2():
    b = BottomProfile(np.pi / 12, 2.5, 5.0, 1.0)
    for x0 in (2.5, 5.0):
        for nu in range(3):
            lo, hi = b.derivative(x0 - 1e-9, nu), b.derivative(x0 + 1e-9, nu)
            assert abs(lo - hi) < 1e-6


def test_bottom_rejects_bad_parameters():
    with pytest.raises(ConfigError):
        BottomProfile(np.pi / 2, 1.0, 2.0, 1.0)


def test_flat_water_contact_angle_equals_beach_angle(beach):
    c = flat_contact_abscissa(beach, 0.0)
    x = np.linspace(c, 8.0, 40)
    dom = CornerDomain(SurfaceCurve(x, np.zeros_like(x)), beach)
    assert contact_angle(dom) == pytest.approx(np.pi / 12, abs=1e-12)


def test_domain_requires_attachment(beach):
    x = np.linspace(0.5, 8.0, 40)
    with pytest.raises(GeometryError):
        CornerDomain(SurfaceCurve(x, np.zeros_like(x)), beach)


def test_contact_speed_values_and_sign():
    ph = PhysicsParams(sigma=1.0, beta_c=1.0, omega_s=np.pi / 12)
    assert contact_speed(np.pi / 12, ph) == 0.0
    assert contact_speed(np.pi / 6, ph) == pytest.approx(np.cos(np.pi / 12) - np.cos(np.pi / 6))
    assert contact_speed(np.pi / 6, ph) == pytest.approx(0.09990, abs=1e-5)
    assert contact_speed(0.1, ph) < 0


def test_angle_guard():
    assert check_angle(0.2, 1e-3) == 0.2
    with pytest.raises(AngleGuardError):
        check_angle(np.pi / 6 + 1e-3, 1e-3)
    with pytest.raises(AngleGuardError):
        check_angle(0.0, 1e-3)


def test_resample_flat_and_cosine():
    x = np.linspace(1.0, 4.0, 31)
    flat = SurfaceCurve(x, np.zeros_like(x))
    r = arclength_resample(flat, 31)
    np.testing.assert_allclose(r.x, x, atol=1e-12)
    r = arclength_resample(flat, 13)
    np.testing.assert_allclose(np.diff(r.x), 3.0 / 12, atol=1e-12)
    xc = np.linspace(0, np.pi, 200)
    cs = SurfaceCurve(xc, 0.2 * np.cos(xc), corner_slope=0.0)
    assert arclength_resample(cs, 80).length == pytest.approx(cs.length, rel=1e-5)


def test_graph_spline_end_slopes():
    x = np.linspace(0, 1, 12)
    s = graph_spline(x, x**2, wall_slope=2.0, corner_slope=0.0)
    assert s(0.0, 1) == pytest.approx(0.0)
    assert s(1.0, 1) == pytest.approx(2.0)


def test_strip_domain_volume():
    dom = StripDomain(np.pi, 1.0, lambda x: 0.1 * np.cos(x))
    assert dom.volume == pytest.approx(np.pi, rel=1e-12)
    assert TOP != BOTTOM
