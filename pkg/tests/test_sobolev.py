import numpy as np
import pytest
from scipy.integrate import quad
from scipy.interpolate import CubicSpline

from cornerwaves import sobolev as sb
from cornerwaves.benchmarks import norms
from cornerwaves.errors import DataError, ResolutionError

P = 2 * np.pi


def _chi(r):
    return np.cos(np.pi * r / 2) ** 2


@pytest.fixture(scope="module")
def fourier_rows():
    return norms(ks=(1, 2, 3, 4), s_values=(0.25, 0.5, 0.75), n=256)["rows"]


def test_constant_has_zero_seminorm():
    f = sb.CurveFunction(np.linspace(0, 2, 40), np.full(40, 3.0))
    assert sb.gagliardo_seminorm_sq(f, 0.5) == 0.0
    assert sb.gagliardo_norm(f, 0.5) == pytest.approx(np.sqrt(18.0))


def test_fourier_agreement(fourier_rows):
    for row in fourier_rows:
        assert row["rel_err"] <= 0.01, row


def test_fourier_multiplier_of_samples():
    f = sb.CurveFunction.periodic(lambda x: np.cos(3 * x), P, 64)
    ex = 2 * P * 3.0 * sb.fractional_integral_constant(0.5)
    assert sb.fourier_seminorm_sq(f.values, P, 0.5) == pytest.approx(ex, rel=1e-12)
    assert sb.fractional_integral_constant(0.5) == pytest.approx(np.pi / 2)
    assert sb.fractional_integral_constant(0.5 + 1e-6) == pytest.approx(np.pi / 2, rel=1e-4)


def test_monotone_in_frequency(fourier_rows):
    half = [r["numeric"] for r in fourier_rows if r["s"] == 0.5]
    assert np.all(np.diff(half) > 0)


def test_linear_function_oracle():
    x = np.linspace(0, 1, 20)
    assert sb.gagliardo_seminorm_sq(sb.CurveFunction(x, x), 0.5) == pytest.approx(1.0, rel=1e-10)
    g = x**2
    assert sb.gagliardo_seminorm_sq(sb.CurveFunction(g, g), 0.5) == pytest.approx(1.0, rel=1e-10)


def test_homogeneity_and_triangle():
    r = np.linspace(0, 3, 60)
    a = sb.CurveFunction(r, np.sin(2 * r))
    b = sb.CurveFunction(r, np.exp(-r) * r)
    na = sb.gagliardo_norm(a, 0.5, seminorm=True)
    nb = sb.gagliardo_norm(b, 0.5, seminorm=True)
    n3 = sb.gagliardo_norm(sb.CurveFunction(r, -3 * a.values), 0.5, seminorm=True)
    assert n3 == pytest.approx(3 * na, rel=1e-12)
    nab = sb.gagliardo_norm(sb.CurveFunction(r, a.values + b.values), 0.5, seminorm=True)
    assert nab <= na + nb


def test_l2_norm_is_exact_for_interpolant():
    r = np.linspace(0, 1, 17)
    assert sb.l2_norm_sq(sb.CurveFunction(r, r)) == pytest.approx(1 / 3, rel=1e-14)


def test_input_guards():
    r = np.linspace(0, 1, 10)
    with pytest.raises(ResolutionError):
        sb.gagliardo_seminorm_sq(sb.CurveFunction(r, r), 0.5)
    r = np.linspace(0, 1, 40)
    with pytest.raises(DataError):
        sb.gagliardo_seminorm_sq(sb.CurveFunction(r, r), 1.0)
    with pytest.raises(DataError):
        sb.CurveFunction(r[::-1], r)
    with pytest.raises(DataError):
        sb.tilde_half_norm(sb.CurveFunction.periodic(np.cos, P, 32))


def test_weighted_integral_oracles():
    rc = sb.tilde_half_norm(sb.CurveFunction.from_callable(lambda r: r * _chi(r), 1.0, 200, 3))
    assert rc.weighted == pytest.approx(quad(lambda r: r * _chi(r) ** 2, 0, 1)[0], rel=1e-3)
    assert not rc.diverges
    sq = sb.tilde_half_norm(sb.CurveFunction.from_callable(lambda r: np.sqrt(r) * _chi(r),
                                                           1.0, 200, 3))
    assert sq.weighted == pytest.approx(0.375, rel=1e-3)
    assert not sq.diverges and np.isfinite(sq.norm)
    assert sq.norm >= sq.seminorm


def test_divergence_flag_for_constant():
    one = sb.tilde_half_norm(sb.CurveFunction.from_callable(lambda r: 1 + 0 * r, 1.0, 200, 3))
    assert one.diverges and one.norm == np.inf


def test_h52_of_cubic():
    a, b, c, d = 0.3, -0.2, 0.5, 1.0
    x = np.linspace(0, 1, 30)
    spl = CubicSpline(x, a * x**3 + b * x**2 + c * x + d)
    out = sb.h52_norm(spl)
    poly = np.poly1d([a, b, c, d])
    h2 = sum(quad(lambda t: poly.deriv(k)(t) ** 2, 0, 1)[0] for k in range(3))
    assert out["h2_sq"] == pytest.approx(h2, rel=1e-10)
    # eta'' is linear with slope 6a: its H^{1/2} seminorm on [0, 1] is the slope squared
    assert out["half_sq"] == pytest.approx((6 * a) ** 2, rel=1e-8)
    sub = sb.h52_norm(spl, 0.2, 0.7)
    assert sub["norm"] < out["norm"]


def test_trace_constant_is_stable():
    c1 = sb.trace_constant_probe(10, h=0.1)["C"]
    c2 = sb.trace_constant_probe(10, h=0.05)["C"]
    assert np.isfinite(c1) and abs(c2 / c1 - 1) < 0.2


def test_trace_constant_negative_control():
    out = sb.trace_constant_probe(5, h=0.1, dirichlet_top=False)
    assert out["C"] == np.inf and out["diverging"] > 0
