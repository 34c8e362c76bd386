import numpy as np
import pytest

from cornerwaves import elliptic
from cornerwaves.elliptic import MixedBVPSpec, ScalarField
from cornerwaves.errors import DataError
from cornerwaves.geometry import BOTTOM, TOP, StripDomain
from cornerwaves.meshing import MeshSpec, triangulate


@pytest.fixture(scope="module")
def strip():
    return triangulate(StripDomain(np.pi, 1.0), MeshSpec(0.1, grading=1, resolve_depth=False))


def _top(mesh, fun):
    f = np.zeros(mesh.n_dofs)
    top = mesh.tag_dofs(TOP)
    f[top] = fun(mesh.nodes[top, 0])
    return f


def test_zero_data_gives_zero(strip):
    u = elliptic.solve_mixed(strip, MixedBVPSpec())
    assert np.max(np.abs(u.values)) == 0.0


def test_extension_of_one_is_one(strip, corner_domain_mesh):
    for m in (strip, corner_domain_mesh):
        u = elliptic.harmonic_extension(m, 1.0)
        np.testing.assert_allclose(u.values, 1.0, atol=1e-10)


@pytest.fixture(scope="module")
def corner_domain_mesh(meniscus_sim, meniscus):
    return meniscus_sim.evaluate(meniscus).mesh


def test_separation_of_variables(strip):
    k = 2
    u = elliptic.harmonic_extension(strip, _top(strip, lambda x: np.cos(k * x)))
    x, z = strip.nodes.T
    ex = np.cosh(k * (z + 1)) / np.cosh(k) * np.cos(k * x)
    assert np.max(np.abs(u.values - ex)) < 1e-4


def test_maximum_principle(strip):
    u = elliptic.harmonic_extension(strip, _top(strip, lambda x: np.sin(3 * x) + 0.5 * x))
    top = u.trace(TOP)
    assert u.values.max() <= top.max() + 1e-3
    assert u.values.min() >= top.min() - 1e-3


def test_linearity(strip):
    a = _top(strip, np.cos)
    b = _top(strip, lambda x: x**2)
    ua = elliptic.harmonic_extension(strip, a).values
    ub = elliptic.harmonic_extension(strip, b).values
    uab = elliptic.harmonic_extension(strip, 2 * a - 3 * b).values
    np.testing.assert_allclose(uab, 2 * ua - 3 * ub, atol=1e-11)


def test_dn_of_constant_vanishes(strip, corner_domain_mesh):
    for m in (strip, corner_domain_mesh):
        assert np.max(np.abs(elliptic.dn_operator(m, np.ones(m.n_dofs)).values)) < 1e-8


def test_dn_cosine_and_symmetry(strip):
    top = strip.tag_dofs(TOP)
    x = strip.nodes[top, 0]
    N = elliptic.dn_operator(strip, _top(strip, lambda x: np.cos(2 * x))).values
    ex = 2 * np.tanh(2.0) * np.cos(2 * x)
    assert np.sqrt(elliptic.trace_inner(strip, TOP, N - ex, N - ex)
                   / elliptic.trace_inner(strip, TOP, ex, ex)) < 5e-3
    fa, fb = _top(strip, np.sin), _top(strip, lambda x: np.exp(-x))
    Na = elliptic.dn_operator(strip, fa).values
    Nb = elliptic.dn_operator(strip, fb).values
    ab = elliptic.trace_inner(strip, TOP, Na, fb[top])
    ba = elliptic.trace_inner(strip, TOP, fa[top], Nb)
    assert abs(ab - ba) < 1e-10 * abs(ab)
    # positivity of the energy form
    assert elliptic.trace_inner(strip, TOP, Na, fa[top]) > 0


def test_flux_balance(strip):
    # Gauss: the total flux equals the integral of the source
    u = elliptic.laplace_inverse(strip, h=1.0)
    fl = elliptic.top_flux(strip, u, h=1.0)
    assert elliptic.trace_integral(strip, TOP, fl.values) == pytest.approx(np.pi, rel=1e-8)


def test_laplace_inverse_oracle(strip):
    # u = z (z + 2) / 2 - ... : Delta u = 1, u(0) = 0, du/dn_b = -u_z(-1) = 0
    u = elliptic.laplace_inverse(strip, h=1.0)
    z = strip.nodes[:, 1]
    np.testing.assert_allclose(u.values, z * (z + 2) / 2, atol=1e-10)


def test_neumann_zero_data(strip):
    u = elliptic.solve_neumann(strip)
    assert np.max(np.abs(u.values)) < 1e-12


def test_neumann_incompatible_data(strip):
    with pytest.raises(DataError):
        elliptic.solve_neumann(strip, f_top_flux=1.0)


def test_neumann_oracle(strip):
    # u = cos x cosh(z+1): flux through TOP is sinh(1) cos x
    u = elliptic.solve_neumann(strip, f_top_flux=lambda x, z: np.sinh(1.0) * np.cos(x))
    x, z = strip.nodes.T
    ex = np.cos(x) * np.cosh(z + 1)
    assert np.max(np.abs(u.values - ex - np.mean(u.values - ex))) < 1e-3


def test_error_norm_orders():
    def u(x, z):
        return np.cosh(z + 1.0) * np.cos(x)

    dom = StripDomain(np.pi, 1.0)
    hs, e1 = [], []
    for h in (0.4, 0.2):
        m = triangulate(dom, MeshSpec(h, grading=1, resolve_depth=False))
        e = elliptic.error_norms(elliptic.solve_mixed(m, MixedBVPSpec(f=u)), u)
        hs.append(m.h_max)
        e1.append(e["L2"])
    assert elliptic.observed_orders(hs, e1)[-1] > 2.5


def test_scalar_field_rejects_wrong_size(strip):
    with pytest.raises(ValueError):
        ScalarField(strip, np.zeros(3))
    assert BOTTOM != TOP
