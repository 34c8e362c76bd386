import numpy as np
import pytest

from cornerwaves import elliptic, energy
from cornerwaves.calculus_audit import top_curve
from cornerwaves.dynamics import PhysicsParams, perturbed_state, run
from cornerwaves.energy import EnergyReference, EnergyReport
from cornerwaves.errors import DataError
from cornerwaves.geometry import TOP, BottomProfile, StripDomain, SurfaceCurve
from cornerwaves.meshing import MeshSpec, triangulate


@pytest.fixture(scope="module")
def strip():
    return triangulate(StripDomain(np.pi, 1.0), MeshSpec(0.1, grading=1, resolve_depth=False))


def test_potential_terms_vanish_at_reference():
    b = BottomProfile.flat(1.0)
    s = SurfaceCurve(np.linspace(0, 4, 30), np.zeros(30), wall_slope=None)
    ref = EnergyReference(0.0, 0.0, s.length)
    pot = energy.surface_potential(s, b, PhysicsParams(), ref)
    assert abs(pot["surface"]) < 1e-14 and abs(pot["contact"]) < 1e-14
    # the rest column contributes the constant -g L d^2 / 2
    assert pot["gravity"] == pytest.approx(-2.0, rel=1e-12)


def test_surface_energy_small_amplitude():
    A, k, L = 0.01, 2.0, np.pi
    x = np.linspace(0, L, 400)
    s = SurfaceCurve(x, A * np.cos(k * x), wall_slope=None)
    ref = EnergyReference(0.0, 0.0, L)
    pot = energy.surface_potential(s, BottomProfile.flat(1.0), PhysicsParams(sigma=1.0), ref)
    assert pot["surface"] == pytest.approx(0.25 * A**2 * k**2 * L, rel=1e-3)
    # gravity part: g/2 int eta^2 minus the bottom offset, which is zero here
    assert pot["gravity"] == pytest.approx(0.25 * A**2 * L - 0.5 * L, rel=1e-6)


def test_strip_kinetic_energy(strip):
    top = strip.tag_dofs(TOP)
    f = np.zeros(strip.n_dofs)
    f[top] = np.cos(strip.nodes[top, 0])
    phi = elliptic.harmonic_extension(strip, f)
    assert energy.kinetic_energy(phi) == pytest.approx(np.pi / 4 * np.tanh(1.0), rel=1e-4)


def _rep(t, e, d):
    return EnergyReport(t, e, 0.0, 0.0, 0.0, 0.0, 0.3, 0.0, d, 1.0)


def test_dissipation_audit_on_exact_series():
    t = np.linspace(0, 1, 21)
    reps = [_rep(ti, np.exp(-ti), np.exp(-ti)) for ti in t]
    aud = energy.dissipation_audit(reps)
    assert aud.relative < 2e-3
    aud2 = energy.dissipation_audit(reps, scheme="trapezoid")
    assert aud2.relative < 2e-3


def test_dissipation_audit_rejects_bad_input():
    with pytest.raises(DataError):
        energy.dissipation_audit([_rep(0, 1, 0), _rep(1, 1, 0)])
    with pytest.raises(DataError):
        energy.dissipation_audit([_rep(0, 1, 0), _rep(1, 1, 0), _rep(0.5, 1, 0)])
    with pytest.raises(DataError):
        energy.dissipation_audit([_rep(i, 1, 0) for i in range(3)], scheme="upwind")


def test_report_basic_is_sum():
    r = EnergyReport(0.0, 1.0, 2.0, 3.0, 4.0, 0.0, 0.3, 0.0, 0.0, 1.0)
    assert r.basic == 10.0
    assert r.as_dict()["basic"] == 10.0


def test_energy_decreases_on_relaxation(coarse_sim):
    res = run(coarse_sim, perturbed_state(coarse_sim), t_end=0.03)
    e = np.array([r.basic for r in res.reports])
    d = np.array([r.dissipation for r in res.reports])
    assert np.all(np.diff(e) <= 1e-3 * d.max() * np.diff([r.t for r in res.reports]).max())


def test_J_vanishes_for_flat_surface(strip):
    J = energy.compute_J(strip)
    assert np.max(np.abs(J.values)) < 1e-10


def test_apply_A_constant_and_linearity(strip):
    assert np.max(np.abs(energy.apply_A(strip, np.ones(strip.n_dofs)).values)) < 1e-8
    top = strip.tag_dofs(TOP)
    a = np.cos(strip.nodes[:, 0])
    b = strip.nodes[:, 0] ** 3
    lhs = energy.apply_A(strip, 2 * a - b).values
    rhs = 2 * energy.apply_A(strip, a).values - energy.apply_A(strip, b).values
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)
    with pytest.raises(DataError):
        energy.apply_A(strip, np.ones(top.size + 1))


def test_apply_A_cosine_oracle(strip):
    k = 2
    top, curve = top_curve(strip)
    x = strip.nodes[top, 0]
    w = energy.apply_A(strip, np.cos(k * x))
    inner = (x > 0.3) & (x < np.pi - 0.3)
    ex = k**3 * np.tanh(k) * np.cos(k * x)
    assert np.max(np.abs(w.values[top][inner, 1] - ex[inner])) < 0.02 * np.max(np.abs(ex))


def test_integration_by_parts(strip):
    top, curve = top_curve(strip)
    x = strip.nodes[top, 0]
    gap = energy.integration_by_parts_gap(curve, np.cos(x) + x**2 / 5)
    assert gap["gap"] < 1e-6


def test_corner_extrapolation():
    val, conf = energy.corner_extrapolation([0.1, 0.2, 0.3], [1.01, 1.04, 1.09])
    assert val == pytest.approx(1.0)
    assert conf == "ok"
    assert energy.corner_extrapolation([0.1, 0.2, 0.3], [1.0, 2.0, 3.0])[1] == "low"
    with pytest.raises(DataError):
        energy.corner_extrapolation([0.1, 0.2], [1.0, 2.0])


def test_high_energy_at_rest(meniscus_sim, meniscus):
    snap = meniscus_sim.evaluate(meniscus)
    out = energy.high_energy(snap, meniscus_sim)
    assert out["terms"]["velocity"] < 1e-20
    assert out["terms"]["covariant_DtJ"] < 1e-12
    assert out["corner"] >= 0.0
    assert np.isfinite(out["high"]) and out["high"] > out["terms"]["h52_sq"]


def test_high_energy_moving_state(coarse_sim):
    snap = coarse_sim.evaluate(perturbed_state(coarse_sim))
    out = energy.high_energy(snap, coarse_sim)
    assert np.isfinite(out["high"])
    assert all(v >= 0 for v in out["terms"].values())
    assert out["terms"]["velocity"] > 0 and out["corner"] >= 0
