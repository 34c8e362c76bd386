import numpy as np
import pytest

from cornerwaves.dynamics import (PhysicsParams, SimState, equilibrium_state, flat_contact_abscissa,
                                  marker_fractions, perturbed_state, run, with_psi)
from cornerwaves.errors import AngleGuardError, ConfigError
from cornerwaves.geometry import BOTTOM


def test_physics_guards():
    with pytest.raises(ConfigError):
        PhysicsParams(sigma=-1.0)
    with pytest.raises(ConfigError):
        PhysicsParams(beta_c=0.0)
    ph = PhysicsParams(sigma=2.0, omega_s=0.3)
    assert ph.gamma_jump == pytest.approx(2.0 * np.cos(0.3))


def test_marker_fractions():
    u = marker_fractions(11, 2)
    assert u[0] == 0.0 and u[-1] == 1.0
    assert np.all(np.diff(u) > 0)
    assert np.diff(u)[0] < np.diff(u)[-1]
    np.testing.assert_allclose(marker_fractions(5), np.linspace(0, 1, 5))


def test_zero_potential_gives_zero_velocity(coarse_sim):
    st = coarse_sim.state_from_surface(flat_contact_abscissa(coarse_sim.bottom, 0.0),
                                       lambda x: 0.05 * np.exp(-(x - 3) ** 2))
    snap = coarse_sim.evaluate(st, check_guard=False)
    assert np.max(np.abs(snap.phi.values)) == 0.0
    assert np.max(np.abs(snap.v)) == 0.0
    np.testing.assert_allclose(snap.deta[1:], 0.0, atol=1e-14)


def test_bottom_impermeability(coarse_sim):
    st = perturbed_state(coarse_sim)
    v, _ = coarse_sim.velocity_from_state(st)
    mesh = v.mesh
    bot = mesh.tag_dofs(BOTTOM)
    x = mesh.nodes[bot, 0]
    far = x > 1.0
    nb = coarse_sim.bottom.normal(x[far])
    vn = np.sum(v.values[bot][far] * nb, axis=1)
    assert np.max(np.abs(vn)) < 0.05 * np.max(np.abs(v.values))


@pytest.mark.parametrize("d_omega, direction", [(0.05, -1), (-0.05, 1)])
def test_contact_law_sign(coarse_sim, d_omega, direction):
    st = perturbed_state(coarse_sim, d_omega=d_omega)
    snap = coarse_sim.evaluate(st)
    assert np.sign(snap.v_c) == -direction
    assert np.sign(snap.dc) == direction
    # the compatible potential makes the fluid follow the contact point
    assert snap.m_c < 1e-6 * abs(snap.v_c) + 1e-12


def test_equilibrium_is_fixed_point(meniscus_sim, meniscus):
    snap = meniscus_sim.evaluate(meniscus)
    assert snap.omega == pytest.approx(meniscus_sim.physics.omega_s, abs=1e-10)
    assert abs(snap.v_c) < 1e-9
    assert snap.m_c < 1e-9
    assert np.ptp(snap.dpsi) < 1e-9  # a uniform rate is a gauge shift
    np.testing.assert_allclose(snap.deta, 0.0, atol=1e-12)
    # sigma kappa + g eta is constant away from the clamped spline end
    k = meniscus.surface.curvature(meniscus.x)
    p = meniscus_sim.physics.sigma * k + meniscus_sim.physics.gravity * meniscus.eta
    assert np.ptp(p[3:]) < 1e-3 * np.max(np.abs(k))


def test_state_roundtrip(coarse_sim):
    st = perturbed_state(coarse_sim)
    back = SimState.from_dict(st.to_dict())
    np.testing.assert_array_equal(back.x, st.x)
    np.testing.assert_array_equal(back.psi, st.psi)
    assert back.t == st.t


def test_zero_step_run_reports_initial_state(coarse_sim):
    st = perturbed_state(coarse_sim)
    res = run(coarse_sim, st, t_end=0.0, n_steps=0)
    assert len(res.reports) == 1 and res.reports[0].t == 0.0
    assert res.final_state is st and res.error is None


def test_rk4_temporal_order(coarse_sim):
    st = perturbed_state(coarse_sim)
    T = 2 * coarse_sim.dt_max(st)
    finals = []
    for n in (2, 4, 8):
        s = st
        for _ in range(n):
            s, _, _ = coarse_sim.step(s, T / n)
        finals.append(np.concatenate([[s.c], s.eta, s.psi]))
    e1 = np.max(np.abs(finals[0] - finals[1]))
    e2 = np.max(np.abs(finals[1] - finals[2]))
    assert np.log2(e1 / e2) > 3.0


def test_volume_conserved_over_short_run(coarse_sim):
    st = perturbed_state(coarse_sim)
    res = run(coarse_sim, st, t_end=0.02)
    vols = [r.volume for r in res.reports]
    assert abs(vols[-1] - vols[0]) < 1e-4 * vols[0]


def test_guard_breach_is_reported(coarse_sim):
    st = perturbed_state(coarse_sim, d_omega=0.2617)
    r = st.x - st.c
    st = with_psi(st, st.psi - 3.0 * r * np.exp(-r / 0.5))
    res = run(coarse_sim, st, t_end=0.3)
    assert isinstance(res.error, AngleGuardError)
    assert res.final_state is not None
