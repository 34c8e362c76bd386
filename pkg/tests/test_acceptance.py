"""Acceptance criteria 1-10, one summary line each.

Tolerances are pinned below.  The finest criterion-1 level dominates the
runtime (several minutes on one core); criteria 3 and 10 reuse its runs.
"""
import time

import numpy as np
import pytest

from cornerwaves import benchmarks, energy, sobolev
from cornerwaves import calculus_audit as ca
from cornerwaves.dynamics import (PhysicsParams, Simulator, equilibrium_state, marker_fractions,
                                  perturbed_state, run)
from cornerwaves.geometry import BottomProfile
from cornerwaves.meshing import MeshSpec

DISSIPATION_TOL = 1e-3
MIN_ORDER = 1.0
EQUILIBRIUM_TOL = 1e-8
WEDGE_TOL = 0.3
WEDGE_ANGLES = (np.pi / 8, np.pi / 4 - 0.1, np.pi / 3)
DN_TOL = 1e-3
SELF_ADJOINT_TOL = 1e-8
SLOPE_TOL = 0.3
FORM_TOL = 1e-6
SCALING_TOL = 0.01
FOURIER_TOL = 0.01
VOLUME_TOL = 1e-3
AUDIT_SECONDS = 300.0
OMEGA_S = np.pi / 12
D_OMEGA = 0.05
T0 = 0.3  # about one capillary period of the longest resolved mode
LADDER = ((41, 0.2), (61, 0.1), (81, 0.05))  # (markers, h_mesh); dt follows the CFL bound


def _simulator(n_markers, h_mesh, omega_s=OMEGA_S):
    ph = PhysicsParams(sigma=1.0, gravity=1.0, beta_c=0.1, omega_s=omega_s)
    bottom = BottomProfile(np.pi / 12, 2.5, 5.0, 1.0)
    return Simulator(ph, bottom, MeshSpec(h_mesh, grading=4), marker_fractions(n_markers, 2),
                     8.0, cfl=0.3)


def _relaxation(n_markers, h_mesh, d_omega, high=False):
    sim = _simulator(n_markers, h_mesh)
    cs, highs = [], []

    def track(rep, snap):
        cs.append(snap.state.c)

    t0 = time.perf_counter()
    res = run(sim, perturbed_state(sim, d_omega=d_omega), T0, callback=track, high_energy=high)
    return {"n": n_markers, "h": h_mesh, "res": res, "c": np.array(cs),
            "audit": energy.dissipation_audit(res.reports),
            "seconds": time.perf_counter() - t0}


@pytest.fixture(scope="module")
def ladder():
    return [_relaxation(n, h, D_OMEGA) for n, h in LADDER]


def test_criterion_01_dissipation_identity(ladder, acceptance):
    assert all(lv["res"].error is None for lv in ladder)
    rel = [lv["audit"].relative for lv in ladder]
    orders = [float(np.log2(a / b)) for a, b in zip(rel, rel[1:])]
    ok = rel[-1] <= DISSIPATION_TOL and orders[-1] >= MIN_ORDER
    acceptance(1, ok, f"max|r|/max(beta v_c^2) = {', '.join(f'{r:.2e}' for r in rel)} "
                      f"(finest <= {DISSIPATION_TOL:g}); orders "
                      f"{', '.join(f'{o:.2f}' for o in orders)} (>= {MIN_ORDER:g}); "
                      f"{sum(lv['seconds'] for lv in ladder):.0f}s")
    assert ok


def test_criterion_02_equilibrium_fixed_point(acceptance):
    sim = _simulator(41, 0.2, omega_s=0.35)
    st0 = equilibrium_state(sim)
    dt = sim.dt_max(st0)
    st = st0
    for _ in range(100):
        st, _, _ = sim.step(st, dt)
    d_eta = float(np.max(np.abs(st.eta - st0.eta)))
    d_c = abs(st.c - st0.c)
    ok = d_eta <= EQUILIBRIUM_TOL and d_c <= EQUILIBRIUM_TOL
    acceptance(2, ok, f"100 RK4 steps at omega_s = 0.35: |eta drift| = {d_eta:.1e}, "
                      f"|c drift| = {d_c:.1e} (<= {EQUILIBRIUM_TOL:g})")
    assert ok


@pytest.fixture(scope="module")
def receding():
    return _relaxation(*LADDER[0], -D_OMEGA)


def test_criterion_03_contact_law_sign(ladder, receding, acceptance):
    parts, ok = [], True
    for name, lv, sign in (("advancing", ladder[0], -1), ("receding", receding, +1)):
        head = np.diff(lv["c"][:11])
        monotone = bool(np.all(sign * head > 0))
        aud = lv["audit"]
        rise = float(np.max(aud.dE_dt)) / aud.max_dissipation
        # E0 may only rise within the criterion-1 residual bound
        flat = rise <= DISSIPATION_TOL
        ok &= monotone and flat and lv["res"].error is None
        parts.append(f"{name}: c {'down' if sign < 0 else 'up'} over first 10 steps "
                     f"{monotone}, max dE0/dt / max D = {rise:.1e}")
    acceptance(3, ok, "; ".join(parts) + f" (<= {DISSIPATION_TOL:g})")
    assert ok


def test_criterion_04_wedge_threshold(acceptance):
    res = benchmarks.wedge(WEDGE_ANGLES)
    finals = [r["final_order"] for r in res["rows"]]
    expected = [r["expected_order"] for r in res["rows"]]
    within = all(abs(f - e) <= WEDGE_TOL for f, e in zip(finals, expected))
    ok = within and res["monotone"]
    acceptance(4, ok, "H1 orders " + ", ".join(f"{f:.2f} (expect {e:.2f})"
                                               for f, e in zip(finals, expected))
               + f"; within {WEDGE_TOL} {within}; non-increasing in omega {res['monotone']}")
    assert ok


def test_criterion_05_dn_oracle(acceptance):
    res = benchmarks.dn_strip(ks=(1, 2, 3, 4))
    err, sa = res["max_rel_L2_finest"], res["self_adjoint_defect_finest"]
    ok = err <= DN_TOL and sa <= SELF_ADJOINT_TOL
    acceptance(5, ok, f"max rel L2 over k=1..4 = {err:.2e} (<= {DN_TOL:g}); "
                      f"self-adjointness defect {sa:.1e} (<= {SELF_ADJOINT_TOL:g})")
    assert ok


@pytest.fixture(scope="module")
def audit_suite():
    t0 = time.perf_counter()
    stated = ca.run_suite()
    derived = ca.run_suite(["surface_laplacian"], surface_laplacian_form="derived")
    zero = ca.run_suite([a for a in ca.AUDITS if a != "curvature_scaling"],
                        flow=ca.zero_flow(), surface_laplacian_form="derived")
    return {"stated": {r.identity: r for r in stated}, "derived": derived[0],
            "zero": zero, "seconds": time.perf_counter() - t0}


def test_criterion_06_commutator_audits(audit_suite, acceptance):
    st = audit_suite["stated"]
    others = [r for k, r in st.items() if k not in ("Dt_surface_laplacian",
                                                    "Dt_curvature_scaling")]
    slopes_ok = all(abs(r.slope - 1.0) <= SLOPE_TOL for r in others + [audit_suite["derived"]])
    exact_ok = all(r.passed and r.notes.get("exact") for r in audit_suite["zero"])
    gap = st["Dt_curvature"].notes["form_gap"]
    fast = audit_suite["seconds"] <= AUDIT_SECONDS
    sl = st["Dt_surface_laplacian"]
    ok = slopes_ok and exact_ok and gap <= FORM_TOL and fast and sl.passed
    acceptance(6, ok,
               "slopes " + ", ".join(f"{r.identity[3:]} {r.slope:.2f}" for r in others)
               + f"; surface Laplacian stated form {sl.slope:.2f}, with -2 Hessian sign "
               f"{audit_suite['derived'].slope:.2f}; zero flow exact {exact_ok}; "
               f"curvature form gap {gap:.1e}; {audit_suite['seconds']:.0f}s")
    assert slopes_ok and exact_ok and gap <= FORM_TOL and fast and audit_suite["derived"].passed


@pytest.mark.xfail(strict=True, reason="the stated commutator carries +2 on the Hessian term; "
                                       "the transported difference follows -2")
def test_criterion_06_surface_laplacian_stated_form(audit_suite):
    assert audit_suite["stated"]["Dt_surface_laplacian"].passed


def test_criterion_07_curvature_scaling(audit_suite, acceptance):
    r = audit_suite["stated"]["Dt_curvature_scaling"]
    err = r.notes["rel_err_vs_minus_kappa_sq"]
    ok = err <= SCALING_TOL
    acceptance(7, ok, f"unit circle under dilation: max|D_t kappa + kappa^2| / kappa^2 = "
                      f"{err:.1e} (<= {SCALING_TOL:g}); transport slope {r.slope:.2f}")
    assert ok


def test_criterion_08_norm_oracles(acceptance):
    fourier = benchmarks.norms(ks=(1, 2, 3, 4), s_values=(0.5,), n=256)
    chi = lambda r: np.cos(np.pi * r / 2) ** 2  # noqa: E731
    one = sobolev.tilde_half_norm(sobolev.CurveFunction.from_callable(lambda r: 1 + 0 * r,
                                                                      1.0, 256, 3))
    sq = sobolev.tilde_half_norm(sobolev.CurveFunction.from_callable(
        lambda r: np.sqrt(r) * chi(r), 1.0, 256, 3))
    err = fourier["max_rel_err"]
    ok = err <= FOURIER_TOL and one.diverges and not sq.diverges
    acceptance(8, ok, f"Gagliardo vs Fourier max rel err {err:.1e} (<= {FOURIER_TOL:g}); "
                      f"flag for f=1 {one.diverges}; flag for sqrt(rho) chi {sq.diverges}")
    assert ok


def test_criterion_09_boundedness(acceptance):
    lv = _relaxation(*LADDER[0], D_OMEGA, high=True)
    reps = lv["res"].reports
    E = np.array([r.high for r in reps])
    F = np.array([r.corner for r in reps])
    om = np.array([r.omega for r in reps])
    conf = sum(r.corner_confidence == "low" for r in reps)
    ok = (lv["res"].error is None and reps[-1].t >= T0 - 1e-12 and np.all(np.isfinite(E))
          and np.all(F >= 0) and np.all((om > 0) & (om < np.pi / 6)))
    acceptance(9, ok, f"{len(reps)} steps to t={reps[-1].t:.2f}: E in [{E.min():.3g}, "
                      f"{E.max():.3g}], min F = {F.min():.2e}, omega in [{om.min():.4f}, "
                      f"{om.max():.4f}] within (0, pi/6); corner value low-confidence at "
                      f"{conf} steps")
    assert ok


def test_criterion_10_volume(ladder, acceptance):
    drifts = [abs(lv["res"].reports[-1].volume / lv["res"].reports[0].volume - 1)
              for lv in ladder]
    ok = max(drifts) <= VOLUME_TOL
    acceptance(10, ok, "relative area drift " + ", ".join(f"{d:.1e}" for d in drifts)
               + f" (<= {VOLUME_TOL:g})")
    assert ok
