"""Energy bookkeeping for the corner problem.

The basic energy is

    E0 = 1/2 int |v|^2 + g int (z - z_ref) + sigma |Gamma| + [gamma] s_c,

with ``s_c`` the signed bottom arclength from a reference abscissa to the
contact point.  Along smooth solutions ``dE0/dt = -beta_c v_c^2``; the
audit below checks this identity on a computed trajectory.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from scipy.interpolate import make_interp_spline

from . import elliptic, fem
from .elliptic import VectorField
from .errors import DataError
from .geometry import _gauss_integral

_GX, _GW = np.polynomial.legendre.leggauss(6)
_GX = 0.5 * (_GX + 1.0)
_GW = 0.5 * _GW


@dataclass(frozen=True)
class EnergyReference:
    """Fixed offsets: rest level ``z_ref``, reference contact abscissa and surface length."""

    z_ref: float
    c_ref: float
    length_ref: float = 0.0


@dataclass
class EnergyReport:
    """Energy terms at one instant.

    ``high`` and ``corner`` stay ``nan`` unless the high-order energy was
    requested.
    """

    t: float
    kinetic: float
    gravity: float
    surface: float
    contact: float
    v_c: float
    omega: float
    m_c: float
    dissipation: float
    volume: float
    high: float = float("nan")
    corner: float = float("nan")
    corner_confidence: str = ""

    @property
    def basic(self) -> float:
        return self.kinetic + self.gravity + self.surface + self.contact

    def as_dict(self) -> dict:
        d = asdict(self)
        d["basic"] = self.basic
        return d


def reference_from_state(state) -> EnergyReference:
    """Use the wall height as rest level and the current contact point as origin."""
    from .geometry import SurfaceCurve

    surf = SurfaceCurve(state.x, state.eta)
    return EnergyReference(float(state.eta[-1]), float(state.x[0]), surf.length)


def kinetic_energy(phi) -> float:
    """``1/2 int |grad phi|^2`` from the stiffness form."""
    K = fem.stiffness(phi.mesh)
    return 0.5 * float(phi.values @ (K @ phi.values))


def gravity_energy(surface, bottom, z_ref: float, g: float) -> float:
    """``g int_c^L [(eta^2 - b^2)/2 - z_ref (eta - b)] dx``."""
    knots = np.union1d(surface.x, [p for p in bottom.breakpoints if surface.c < p < surface.L])

    def dens(x):
        e = surface.spline(x)
        b = bottom(x)
        return 0.5 * (e * e - b * b) - z_ref * (e - b)

    return g * float(np.sum(_gauss_integral(dens, knots[:-1], knots[1:])))


def surface_potential(surface, bottom, physics, reference: EnergyReference) -> dict:
    """Potential terms (gravity, surface tension, wetting) of a surface."""
    grav = gravity_energy(surface, bottom, reference.z_ref, physics.gravity)
    surf = physics.sigma * (surface.length - reference.length_ref)
    cont = physics.gamma_jump * float(bottom.arclength(reference.c_ref, surface.c))
    return {"gravity": grav, "surface": surf, "contact": cont}


def basic_energy(phi, surface, bottom, physics, reference: EnergyReference) -> float:
    pot = surface_potential(surface, bottom, physics, reference)
    return kinetic_energy(phi) + sum(pot.values())


def report_from_snapshot(snap, sim, reference: EnergyReference, high: bool = False) -> EnergyReport:
    """Energy report for a dynamics snapshot (one flow solve already done)."""
    ph = sim.physics
    pot = surface_potential(snap.domain.surface, sim.bottom, ph, reference)
    rep = EnergyReport(t=snap.state.t, kinetic=kinetic_energy(snap.phi), volume=snap.domain.volume,
                       v_c=snap.v_c, omega=snap.omega, m_c=snap.m_c,
                       dissipation=ph.beta_c * snap.v_c**2, **pot)
    if high:
        terms = high_energy(snap, sim)
        rep.high = terms["high"]
        rep.corner = terms["corner"]
        rep.corner_confidence = terms["confidence"]
    return rep


@dataclass
class DissipationAudit:
    """Residual of ``dE0/dt + beta v_c^2`` over a recorded series.

    ``residual[k]`` refers to the time ``t[k]``: a centred divided
    difference of ``E0`` at interior reports, or, with the trapezoid
    scheme, the interval midpoints with the averaged dissipation.
    """

    t: np.ndarray
    dE_dt: np.ndarray
    dissipation: np.ndarray
    residual: np.ndarray
    scheme: str = "centered"

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residual))) if self.residual.size else 0.0

    @property
    def max_dissipation(self) -> float:
        return float(np.max(self.dissipation)) if self.dissipation.size else 0.0

    @property
    def relative(self) -> float:
        """Residual scaled by the largest dissipation rate."""
        d = self.max_dissipation
        return self.max_residual / d if d > 0 else float("inf")


def dissipation_audit(reports, scheme: str = "centered") -> DissipationAudit:
    """Compare the discrete energy slope with the contact-line dissipation.

    Parameters
    ----------
    reports : sequence of EnergyReport
        At least three consecutive reports with increasing times; the
        spacing may vary (second-order divided differences are used).
    scheme : {"centered", "trapezoid"}
    """
    if len(reports) < 3:
        raise DataError("need at least three energy reports")
    t = np.array([r.t for r in reports])
    e = np.array([r.basic for r in reports])
    d = np.array([r.dissipation for r in reports])
    if np.any(np.diff(t) <= 0):
        raise DataError("report times must increase")
    if scheme == "centered":
        dE = np.gradient(e, t)[1:-1]
        return DissipationAudit(t[1:-1], dE, d[1:-1], dE + d[1:-1], scheme)
    if scheme == "trapezoid":
        dE = np.diff(e) / np.diff(t)
        dav = 0.5 * (d[1:] + d[:-1])
        return DissipationAudit(0.5 * (t[1:] + t[:-1]), dE, dav, dE + dav, scheme)
    raise DataError(f"unknown difference scheme {scheme!r}")


def series_table(reports) -> list[dict]:
    return [r.as_dict() for r in reports]


# ----------------------------------------------------------------------
# higher-order energy
# ----------------------------------------------------------------------


def compute_J(mesh, surface=None) -> VectorField:
    """``J``: gradient of the harmonic extension of the surface curvature.

    The curvature comes from ``surface`` (a :class:`SurfaceCurve`) when
    given, else from a quintic through the TOP dofs.
    """
    from .calculus_audit import compute_J as _J

    return _J(mesh, surface)


def _vector_l2_sq(mesh, values) -> float:
    M = fem.mass(mesh)
    return float(sum(values[:, i] @ (M @ values[:, i]) for i in range(values.shape[1])))


def _curve_l2_sq(curve, fun_values) -> float:
    """``int_curve (d_s f)^2`` by Gauss quadrature of the quintic interpolant."""
    u = curve.u
    uq = (u[:-1, None] + np.diff(u)[:, None] * _GX).ravel()
    fs = curve.d_ds(fun_values, u=uq, order=1)[0]
    _, d1 = curve._derivs(uq, 1)
    speed = np.linalg.norm(d1, axis=-1)
    wq = (np.diff(u)[:, None] * _GW).ravel()
    return float(np.sum(wq * speed * fs**2))


def corner_extrapolation(s, g, rel_tol: float = 0.1) -> tuple[float, str]:
    """Quadratic through three samples ``(s_i, g_i)`` evaluated at ``s = 0``.

    Flagged ``"low"`` when the samples spread by more than ``rel_tol`` of
    their largest magnitude.
    """
    s = np.asarray(s, float)
    g = np.asarray(g, float)
    if s.size != 3:
        raise DataError("corner extrapolation uses exactly three samples")
    val = float(np.polyval(np.polyfit(s, g, 2), 0.0))
    big = float(np.max(np.abs(g)))
    spread = float(np.ptp(g)) / big if big > 0 else 0.0
    return val, ("low" if spread > rel_tol else "ok")


def high_energy(snap, sim, J: VectorField | None = None) -> dict:
    """Higher-order energy and corner dissipation of a flow snapshot.

    ``E = ||d_s J.n||^2_{L2(surface)} + ||D_t J + grad P_{J,v}||^2 + ||eta||^2_{H^{5/2}}
    + ||v||^2`` and ``F = (sin(omega) d_s J.n at the contact point)^2``.

    The material derivative of ``J`` follows the closed form of
    :func:`cornerwaves.calculus_audit.dt_J_formula` with the finite-element
    velocity ``grad phi``; the curvature rate inside it is taken from the
    marker velocities, whose spline is far smoother than the projected
    gradient on the graded corner mesh.  The corner value of ``d_s J.n`` is extrapolated
    from the three markers next to the contact point.
    """
    from . import hodge, sobolev
    from .calculus_audit import PotentialVelocity, dt_J_formula, dt_kappa_markers, top_curve

    mesh = snap.mesh
    surf = snap.domain.surface
    bottom = sim.bottom
    if J is None:
        J = compute_J(mesh, surf)
    v = elliptic.nodal_gradient(snap.phi)

    top, curve = top_curve(mesh)
    nt = surf.normal(np.clip(mesh.nodes[top, 0], surf.c, surf.L))
    jperp = np.sum(J.values[top] * nt, axis=1)
    t_surf = _curve_l2_sq(curve, jperp)

    pts = np.column_stack([snap.state.x, snap.state.eta])
    dk_m = dt_kappa_markers(pts, snap.v)
    dk = make_interp_spline(snap.state.x, dk_m, k=3)(np.clip(mesh.nodes[top, 0], surf.c, surf.L))
    dtj = dt_J_formula(mesh, PotentialVelocity(snap.phi), bottom, J, dt_kappa_top=dk)
    P = hodge.pressure_wv(mesh, J, v, bottom, ("J", "v")).P
    cov = dtj.values + elliptic.nodal_gradient(P).values
    t_cov = _vector_l2_sq(mesh, cov)
    h52 = sobolev.h52_norm(surf.spline, surf.c, surf.L)
    t_v = _vector_l2_sq(mesh, v.values)

    # corner term from the markers next to the contact point
    pos = {d: i for i, d in enumerate(top)}
    near = [pos[d] for d in snap.marker_dofs[1:4]]
    gs = curve.d_ds(jperp, order=1)[0]
    rho = curve.u - curve.u[pos[snap.marker_dofs[0]]]
    g_c, conf = corner_extrapolation(rho[near], gs[near])
    F = float((np.sin(snap.omega) * g_c) ** 2)
    terms = {"surface_J": t_surf, "covariant_DtJ": t_cov, "h52_sq": h52["norm"] ** 2,
             "velocity": t_v}
    return {"high": float(sum(terms.values())), "terms": terms, "corner": F,
            "confidence": conf, "corner_gradient": g_c}


def apply_A(mesh, w_perp) -> VectorField:
    """``grad H(-d_ss w_perp)`` for a TOP trace ``w_perp``.

    ``w_perp`` is either a full nodal array (TOP entries used) or values at
    the TOP dofs ordered by abscissa.
    """
    from .calculus_audit import top_curve

    top, curve = top_curve(mesh)
    w = np.asarray(w_perp, float)
    wt = w[top] if w.size == mesh.n_dofs else w
    if wt.size != top.size:
        raise DataError("trace size matches neither the dofs nor the TOP dofs")
    lap = curve.d_ds(wt, order=2)[1]
    f = np.zeros(mesh.n_dofs)
    f[top] = -lap
    return elliptic.nodal_gradient(elliptic.harmonic_extension(mesh, f))


def integration_by_parts_gap(curve, w) -> dict:
    """``int (-w_ss) w ds`` against ``int w_s^2 ds - [w_s w]`` over a curve."""
    u = curve.u
    uq = (u[:-1, None] + np.diff(u)[:, None] * _GX).ravel()
    wq = (np.diff(u)[:, None] * _GW).ravel()
    _, d1 = curve._derivs(uq, 1)
    ds = wq * np.linalg.norm(d1, axis=-1)
    spl = make_interp_spline(u, np.asarray(w, float), k=curve.degree)
    ws, wss = curve.d_ds(w, u=uq, order=2)
    lhs = float(np.sum(ds * (-wss) * spl(uq)))
    ends = curve.d_ds(w, u=u[[0, -1]], order=1)[0] * np.asarray(w, float)[[0, -1]]
    rhs = float(np.sum(ds * ws**2) - (ends[1] - ends[0]))
    return {"lhs": lhs, "rhs": rhs, "gap": abs(lhs - rhs)}
