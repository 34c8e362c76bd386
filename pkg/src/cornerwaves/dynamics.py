"""Time integration of the free-surface problem in potential form.

The state is the surface trace of the velocity potential ``psi`` and the
surface height ``eta`` at a set of markers, plus the contact abscissa
``c``.  Markers sit at fixed fractions ``xi`` of the interval ``[c, L]``
(arbitrary Lagrangian-Eulerian markers), so ``x_i = c + xi_i (L - c)``.
The bulk velocity is recovered on demand as the gradient of the harmonic
extension of ``psi``.

Evolution at marker ``i`` moving with velocity ``u_i``::

    d eta_i / dt = V_i sqrt(1 + eta_x^2) + (dx_i/dt) eta_x,
    d psi_i / dt = -|v|^2/2 - g eta_i - sigma kappa_i + u_i . v,

with ``V`` the normal velocity from the Dirichlet-Neumann map.  The contact
point slides along the bottom with the speed given by the contact-line
law.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from . import elliptic
from .errors import AngleGuardError, ConfigError, GeometryError, MeshingError
from .geometry import (TOP, BottomProfile, CornerDomain, SurfaceCurve, check_angle,
                       contact_angle, contact_speed, graph_spline)
from .meshing import Mesh, MeshSpec, graph_remap, triangulate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PhysicsParams:
    """Physical constants.

    Parameters
    ----------
    sigma : float
        Surface tension.
    gravity : float
        Gravitational acceleration; gravity acts along ``-e_z``.
    beta_c : float
        Contact-line friction coefficient.
    omega_s : float
        Static contact angle; ``sigma cos(omega_s)`` is the wetting jump.
    omega_min, omega_max : float
        Admissible window for the dynamic contact angle.
    pinned : bool
        Freeze the contact point (``v_c = 0``); used by conservation tests.
    """

    sigma: float = 1.0
    gravity: float = 1.0
    beta_c: float = 0.1
    omega_s: float = np.pi / 12
    omega_min: float = 1e-3
    omega_max: float = np.pi / 6
    pinned: bool = False

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigError("sigma must be positive")
        if not self.beta_c > 0:
            raise ConfigError("beta_c must be positive")
        if self.gravity < 0:
            raise ConfigError("gravity must be non-negative")
        if not 0 < self.omega_min < self.omega_max <= np.pi / 2:
            raise ConfigError("need 0 < omega_min < omega_max <= pi/2")
        if not self.omega_min < self.omega_s < self.omega_max:
            raise ConfigError("omega_s must lie inside the angle guard window")

    @property
    def gamma_jump(self) -> float:
        """Wetting jump ``[gamma] = sigma cos(omega_s)``."""
        return self.sigma * np.cos(self.omega_s)


@dataclass(frozen=True)
class SimState:
    """Dynamical unknowns at time ``t``.

    ``x[0]`` is the contact abscissa ``c`` and ``eta[0] = b(c)``.
    """

    t: float
    x: np.ndarray
    eta: np.ndarray
    psi: np.ndarray

    @property
    def c(self) -> float:
        return float(self.x[0])

    @property
    def n_markers(self) -> int:
        return len(self.x)

    @property
    def surface(self) -> SurfaceCurve:
        return SurfaceCurve(self.x, self.eta)

    def domain(self, bottom: BottomProfile) -> CornerDomain:
        return CornerDomain(self.surface, bottom)

    def to_dict(self) -> dict:
        return {"t": self.t, "x": self.x.tolist(), "eta": self.eta.tolist(),
                "psi": self.psi.tolist()}

    @classmethod
    def from_dict(cls, d) -> "SimState":
        return cls(float(d["t"]), np.asarray(d["x"], float), np.asarray(d["eta"], float),
                   np.asarray(d["psi"], float))


@dataclass
class StepReport:
    t: float
    dt: float
    omega: float
    v_c: float
    m_c: float
    n_triangles: int
    min_angle: float
    remeshed: bool
    volume: float


@dataclass
class FlowSnapshot:
    """Everything computed from one state during a right-hand-side evaluation."""

    state: SimState
    domain: CornerDomain
    mesh: Mesh
    phi: elliptic.ScalarField
    marker_dofs: np.ndarray
    v: np.ndarray            # (N, 2) fluid velocity at the markers
    normal_speed: np.ndarray  # (N,) v . n_t at markers (nan at the corner)
    omega: float
    v_c: float
    dc: float
    deta: np.ndarray
    dpsi: np.ndarray
    kappa: np.ndarray
    remeshed: bool = False

    @property
    def m_c(self) -> float:
        tau_b = self.domain.bottom.tangent(self.state.c)
        return float(abs(self.v[0] @ tau_b + self.v_c))


def marker_fractions(n: int, grading: float = 0.0) -> np.ndarray:
    """Fixed marker fractions in ``[0, 1]``, clustered toward the corner when ``grading > 0``.

    The spacing ratio between the wall end and the corner end is about
    ``exp(grading)``.
    """
    u = np.linspace(0.0, 1.0, n)
    if grading == 0:
        return u
    return np.expm1(grading * u) / np.expm1(grading)


def _min_angle_deg(mesh: Mesh) -> float:
    p = mesh.vertices[mesh.triangles]
    best = np.inf
    for k in range(3):
        a = p[:, (k + 1) % 3] - p[:, k]
        b = p[:, (k + 2) % 3] - p[:, k]
        cosv = np.sum(a * b, axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
        ang = np.degrees(np.arccos(np.clip(cosv, -1, 1)))
        if mesh.corner is not None:
            ang = np.where(mesh.triangles[:, k] == mesh.corner, np.inf, ang)
        best = min(best, float(ang.min()))
    return best


class Simulator:
    """Marker/potential time stepper for the corner problem.

    Parameters
    ----------
    physics : PhysicsParams
    bottom : BottomProfile
    mesh_spec : MeshSpec
    xi : array_like
        Marker fractions, ``xi[0] = 0`` and ``xi[-1] = 1``.
    wall : float
        Wall abscissa ``L``.
    cfl : float
        Capillary time-step constant ``C`` in ``dt <= C ds_min^1.5 / sqrt(sigma)``.
    remesh_angle : float
        Re-triangulate when the smallest mesh angle (corner excluded) drops
        below this many degrees.
    contact_mode : {"angle", "kinematic"}
        Where the contact-line law is enforced.  ``"kinematic"`` reads the
        angle off the marker spline and moves the corner with the law speed,
        leaving the slip mismatch ``m_c`` free.  ``"angle"`` clamps the
        spline at the corner to the angle whose law speed equals the fluid
        slip, so the corner moves with the fluid and ``m_c`` vanishes.
    corner_cfl : float
        Constant of the angle-mode corner bound in :meth:`dt_max`.
    """

    def __init__(self, physics: PhysicsParams, bottom: BottomProfile, mesh_spec: MeshSpec,
                 xi, wall: float, cfl: float = 0.25, remesh_angle: float = 8.0,
                 contact_mode: str = "angle", corner_cfl: float = 0.25):
        if contact_mode not in ("angle", "kinematic"):
            raise ConfigError(f"unknown contact mode {contact_mode!r}")
        self.contact_mode = contact_mode
        self.physics = physics
        self.bottom = bottom
        self.mesh_spec = mesh_spec
        self.xi = np.asarray(xi, dtype=float)
        if self.xi[0] != 0 or self.xi[-1] != 1 or np.any(np.diff(self.xi) <= 0):
            raise ConfigError("marker fractions must increase from 0 to 1")
        self.wall = float(wall)
        self.cfl = float(cfl)
        self.remesh_angle = float(remesh_angle)
        self.corner_cfl = float(corner_cfl)
        self._ref_mesh: Mesh | None = None
        self._marker_dofs: np.ndarray | None = None
        self.n_remesh = 0

    # ------------------------------------------------------------------
    # state helpers
    # ------------------------------------------------------------------
    def positions(self, c: float) -> np.ndarray:
        x = c + self.xi * (self.wall - c)
        x[-1] = self.wall
        return x

    def make_state(self, t, c, eta_tail, psi) -> SimState:
        """Assemble a state; ``eta_tail`` holds markers 1..N-1."""
        x = self.positions(c)
        eta = np.concatenate([[float(self.bottom(c))], eta_tail])
        return SimState(float(t), x, eta, np.asarray(psi, dtype=float).copy())

    def state_from_surface(self, c: float, eta_fun, psi_fun=None, t: float = 0.0) -> SimState:
        """Sample callables ``eta(x)`` and ``psi(x)`` at the marker positions."""
        x = self.positions(c)
        eta_tail = np.asarray(eta_fun(x[1:]), dtype=float)
        psi = np.zeros_like(x) if psi_fun is None else np.asarray(psi_fun(x), dtype=float)
        return self.make_state(t, c, eta_tail, psi)

    def _mesh_for(self, domain: CornerDomain):
        remeshed = False
        if self._ref_mesh is not None:
            mesh = graph_remap(self._ref_mesh, domain)
            ok = np.all(mesh.signed_areas > 0) and _min_angle_deg(mesh) >= self.remesh_angle
            if ok and mesh.order == 2:
                from .fem import element_geometry
                ok = bool(np.all(element_geometry(mesh).det > 0))
            if ok:
                return mesh, self._marker_dofs, remeshed
        mesh = triangulate(domain, self.mesh_spec)
        top = mesh.tag_vertices(TOP)
        xs = mesh.vertices[top, 0]
        x = domain.surface.x
        idx = np.array([top[np.argmin(np.abs(xs - xm))] for xm in x])
        if not np.allclose(mesh.vertices[idx, 0], x, rtol=0, atol=1e-12):
            raise MeshingError("markers are not mesh vertices")
        if self._ref_mesh is not None:
            self.n_remesh += 1
            remeshed = True
            log.info("re-triangulated at c=%.6g", domain.surface.c)
        self._ref_mesh, self._marker_dofs = mesh, idx
        return mesh, idx, remeshed

    def reset_mesh(self):
        self._ref_mesh = None
        self._marker_dofs = None

    # ------------------------------------------------------------------
    # right-hand side
    # ------------------------------------------------------------------
    def corner_angle(self, c: float, psi_x: float) -> float:
        """Contact angle at which the law speed equals the fluid's slip speed.

        With ``v = a tau_b`` at the corner and ``v . t = psi_s`` the slip is
        ``a = psi_x cos(omega + beta_b) / cos(omega)``, ``beta_b`` the bottom
        inclination; the law ``beta_c (-a) = sigma (cos omega_s - cos omega)``
        is solved for ``omega`` inside the guard window.
        """
        ph = self.physics
        bb = float(np.arctan(self.bottom.slope(c)))

        def f(om):
            return (ph.sigma * (np.cos(ph.omega_s) - np.cos(om))
                    + ph.beta_c * psi_x * np.cos(om + bb) / np.cos(om))

        lo, hi = ph.omega_min, ph.omega_max
        if psi_x == 0.0:
            return ph.omega_s
        if f(lo) * f(hi) > 0:
            raise AngleGuardError(float("nan"), lo, hi)
        return float(brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps))

    @staticmethod
    def psi_spline(state: SimState):
        """Spline of the potential trace (zero slope at the wall)."""
        return graph_spline(state.x, state.psi, 0.0)

    def surface(self, state: SimState) -> SurfaceCurve:
        """Surface spline of ``state``; in angle mode its corner slope carries the law."""
        if self.contact_mode != "angle" or self.physics.pinned:
            return SurfaceCurve(state.x, state.eta)
        psi_x = float(self.psi_spline(state)(state.c, 1))
        om = self.corner_angle(state.c, psi_x)
        slope = np.tan(om + np.arctan(self.bottom.slope(state.c)))
        return SurfaceCurve(state.x, state.eta, corner_slope=slope)

    def evaluate(self, state: SimState, check_guard: bool = True) -> FlowSnapshot:
        """Solve for the flow of ``state`` and return the time derivatives."""
        ph = self.physics
        surf = self.surface(state)
        domain = CornerDomain(surf, self.bottom, self.wall)
        omega = contact_angle(domain)
        if check_guard:
            check_angle(omega, ph.omega_min, ph.omega_max)
        mesh, mdofs, remeshed = self._mesh_for(domain)

        x, eta, c = state.x, state.eta, state.c
        vc = 0.0 if ph.pinned else contact_speed(omega, ph)
        psi_spl = self.psi_spline(state)
        top = mesh.tag_dofs(TOP)
        f_top = psi_spl(np.clip(mesh.nodes[top, 0], c, self.wall))
        phi = elliptic.harmonic_extension(mesh, f_top)
        flux = elliptic.top_flux(mesh, phi)
        lam = np.empty(mesh.n_dofs)
        lam[flux.dofs] = flux.values
        V = lam[mdofs]

        ex = surf.spline(x, 1)
        q = np.sqrt(1.0 + ex**2)
        px = psi_spl(x, 1)
        that = np.column_stack([np.ones_like(ex), ex]) / q[:, None]
        nhat = np.column_stack([-ex, np.ones_like(ex)]) / q[:, None]
        v = (px / q)[:, None] * that + V[:, None] * nhat
        # corner: tangential derivative of psi along the surface plus v . n_b = 0
        nb = self.bottom.normal(c)
        A = np.array([that[0], nb])
        v[0] = np.linalg.solve(A, np.array([px[0] / q[0], 0.0]))
        V = V.copy()
        V[0] = np.nan

        bp = float(self.bottom.slope(c))
        dc = -vc / np.sqrt(1.0 + bp**2)
        dx = (1.0 - self.xi) * dc
        deta = np.empty_like(eta)
        deta[1:] = V[1:] * q[1:] + dx[1:] * ex[1:]
        deta[0] = dc * bp
        u = np.column_stack([dx, deta])
        kappa = surf.curvature(x)
        dpsi = (-0.5 * np.sum(v * v, axis=1) - ph.gravity * eta - ph.sigma * kappa
                + np.sum(u * v, axis=1))
        return FlowSnapshot(state, domain, mesh, phi, mdofs, v, V, omega, vc, dc, deta, dpsi,
                            kappa, remeshed)

    def rhs(self, state: SimState):
        """Time derivatives ``(dc/dt, d eta/dt, d psi/dt)``; ``d eta[0]/dt`` follows the bottom."""
        snap = self.evaluate(state)
        return snap.dc, snap.deta, snap.dpsi

    # ------------------------------------------------------------------
    # stepping
    # ------------------------------------------------------------------
    def dt_max(self, state: SimState) -> float:
        """Largest stable step for ``state``.

        The capillary bound ``cfl * ds_min^1.5 / sqrt(sigma)`` on the marker
        spacing always applies.  In angle mode the clamped corner slope adds
        a damped mode with rate about ``beta_c / (sin(omega) dx0^2)``, so the
        step is also capped by ``corner_cfl * sin(omega) dx0^2 / beta_c``.
        """
        ph = self.physics
        ds = np.hypot(np.diff(state.x), np.diff(state.eta))
        dt = self.cfl * ds.min() ** 1.5 / np.sqrt(ph.sigma)
        if self.contact_mode == "angle" and not ph.pinned:
            surf = SurfaceCurve(state.x, state.eta)
            om = float(np.arctan(surf.slope(state.c)) - np.arctan(self.bottom.slope(state.c)))
            sin_om = np.sin(np.clip(min(om, ph.omega_s), ph.omega_min, ph.omega_max))
            dx0 = state.x[1] - state.x[0]
            dt = min(dt, self.corner_cfl * sin_om * dx0**2 / ph.beta_c)
        return dt

    def _advance(self, state, k, dt):
        c = state.c + dt * k[0]
        eta_tail = state.eta[1:] + dt * k[1][1:]
        psi = state.psi + dt * k[2]
        return self.make_state(state.t + dt, c, eta_tail, psi)

    def step(self, state: SimState, dt: float, snap: FlowSnapshot | None = None):
        """One classical RK4 step.

        Returns
        -------
        new_state : SimState
        report : StepReport
            Diagnostics of the state at the start of the step.
        snap : FlowSnapshot
            The first-stage evaluation (flow of ``state``).

        Raises
        ------
        AngleGuardError
            If any stage leaves the contact-angle window.
        """
        if snap is None or snap.state is not state:
            snap = self.evaluate(state)
        k1 = (snap.dc, snap.deta, snap.dpsi)
        s2 = self._advance(state, k1, 0.5 * dt)
        k2 = self.rhs(s2)
        s3 = self._advance(state, k2, 0.5 * dt)
        k3 = self.rhs(s3)
        s4 = self._advance(state, k3, dt)
        k4 = self.rhs(s4)
        k = tuple((a + 2 * b + 2 * cc + d) / 6.0 for a, b, cc, d in zip(k1, k2, k3, k4))
        new = self._advance(state, k, dt)
        rep = StepReport(state.t, dt, snap.omega, snap.v_c, snap.m_c, len(snap.mesh.triangles),
                         _min_angle_deg(snap.mesh), snap.remeshed, snap.domain.volume)
        return new, rep, snap

    def contact_consistency(self, state: SimState) -> float:
        """Compatibility defect ``|v(X_c) . tau_b + v_c|`` between the flow and the law."""
        return self.evaluate(state).m_c

    def velocity_from_state(self, state: SimState):
        """Potential ``phi`` and projected velocity field ``grad phi`` on the state's mesh."""
        snap = self.evaluate(state, check_guard=False)
        return elliptic.nodal_gradient(snap.phi), snap.phi


# ----------------------------------------------------------------------
# equilibrium construction
# ----------------------------------------------------------------------


def _shoot(physics, bottom, wall, level, C):
    """Integrate the meniscus from the wall toward the beach; return the contact data."""
    sig, g = physics.sigma, physics.gravity

    def f(x, y):
        eta, s = y
        return [s, -(C - g * eta) * (1 + s * s) ** 1.5 / sig]

    def hit(x, y):
        return y[0] - bottom(x)

    hit.terminal = True
    sol = solve_ivp(f, (wall, wall - 50 * max(1.0, wall)), [level, 0.0], events=hit,
                    rtol=1e-12, atol=1e-14, dense_output=True, max_step=0.05)
    if not sol.t_events[0].size:
        raise ConfigError("meniscus does not reach the beach")
    c = float(sol.t_events[0][0])
    slope = float(sol.y_events[0][0][1])
    return c, slope, sol.sol


def equilibrium_state(sim: Simulator, level: float = 0.0, tol: float = 1e-13) -> SimState:
    """Discrete static meniscus with ``sigma kappa + g eta = C`` at every marker.

    The contact angle equals ``omega_s`` and ``psi = 0``.  A shooting
    solution of the meniscus ODE from the wall (height ``level``, zero
    slope) provides the initial guess; the discrete system in the marker
    heights, the contact abscissa and ``C`` is then solved to ``tol``.
    In angle mode the corner slope is built into the surface spline, so the
    wall height is pinned to ``level`` instead of imposing the angle.  In
    kinematic mode the level is fixed only through the exponentially small
    far-field tail, so the system is badly conditioned and may fail with
    :class:`ConfigError`.
    """
    ph, bottom = sim.physics, sim.bottom
    g = ph.gravity

    def angle_err(C):
        try:
            c, slope, _ = _shoot(ph, bottom, sim.wall, level, C)
        except ConfigError:
            return np.nan
        return np.arctan(slope) - np.arctan(bottom.slope(c)) - ph.omega_s

    C0 = g * level
    e0 = angle_err(C0)
    C = C0
    if not abs(e0) < 1e-14:
        # the meniscus grows like exp(|x - L| sqrt(g/sigma)) in C - g*level,
        # so widen the bracket geometrically from a tiny span
        for span in np.geomspace(1e-12, 1.0, 61) * max(g, 1e-12):
            lo, hi = angle_err(C0 - span), angle_err(C0 + span)
            if np.isfinite(lo) and np.isfinite(e0) and lo * e0 <= 0:
                C = brentq(angle_err, C0 - span, C0, xtol=1e-16)
                break
            if np.isfinite(hi) and np.isfinite(e0) and hi * e0 <= 0:
                C = brentq(angle_err, C0, C0 + span, xtol=1e-16)
                break
        else:
            raise ConfigError("no meniscus with the static angle was found")
    c, _, prof = _shoot(ph, bottom, sim.wall, level, C)
    x = sim.positions(c)
    eta_tail = prof(x[1:])[0]
    psi0 = np.zeros(len(x))

    def residual(p):
        st = sim.make_state(0.0, p[0], p[1:-1], psi0)
        surf = sim.surface(st)
        kap = surf.curvature(st.x)
        if sim.contact_mode == "angle" and not ph.pinned:
            extra = st.eta[-1] - level
        else:
            extra = np.arctan(surf.slope(st.c)) - np.arctan(bottom.slope(st.c)) - ph.omega_s
        return np.concatenate([ph.sigma * kap + g * st.eta - p[-1], [extra]])

    p0 = np.concatenate([[c], eta_tail, [C]])
    p = p0
    r = residual(p)
    for _ in range(30):  # damped Newton; the shooting guess is within O(h^2)
        if np.max(np.abs(r)) < tol:
            break
        step = np.linalg.solve(_fd_jacobian(residual, p), r)
        lam = 1.0
        while lam > 1e-3:
            try:
                trial = p - lam * step
                rt = residual(trial)
            except (GeometryError, AngleGuardError):
                rt = None
            if rt is not None and np.max(np.abs(rt)) < np.max(np.abs(r)):
                break
            lam *= 0.5
        else:
            break
        p, r = trial, rt
    r = residual(p)
    if np.max(np.abs(r)) > 1e3 * tol:
        raise ConfigError(f"discrete equilibrium not found (residual {np.max(np.abs(r)):.2e})")
    return sim.make_state(0.0, p[0], p[1:-1], psi0)


def _fd_jacobian(fun, p, eps=1e-7):
    f0 = fun(p)
    J = np.empty((len(f0), len(p)))
    for j in range(len(p)):
        dp = np.zeros_like(p)
        dp[j] = eps * max(1.0, abs(p[j]))
        J[:, j] = (fun(p + dp) - fun(p - dp)) / (2 * dp[j])
    return J


def flat_contact_abscissa(bottom: BottomProfile, level: float) -> float:
    """Abscissa where the beach reaches height ``level``."""
    return float((bottom.offset - level) / np.tan(bottom.slope_angle))


def perturbed_state(sim: Simulator, level: float = 0.0, d_omega: float = 0.05,
                    decay: float = 0.5, bump: float = 0.0, bump_x: float = 2.0,
                    bump_width: float = 0.4, compatible: bool = True) -> SimState:
    """Flat water with the contact angle tilted by ``d_omega`` and an optional Gaussian bump.

    ``eta = level + tan(d_omega) (x - c) exp(-(x - c)/decay) + bump G(x)``
    with ``c`` the flat-water contact abscissa, so the initial angle is the
    beach angle plus ``d_omega``.  With ``compatible`` the potential
    ``psi = A (x - c) exp(-(x - c)/decay)`` is chosen so that the fluid at
    the corner already moves with the contact-line speed.
    """
    c = flat_contact_abscissa(sim.bottom, level)

    def eta(x):
        r = x - c
        return (level + np.tan(d_omega) * r * np.exp(-r / decay)
                + bump * np.exp(-((x - bump_x) / bump_width) ** 2))

    st = sim.state_from_surface(c, eta)
    if not compatible or sim.physics.pinned:
        return st
    surf = st.surface
    omega = float(np.arctan(surf.slope(c)) - np.arctan(sim.bottom.slope(c)))
    vc = contact_speed(omega, sim.physics)
    ex = float(surf.slope(c))
    that = np.array([1.0, ex]) / np.hypot(1.0, ex)
    amp = -vc * np.hypot(1.0, ex) * float(that @ sim.bottom.tangent(c))
    r = st.x - c
    return replace(st, psi=amp * r * np.exp(-r / decay))


def with_psi(state: SimState, psi) -> SimState:
    return replace(state, psi=np.asarray(psi, dtype=float))


@dataclass
class RunResult:
    reports: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    final_state: SimState | None = None
    error: Exception | None = None


def run(sim: Simulator, state: SimState, t_end: float, dt: float | None = None,
        reference=None, n_steps: int | None = None, callback=None,
        energy_every: int = 1, high_energy: bool = False) -> RunResult:
    """Advance ``state`` to ``t_end`` (or ``n_steps``) recording energy reports.

    Each report is computed from the first RK stage of the step, so it
    costs no extra solve.  On a guard breach the partial series is returned
    with ``error`` set.
    """
    from . import energy

    if reference is None:
        reference = energy.reference_from_state(state)
    out = RunResult()
    if dt is None:
        dt = sim.dt_max(state)
    if n_steps is None:
        n_steps = int(np.ceil((t_end - state.t) / dt - 1e-9))
    snap = None
    for k in range(n_steps + 1):
        try:
            snap = sim.evaluate(state) if snap is None or snap.state is not state else snap
        except AngleGuardError as exc:
            out.error = exc
            break
        if k % energy_every == 0 or k == n_steps:
            rep = energy.report_from_snapshot(snap, sim, reference, high=high_energy)
            out.reports.append(rep)
            if callback is not None:
                callback(rep, snap)
        if k == n_steps:
            break
        try:
            new, srep, _ = sim.step(state, dt, snap)
        except AngleGuardError as exc:
            out.error = exc
            break
        out.steps.append(srep)
        state = new
    out.final_state = state
    return out
