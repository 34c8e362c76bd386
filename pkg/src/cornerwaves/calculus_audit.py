"""Numerical audits of material-derivative and commutator identities.

Every audit compares a finite-difference material derivative, obtained
by transporting the domain with a closed-form flow over a short time
``delta``, with a closed-form right-hand side evaluated on the current
domain.  The transported mesh keeps the topology and moves every dof
with the flow, so nodal values carried unchanged realise data with zero
material derivative.  The defect shrinks like ``delta``; halving
``delta`` should halve it (Richardson slope one).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import elliptic, fem
from .elliptic import MixedBVPSpec, ScalarField, VectorField
from .errors import DataError
from .geometry import BOTTOM, TOP, ParametricCurve

log = logging.getLogger(__name__)

SLOPE_TARGET = 1.0
SLOPE_TOL = 0.3
ZERO_TOL = 1e-10


# ----------------------------------------------------------------------
# test flows
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class TestFlow:
    """Closed-form velocity field with its first and second derivatives.

    ``grad(x, z)[..., j, i] = d_i v_j`` and ``hess(x, z)[..., j, i, k] =
    d_i d_k v_j``.
    """

    __test__ = False  # not a pytest class

    name: str
    velocity: object
    grad: object
    hess: object
    bottom_compatible: bool = True
    solenoidal: bool = True

    def __call__(self, x, z):
        return self.velocity(x, z)

    def laplacian(self, x, z):
        H = self.hess(x, z)
        return H[..., 0, 0] + H[..., 1, 1]

    def invariant_defects(self, points, step: float = 1e-5) -> dict:
        """Sampled divergence, curl and gradient consistency by central differences."""
        p = np.atleast_2d(np.asarray(points, float))
        x, z = p[:, 0], p[:, 1]
        dx = (self.velocity(x + step, z) - self.velocity(x - step, z)) / (2 * step)
        dz = (self.velocity(x, z + step) - self.velocity(x, z - step)) / (2 * step)
        G = self.grad(x, z)
        fd = np.stack([dx, dz], axis=-1)  # [..., j, i]
        return {"div": float(np.max(np.abs(dx[:, 0] + dz[:, 1]))),
                "curl": float(np.max(np.abs(dx[:, 1] - dz[:, 0]))),
                "grad": float(np.max(np.abs(fd - G)))}

    def check(self, points, tol: float = 1e-8) -> dict:
        """Raise :class:`DataError` if the sampled invariants fail."""
        d = self.invariant_defects(points)
        if d["curl"] > tol or (self.solenoidal and d["div"] > tol) or d["grad"] > 1e3 * tol:
            raise DataError(f"flow {self.name!r} violates its invariants: {d}")
        return d


def canonical_flow(k: float = 1.0, depth: float = 1.0, amplitude: float = 0.2) -> TestFlow:
    """Gradient of ``A cosh(k(z+d)) cos(kx) / cosh(kd)``; tangent to ``z = -d``."""
    a = amplitude * k / np.cosh(k * depth)

    def vel(x, z):
        x, z = np.broadcast_arrays(np.asarray(x, float), np.asarray(z, float))
        ch, sh = np.cosh(k * (z + depth)), np.sinh(k * (z + depth))
        return a * np.stack([-ch * np.sin(k * x), sh * np.cos(k * x)], axis=-1)

    def grad(x, z):
        x, z = np.broadcast_arrays(np.asarray(x, float), np.asarray(z, float))
        ch, sh = np.cosh(k * (z + depth)), np.sinh(k * (z + depth))
        s, c = np.sin(k * x), np.cos(k * x)
        g = np.empty(x.shape + (2, 2))
        g[..., 0, 0] = -ch * c
        g[..., 0, 1] = -sh * s
        g[..., 1, 0] = -sh * s
        g[..., 1, 1] = ch * c
        return a * k * g

    def hess(x, z):
        x, z = np.broadcast_arrays(np.asarray(x, float), np.asarray(z, float))
        ch, sh = np.cosh(k * (z + depth)), np.sinh(k * (z + depth))
        s, c = np.sin(k * x), np.cos(k * x)
        h = np.empty(x.shape + (2, 2, 2))
        # v_x = -ch s,  v_z = sh c  (times a)
        h[..., 0, 0, 0] = ch * s
        h[..., 0, 0, 1] = h[..., 0, 1, 0] = -sh * c
        h[..., 0, 1, 1] = -ch * s
        h[..., 1, 0, 0] = -sh * c
        h[..., 1, 0, 1] = h[..., 1, 1, 0] = -ch * s
        h[..., 1, 1, 1] = sh * c
        return a * k * k * h

    return TestFlow(f"canonical(k={k:g}, d={depth:g})", vel, grad, hess)


def _affine_flow(name, A, b=(0.0, 0.0), bottom_compatible=True):
    A = np.asarray(A, float)
    b = np.asarray(b, float)

    def vel(x, z):
        x, z = np.broadcast_arrays(np.asarray(x, float), np.asarray(z, float))
        return np.stack([x, z], axis=-1) @ A.T + b

    def grad(x, z):
        x = np.asarray(x, float)
        return np.broadcast_to(A, np.broadcast(x, np.asarray(z, float)).shape + (2, 2)).copy()

    def hess(x, z):
        shape = np.broadcast(np.asarray(x, float), np.asarray(z, float)).shape
        return np.zeros(shape + (2, 2, 2))

    return TestFlow(name, vel, grad, hess, bottom_compatible, solenoidal=np.trace(A) == 0)


def zero_flow() -> TestFlow:
    return _affine_flow("zero", np.zeros((2, 2)))


def translation_flow(u: float = 1.0, w: float = 0.0) -> TestFlow:
    return _affine_flow("translation", np.zeros((2, 2)), (u, w), bottom_compatible=w == 0)


def scaling_flow() -> TestFlow:
    """``v = (x, z)``: uniform dilation about the origin."""
    return _affine_flow("scaling", np.eye(2), bottom_compatible=False)


def stretching_flow(rate: float = 1.0, depth: float = 1.0) -> TestFlow:
    """``v = (0, rate (z + d))``: vertical stretching over the floor ``z = -d``."""
    return _affine_flow("stretching", [[0.0, 0.0], [0.0, rate]], (0.0, rate * depth))


def transport_points(points, flow: TestFlow, delta: float) -> np.ndarray:
    """One classical RK4 step of ``dX/dt = v(X)``."""
    p = np.asarray(points, float)

    def f(q):
        return flow(q[..., 0], q[..., 1])

    k1 = f(p)
    k2 = f(p + 0.5 * delta * k1)
    k3 = f(p + 0.5 * delta * k2)
    k4 = f(p + delta * k3)
    return p + delta * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0


@dataclass
class TransportPair:
    """A mesh and its image under the flow after time ``delta`` (same topology)."""

    mesh: object
    moved: object
    delta: float

    @classmethod
    def build(cls, mesh, flow: TestFlow, delta: float) -> "TransportPair":
        moved = mesh.with_nodes(transport_points(mesh.nodes, flow, delta))
        if not np.all(moved.signed_areas > 0):  # also catches nan
            raise DataError(f"transport by {delta:g} inverts elements; use a smaller delta")
        return cls(mesh, moved, float(delta))


# ----------------------------------------------------------------------
# velocity samplers
# ----------------------------------------------------------------------


class _Velocity:
    """Velocity, gradient and Laplacian at nodes, quadrature and facet points."""

    has_hessian = False

    def nodes(self, mesh):
        raise NotImplementedError

    def qp(self, mesh):
        raise NotImplementedError

    def facet(self, mesh, tag):
        raise NotImplementedError


class AnalyticVelocity(_Velocity):
    """Sampler of a :class:`TestFlow`."""

    has_hessian = True

    def __init__(self, flow: TestFlow):
        self.flow = flow

    def _at(self, p):
        x, z = p[..., 0], p[..., 1]
        return self.flow(x, z), self.flow.grad(x, z), self.flow.laplacian(x, z)

    def nodes(self, mesh):
        return self._at(mesh.nodes)

    def qp(self, mesh):
        return self._at(fem.element_geometry(mesh).x)

    def facet(self, mesh, tag):
        return self._at(fem.facet_geometry(mesh, tag).x)

    def hess(self, p):
        return self.flow.hess(p[..., 0], p[..., 1])


class PotentialVelocity(_Velocity):
    """``v = grad phi`` from a finite-element potential; ``Delta v = 0`` is used exactly."""

    def __init__(self, phi: ScalarField):
        self.phi = phi
        self._v = elliptic.nodal_gradient(phi).values
        self._g = elliptic.nodal_hessian(phi)  # symmetric, so [j, i] ordering is immaterial

    def nodes(self, mesh):
        self._same(mesh)
        return self._v, self._g, np.zeros_like(self._v)

    def qp(self, mesh):
        self._same(mesh)
        v = fem.interpolate_qp(mesh, self._v)
        return v, fem.interpolate_qp(mesh, self._g), np.zeros_like(v)

    def facet(self, mesh, tag):
        self._same(mesh)
        f = fem.facet_geometry(mesh, tag)
        v = np.einsum("qa,fa...->fq...", f.phi, self._v[f.dofs])
        return v, np.einsum("qa,fa...->fq...", f.phi, self._g[f.dofs]), np.zeros_like(v)

    def _same(self, mesh):
        if mesh is not self.phi.mesh:
            raise DataError("potential lives on a different mesh")


def as_velocity(v) -> _Velocity:
    if isinstance(v, _Velocity):
        return v
    if isinstance(v, TestFlow):
        return AnalyticVelocity(v)
    if isinstance(v, ScalarField):
        return PotentialVelocity(v)
    raise DataError("velocity must be a TestFlow, a potential ScalarField or a sampler")


# ----------------------------------------------------------------------
# surface helpers
# ----------------------------------------------------------------------


def top_dofs_sorted(mesh) -> np.ndarray:
    top = mesh.tag_dofs(TOP)
    return top[np.argsort(mesh.nodes[top, 0])]


def top_curve(mesh) -> tuple[np.ndarray, ParametricCurve]:
    """TOP dofs ordered by abscissa and the quintic curve through them."""
    top = top_dofs_sorted(mesh)
    return top, ParametricCurve(mesh.nodes[top])


def _full(mesh, dofs, values):
    out = np.zeros(mesh.n_dofs)
    out[dofs] = values
    return out


def kappa_trace(mesh, surface=None) -> np.ndarray:
    """Curvature at every dof (zero off TOP); from ``surface`` if given, else from the TOP dofs."""
    top, curve = top_curve(mesh)
    if surface is not None:
        kap = surface.curvature(np.clip(mesh.nodes[top, 0], surface.c, surface.L))
    else:
        kap = curve.curvature()
    return _full(mesh, top, kap)


def surface_velocity_derivatives(curve: ParametricCurve, vel, v, G, points):
    """``v_s`` and ``v_ss`` along ``curve`` at its nodes.

    With a Hessian the chain rule ``v_ss = H[t, t] - kappa G n`` is used,
    otherwise a quintic spline of the sampled velocity.
    """
    t, n = curve.frame()
    kap = curve.curvature()
    vs = np.einsum("...ji,...i->...j", G, t)
    if getattr(vel, "has_hessian", False):
        H = vel.hess(points)
        vss = np.einsum("...jik,...i,...k->...j", H, t, t) - kap[:, None] * np.einsum(
            "...ji,...i->...j", G, n)
    else:
        vss = curve.d_ds(v, order=2)[1]
    return vs, vss


def dt_kappa(curve: ParametricCurve, v, G, vs, vss) -> dict:
    """Both closed forms of the material derivative of curvature at the curve nodes.

    ``"intrinsic"``: ``-Delta_s (v.n) - kappa^2 (v.n) + kappa_s (v.t)``;
    ``"ambient"``: ``-v_ss . n - 2 kappa t . v_s``.
    """
    t, n = curve.frame()
    kap = curve.curvature()
    vn = np.sum(v * n, axis=-1)
    vt = np.sum(v * t, axis=-1)
    vn_ss = curve.d_ds(vn, order=2)[1]
    kap_s = curve.d_ds(kap, order=1)[0]
    form1 = -vn_ss - kap**2 * vn + kap_s * vt
    form2 = -np.sum(vss * n, axis=-1) - 2.0 * kap * np.sum(t * vs, axis=-1)
    return {"intrinsic": form1, "ambient": form2}


def dt_kappa_markers(points, v) -> np.ndarray:
    """``D_t kappa`` at curve markers from sampled marker velocities ``v`` (ambient form).

    Useful when no analytic gradient is available: the spline through the
    markers sets the resolution instead of the finite-element trace.
    """
    curve = ParametricCurve(points)
    vs, vss = curve.d_ds(np.asarray(v, float), order=2)
    return dt_kappa(curve, v, None, vs, vss)["ambient"]


def commutator_source(mesh, u: ScalarField, vel, bottom=None):
    """Data of the elliptic problem solved by the commutator of ``D_t`` with a solve.

    Returns ``(h, g)`` at volume and BOTTOM facet quadrature points with
    ``h = 2 grad v : grad^2 u + Delta v . grad u`` and
    ``g = (grad_{n_b} v - grad_v n_b) . grad u``.
    """
    vel = as_velocity(vel)
    grad_u = elliptic.nodal_gradient(u).values
    hess = np.stack([fem.gradient_qp(mesh, grad_u[:, 0]), fem.gradient_qp(mesh, grad_u[:, 1])],
                    axis=-2)  # [..., j, i] = d_i d_j u
    gu = fem.gradient_qp(mesh, u.values)
    _, Gq, Lq = vel.qp(mesh)
    h = 2.0 * np.einsum("...ji,...ji->...", Gq, hess) + np.sum(Lq * gu, axis=-1)
    return h, _bottom_datum(mesh, vel, fem.facet_gradient(mesh, BOTTOM, u.values), bottom)


def _bottom_datum(mesh, vel, w_f, bottom):
    """``(grad_{n_b} v - grad_v n_b) . w`` at BOTTOM facet quadrature points."""
    geo = fem.facet_geometry(mesh, BOTTOM)
    vf, Gf, _ = vel.facet(mesh, BOTTOM)
    dn_v = np.einsum("...ji,...i->...j", Gf, geo.normal)
    g = np.sum(dn_v * w_f, axis=-1)
    if bottom is not None:
        x = geo.x[..., 0]
        tb = bottom.tangent(x)
        g = g - bottom.curvature(x) * np.sum(vf * tb, axis=-1) * np.sum(w_f * tb, axis=-1)
    return g


def _laplace_inverse(mesh, h, g) -> ScalarField:
    return elliptic.solve_mixed(mesh, MixedBVPSpec(h=h, g=g))


# ----------------------------------------------------------------------
# J and its material derivative
# ----------------------------------------------------------------------


def compute_J(mesh, surface=None, kappa=None) -> VectorField:
    """``J = grad H(kappa)``, the gradient of the harmonic extension of the curvature."""
    kap = kappa_trace(mesh, surface) if kappa is None else kappa
    return elliptic.nodal_gradient(elliptic.harmonic_extension(mesh, kap))


def dt_J_formula(mesh, v, bottom=None, J: VectorField | None = None, surface=None,
                 dt_kappa_top=None) -> VectorField:
    """Closed-form material derivative of ``J``.

    ``D_t J = grad H(D_t kappa) + grad Delta^{-1}(2 grad v : grad J + Delta v . J,
    (grad_{n_b} v - grad_v n_b) . J) - (grad v)^T J`` with
    ``D_t kappa = -v_ss . n - 2 kappa t . v_s`` on TOP.

    Parameters
    ----------
    mesh : Mesh
    v : TestFlow, ScalarField (potential) or sampler
    bottom : BottomProfile or None
    J : VectorField, optional
        Precomputed ``J``; computed from ``surface`` (or the TOP dofs) if omitted.
    surface : SurfaceCurve, optional
    dt_kappa_top : ndarray, optional
        ``D_t kappa`` at the TOP dofs ordered by abscissa; computed from the
        velocity trace when omitted.
    """
    vel = as_velocity(v)
    if J is None:
        J = compute_J(mesh, surface)
    vn, Gn, _ = vel.nodes(mesh)
    top, curve = top_curve(mesh)
    if dt_kappa_top is None:
        vs, vss = surface_velocity_derivatives(curve, vel, vn[top], Gn[top], mesh.nodes[top])
        dk = dt_kappa(curve, vn[top], Gn[top], vs, vss)["ambient"]
    else:
        dk = np.asarray(dt_kappa_top, float)
    t1 = elliptic.nodal_gradient(elliptic.harmonic_extension(mesh, _full(mesh, top, dk)))

    Jv = J.values
    gJ = np.stack([fem.gradient_qp(mesh, Jv[:, 0]), fem.gradient_qp(mesh, Jv[:, 1])], axis=-2)
    _, Gq, Lq = vel.qp(mesh)
    Jq = fem.interpolate_qp(mesh, Jv)
    h = 2.0 * np.einsum("...ji,...ji->...", Gq, gJ) + np.sum(Lq * Jq, axis=-1)
    geo = fem.facet_geometry(mesh, BOTTOM)
    Jf = np.einsum("qa,fa...->fq...", geo.phi, Jv[geo.dofs])
    g = _bottom_datum(mesh, vel, Jf, bottom)
    t2 = elliptic.nodal_gradient(_laplace_inverse(mesh, h, g))
    t3 = np.einsum("nji,nj->ni", Gn, Jv)
    return VectorField.from_array(mesh, t1.values + t2.values - t3)


# ----------------------------------------------------------------------
# audit results
# ----------------------------------------------------------------------


@dataclass
class AuditResult:
    """Outcome of one identity audit.

    ``defects[k]`` is the largest gap between the transported finite
    difference at ``deltas[k]`` and the closed form; ``slope`` is the
    Richardson slope ``log2(defect(delta) / defect(delta/2))`` of the last
    pair.
    """

    identity: str
    deltas: list
    defects: list
    scale: float
    slope: float
    passed: bool
    notes: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"identity": self.identity, "deltas": list(map(float, self.deltas)),
                "defects": list(map(float, self.defects)), "scale": float(self.scale),
                "slope": float(self.slope), "pass": bool(self.passed), **self.notes}


def _finish(identity, deltas, defects, scale, zero_flow_case, notes=None) -> AuditResult:
    defects = [float(d) for d in defects]
    exact = max(defects) <= ZERO_TOL * max(1.0, scale)
    if zero_flow_case or exact:
        # nothing left to extrapolate: the identity holds to solver precision
        notes = {**(notes or {}), "exact": exact}
        return AuditResult(identity, list(deltas), defects, scale, float("nan"), exact, notes)
    if len(defects) < 2 or min(defects[-2:]) <= 0:
        slope = float("nan")
    else:
        slope = float(np.log(defects[-2] / defects[-1]) / np.log(deltas[-2] / deltas[-1]))
    ok = bool(np.isfinite(slope) and abs(slope - SLOPE_TARGET) <= SLOPE_TOL)
    return AuditResult(identity, list(deltas), defects, scale, slope, ok, notes or {})


def _is_zero(flow) -> bool:
    return isinstance(flow, TestFlow) and flow.name == "zero"


def probe_dofs(mesh, distance: float | None = None) -> np.ndarray:
    """Interior dofs at least ``distance`` (default two median edge lengths) from the boundary."""
    if distance is None:
        distance = 2.0 * float(np.median(mesh.edge_lengths))
    bnd = mesh.nodes[mesh.boundary_dofs]
    d, _ = cKDTree(bnd).query(mesh.nodes)
    probes = np.flatnonzero(d >= distance)
    if probes.size == 0:
        raise DataError("no probe points; refine the mesh")
    return probes


def _sample(mesh, f):
    if callable(f):
        return np.asarray(f(mesh.nodes[:, 0], mesh.nodes[:, 1]), float) * np.ones(mesh.n_dofs)
    arr = np.asarray(f, float)
    if arr.ndim == 0:
        return np.full(mesh.n_dofs, float(arr))
    return arr


def _halving(delta, levels):
    return [delta / 2**k for k in range(levels)]


# ----------------------------------------------------------------------
# audits on meshes
# ----------------------------------------------------------------------


def audit_Dt_harmonic(mesh, f, flow: TestFlow, bottom=None, delta: float = 0.04,
                      levels: int = 2, probes=None,
                      rhs_flow: TestFlow | None = None) -> AuditResult:
    """Material derivative of a harmonic extension with materially carried data.

    lhs: ``[H_{t+delta}(f) - H_t(f)] / delta`` at transported probe dofs;
    rhs: ``Delta^{-1}(2 grad v : grad^2 f_H + Delta v . grad f_H,
    (grad_{n_b} v - grad_v n_b) . grad f_H)``.
    """
    fv = _sample(mesh, f)
    probes = probe_dofs(mesh) if probes is None else probes
    u0 = elliptic.harmonic_extension(mesh, fv)
    h, g = commutator_source(mesh, u0, rhs_flow or flow, bottom)
    rhs = _laplace_inverse(mesh, h, g).values[probes]
    deltas = _halving(delta, levels)
    defects = []
    for d in deltas:
        moved = TransportPair.build(mesh, flow, d).moved
        lhs = (elliptic.harmonic_extension(moved, fv).values[probes] - u0.values[probes]) / d
        defects.append(np.max(np.abs(lhs - rhs)))
    return _finish("Dt_harmonic", deltas, defects, float(np.max(np.abs(rhs))), _is_zero(flow))


def audit_Dt_laplace_inverse(mesh, h, g, flow: TestFlow, bottom=None, delta: float = 0.04,
                             levels: int = 2, probes=None,
                             rhs_flow: TestFlow | None = None) -> AuditResult:
    """Material derivative of ``Delta^{-1}(h, g)`` with materially carried ``h`` and ``g``."""
    hv, gv = _sample(mesh, h), _sample(mesh, g)
    probes = probe_dofs(mesh) if probes is None else probes
    u0 = _laplace_inverse(mesh, hv, gv)
    hs, gs = commutator_source(mesh, u0, rhs_flow or flow, bottom)
    rhs = _laplace_inverse(mesh, hs, gs).values[probes]
    deltas = _halving(delta, levels)
    defects = []
    for d in deltas:
        moved = TransportPair.build(mesh, flow, d).moved
        lhs = (_laplace_inverse(moved, hv, gv).values[probes] - u0.values[probes]) / d
        defects.append(np.max(np.abs(lhs - rhs)))
    return _finish("Dt_laplace_inverse", deltas, defects, float(np.max(np.abs(rhs))),
                   _is_zero(flow))


def _top_interior(mesh, top, margin):
    x = mesh.nodes[top, 0]
    lo, hi = x.min(), x.max()
    return (x >= lo + margin) & (x <= hi - margin)


def dn_commutator(mesh, f, flow, bottom=None) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form ``[D_t, N] f`` at TOP dofs (ordered by abscissa).

    ``d_n Delta^{-1}(source) - grad_n v . grad f_H - grad_{(grad f_H)^T} v . n``.
    """
    vel = as_velocity(flow)
    fv = _sample(mesh, f)
    top, curve = top_curve(mesh)
    u0 = elliptic.harmonic_extension(mesh, fv)
    hs, gs = commutator_source(mesh, u0, vel, bottom)
    w = _laplace_inverse(mesh, hs, gs)
    flux_w = _on_sorted(mesh, elliptic.top_flux(mesh, w, h=hs, g=gs), top)
    Nf = _on_sorted(mesh, elliptic.top_flux(mesh, u0), top)
    t, n = curve.frame()
    fs = curve.d_ds(fv[top], order=1)[0]
    grad_f = fs[:, None] * t + Nf[:, None] * n
    _, G, _ = vel.nodes(mesh)
    G = G[top]
    dn_v = np.einsum("kji,ki->kj", G, n)
    tang = fs[:, None] * t
    dtan_v = np.einsum("kji,ki->kj", G, tang)
    rhs = flux_w - np.sum(dn_v * grad_f, axis=1) - np.sum(dtan_v * n, axis=1)
    return top, rhs


def _on_sorted(mesh, trace, top):
    full = np.zeros(mesh.n_dofs)
    full[trace.dofs] = trace.values
    return full[top]


def audit_Dt_DN(mesh, f, flow: TestFlow, bottom=None, delta: float = 0.04, levels: int = 2,
                margin: float | None = None, rhs_flow: TestFlow | None = None) -> AuditResult:
    """Material derivative of the Dirichlet-Neumann map with materially carried data.

    Compared at TOP dofs farther than ``margin`` (default two median edge
    lengths) from the walls.
    """
    fv = _sample(mesh, f)
    top, rhs = dn_commutator(mesh, fv, rhs_flow or flow, bottom)
    margin = 2.0 * float(np.median(mesh.edge_lengths)) if margin is None else margin
    keep = _top_interior(mesh, top, margin)
    N0 = _on_sorted(mesh, elliptic.dn_operator(mesh, fv), top)
    deltas = _halving(delta, levels)
    defects = []
    for d in deltas:
        moved = TransportPair.build(mesh, flow, d).moved
        Nd = _on_sorted(moved, elliptic.dn_operator(moved, fv), top)
        lhs = (Nd - N0) / d
        defects.append(np.max(np.abs(lhs - rhs)[keep]))
    return _finish("Dt_DN", deltas, defects, float(np.max(np.abs(rhs[keep]))), _is_zero(flow))


def audit_Dt_J(mesh, flow: TestFlow, bottom=None, delta: float = 0.04, levels: int = 2,
               probes=None, rhs_flow: TestFlow | None = None) -> AuditResult:
    """Transported finite difference of ``J`` against :func:`dt_J_formula`."""
    probes = probe_dofs(mesh) if probes is None else probes
    J0 = compute_J(mesh)
    rhs = dt_J_formula(mesh, rhs_flow or flow, bottom, J0).values[probes]
    deltas = _halving(delta, levels)
    defects = []
    for d in deltas:
        moved = TransportPair.build(mesh, flow, d).moved
        lhs = (compute_J(moved).values[probes] - J0.values[probes]) / d
        defects.append(np.max(np.abs(lhs - rhs)))
    return _finish("Dt_J", deltas, defects, float(np.max(np.abs(rhs))), _is_zero(flow))


# ----------------------------------------------------------------------
# audits on curves
# ----------------------------------------------------------------------


def _curve_fields(points, flow):
    curve = ParametricCurve(points)
    vel = AnalyticVelocity(flow)
    v = flow(points[:, 0], points[:, 1])
    G = flow.grad(points[:, 0], points[:, 1])
    vs, vss = surface_velocity_derivatives(curve, vel, v, G, points)
    return curve, v, G, vs, vss


def _interior(n, trim):
    keep = np.zeros(n, bool)
    keep[trim:n - trim] = True
    return keep


def audit_Dt_curvature(points, flow: TestFlow, delta: float = 0.04, levels: int = 2,
                       trim: int = 3, form_tol: float = 1e-6,
                       rhs_flow: TestFlow | None = None) -> AuditResult:
    """Material derivative of the curvature at curve markers.

    The finite difference follows the markers under the flow.  Both closed
    forms are evaluated; ``notes["form_gap"]`` is their largest pointwise
    difference (excluding ``trim`` markers at each end, where one-sided
    spline derivatives are least accurate).
    """
    pts = np.asarray(points, float)
    curve, v, G, vs, vss = _curve_fields(pts, rhs_flow or flow)
    forms = dt_kappa(curve, v, G, vs, vss)
    rhs = forms["ambient"]
    keep = _interior(len(pts), trim)
    gap = float(np.max(np.abs(forms["intrinsic"] - rhs)[keep]))
    k0 = curve.curvature()
    deltas = _halving(delta, levels)
    defects = []
    for d in deltas:
        moved = ParametricCurve(transport_points(pts, flow, d))
        defects.append(np.max(np.abs((moved.curvature() - k0) / d - rhs)[keep]))
    res = _finish("Dt_curvature", deltas, defects, float(np.max(np.abs(rhs[keep]))),
                  _is_zero(flow), {"form_gap": gap, "form_tol": form_tol})
    res.passed = res.passed and gap <= form_tol
    return res


def surface_laplacian_commutator(curve, f_vals, v, G, vs, vss, form: str = "stated"):
    """``D_t Delta_s f - Delta_s D_t f`` on a curve.

    ``"stated"``: ``2 f_ss (t . v_s) - f_s t . v_ss + kappa f_s n . v_s``;
    ``"derived"``: ``-2 f_ss (t . v_s) - f_s t . v_ss + kappa f_s n . v_s``, from
    ``D_t ds = (t . v_s) ds``.
    """
    t, n = curve.frame()
    kap = curve.curvature()
    fs, fss = curve.d_ds(f_vals, order=2)
    lam = np.sum(t * vs, axis=-1)
    rest = -fs * np.sum(t * vss, axis=-1) + kap * fs * np.sum(n * vs, axis=-1)
    sign = {"stated": 2.0, "derived": -2.0}[form]
    return sign * lam * fss + rest


def audit_Dt_surface_laplacian(points, f, flow: TestFlow, delta: float = 0.04,
                               levels: int = 2, trim: int = 3,
                               form: str = "stated",
                               rhs_flow: TestFlow | None = None) -> AuditResult:
    """Commutator of the material derivative with the arclength Laplacian.

    ``f`` is carried by the markers, so the finite difference isolates the
    commutator.  ``notes`` also report the defect of the other form.
    """
    pts = np.asarray(points, float)
    fv = _sample_curve(pts, f)
    curve, v, G, vs, vss = _curve_fields(pts, rhs_flow or flow)
    rhs = {k: surface_laplacian_commutator(curve, fv, v, G, vs, vss, k)
           for k in ("stated", "derived")}
    keep = _interior(len(pts), trim)
    lap0 = curve.d_ds(fv, order=2)[1]
    deltas = _halving(delta, levels)
    defects = {k: [] for k in rhs}
    for d in deltas:
        moved = ParametricCurve(transport_points(pts, flow, d))
        lhs = (moved.d_ds(fv, order=2)[1] - lap0) / d
        for k in rhs:
            defects[k].append(np.max(np.abs(lhs - rhs[k])[keep]))
    other = "derived" if form == "stated" else "stated"
    alt = _finish("", deltas, defects[other], 0.0, _is_zero(flow))
    notes = {"form": form, f"{other}_defects": [float(x) for x in defects[other]],
             f"{other}_slope": alt.slope, f"{other}_pass": alt.passed}
    return _finish("Dt_surface_laplacian", deltas, defects[form],
                   float(np.max(np.abs(rhs[form][keep]))), _is_zero(flow), notes)


def _sample_curve(pts, f):
    if callable(f):
        return np.asarray(f(pts[:, 0], pts[:, 1]), float) * np.ones(len(pts))
    return np.asarray(f, float)


# ----------------------------------------------------------------------
# canonical suite
# ----------------------------------------------------------------------


def canonical_strip(h: float = 0.1, amplitude: float = 0.05, k: float = 1.0,
                    depth: float = 1.0, order: int = 2):
    """Flat-bottom box ``0 < x < pi/k`` with surface ``amplitude cos(kx)`` and its mesh."""
    from .geometry import StripDomain
    from .meshing import MeshSpec, triangulate

    length = np.pi / k
    dom = StripDomain(length, depth, lambda x: amplitude * np.cos(k * x))
    mesh = triangulate(dom, MeshSpec(h, grading=1.0, order=order, resolve_depth=False))
    return dom, mesh


def circle_arc(radius: float = 1.0, half_width: float = 0.7, n: int = 201) -> np.ndarray:
    """Markers on the upper arc of the circle of ``radius`` about the origin."""
    x = np.linspace(-half_width, half_width, n) * radius
    return np.column_stack([x, np.sqrt(radius**2 - x**2)])


def cosine_curve(amplitude: float = 0.05, k: float = 1.0, n: int = 201) -> np.ndarray:
    x = np.linspace(0.0, np.pi / k, n)
    return np.column_stack([x, amplitude * np.cos(k * x)])


AUDITS = ("harmonic", "laplace_inverse", "dn", "surface_laplacian", "curvature", "J",
          "curvature_scaling")


def run_suite(which=AUDITS, h: float = 0.05, delta: float = 0.1, flow: TestFlow | None = None,
              n_markers: int = 201, surface_laplacian_form: str = "stated",
              rhs_flow: TestFlow | None = None) -> list[AuditResult]:
    """Run the selected audits on the canonical strip and test curves.

    ``rhs_flow`` evaluates every closed form with a different flow than the
    one transporting the domain; it exists to exercise the failure path.
    """
    which = list(which)
    unknown = set(which) - set(AUDITS)
    if unknown:
        raise DataError(f"unknown audits: {sorted(unknown)}")
    flow = canonical_flow() if flow is None else flow
    out = []
    mesh = None
    if set(which) & {"harmonic", "laplace_inverse", "dn", "J"}:
        _, mesh = canonical_strip(h)
    cosf = lambda x, z: np.cos(x)  # noqa: E731
    kw = {"delta": delta, "rhs_flow": rhs_flow}
    for name in which:
        log.info("audit %s", name)
        if name == "harmonic":
            out.append(audit_Dt_harmonic(mesh, cosf, flow, **kw))
        elif name == "laplace_inverse":
            out.append(audit_Dt_laplace_inverse(mesh, lambda x, z: np.cos(x) * (z + 1.0),
                                                lambda x, z: np.cos(2 * x), flow, **kw))
        elif name == "dn":
            out.append(audit_Dt_DN(mesh, cosf, flow, **kw))
        elif name == "J":
            out.append(audit_Dt_J(mesh, flow, **kw))
        elif name == "surface_laplacian":
            out.append(audit_Dt_surface_laplacian(cosine_curve(n=n_markers), cosf, flow,
                                                  form=surface_laplacian_form, **kw))
        elif name == "curvature":
            out.append(audit_Dt_curvature(cosine_curve(n=n_markers), flow, **kw))
        elif name == "curvature_scaling":
            res = audit_Dt_curvature(circle_arc(n=n_markers), scaling_flow(), **kw)
            res.identity = "Dt_curvature_scaling"
            arc = ParametricCurve(circle_arc(n=n_markers))
            kap = arc.curvature()
            forms = dt_kappa(arc, *(_curve_fields(arc.points, scaling_flow())[1:]))
            keep = _interior(n_markers, 3)
            rel = np.max(np.abs(forms["ambient"] + kap**2)[keep]) / np.max(kap[keep] ** 2)
            res.notes["rel_err_vs_minus_kappa_sq"] = float(rel)
            out.append(res)
    return out
