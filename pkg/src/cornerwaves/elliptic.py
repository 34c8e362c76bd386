"""Finite-element solvers for the elliptic subproblems on the fluid domain.

All problems share the boundary layout of the corner domain: Dirichlet
data on TOP, Neumann (optionally oblique) data on BOTTOM and natural
conditions on the truncation WALL.  Sign convention: ``Delta u = h``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fem
from .errors import DataError, SolverError
from .geometry import BOTTOM, TOP, WALL

Data = Union[None, float, Callable, np.ndarray, "ScalarField"]

SOLVER_TOL = 1e-10


# ----------------------------------------------------------------------
# fields
# ----------------------------------------------------------------------


class ScalarField:
    """Nodal coefficients of a P1 or P2 field bound to a mesh."""

    __slots__ = ("mesh", "values", "units")

    def __init__(self, mesh, values, units: str = ""):
        values = np.array(values, dtype=float)
        if values.shape != (mesh.n_dofs,):
            raise ValueError(f"expected {mesh.n_dofs} coefficients, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("non-finite field coefficients")
        values.flags.writeable = False
        self.mesh = mesh
        self.values = values
        self.units = units

    def __repr__(self):
        return f"ScalarField(ndofs={self.values.size}, units={self.units!r})"

    def _other(self, other):
        if isinstance(other, ScalarField):
            if other.mesh is not self.mesh:
                raise ValueError("fields live on different meshes")
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.mesh, self.values + self._other(other), self.units)

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.mesh, self.values - self._other(other), self.units)

    def __mul__(self, k):
        return ScalarField(self.mesh, self.values * self._other(k), self.units)

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.mesh, -self.values, self.units)

    def at(self, points):
        return fem.evaluate(self.mesh, self.values, points)

    def gradient(self) -> "VectorField":
        return nodal_gradient(self)

    def trace(self, tag) -> np.ndarray:
        return self.values[self.mesh.tag_dofs(tag)]


class VectorField:
    """Pair of scalar fields sharing one mesh."""

    __slots__ = ("x", "z")

    def __init__(self, x: ScalarField, z: ScalarField):
        if x.mesh is not z.mesh:
            raise ValueError("components must share a mesh")
        self.x = x
        self.z = z

    @classmethod
    def from_array(cls, mesh, arr, units: str = "") -> "VectorField":
        arr = np.asarray(arr, dtype=float)
        return cls(ScalarField(mesh, arr[:, 0], units), ScalarField(mesh, arr[:, 1], units))

    @classmethod
    def from_function(cls, mesh, fun, units: str = "") -> "VectorField":
        """Interpolate ``fun(x, z) -> (n, 2)`` at the dofs."""
        return cls.from_array(mesh, fun(mesh.nodes[:, 0], mesh.nodes[:, 1]), units)

    @property
    def mesh(self):
        return self.x.mesh

    @property
    def values(self) -> np.ndarray:
        return np.column_stack([self.x.values, self.z.values])

    def __add__(self, other):
        return VectorField(self.x + other.x, self.z + other.z)

    def __sub__(self, other):
        return VectorField(self.x - other.x, self.z - other.z)

    def __mul__(self, k):
        return VectorField(self.x * k, self.z * k)

    __rmul__ = __mul__

    def __neg__(self):
        return VectorField(-self.x, -self.z)

    def at(self, points):
        return fem.evaluate(self.mesh, self.values, points)


class Trace(NamedTuple):
    """Values at the dofs of one tagged boundary."""

    dofs: np.ndarray
    points: np.ndarray
    values: np.ndarray


@dataclass
class MixedBVPSpec:
    """Data of the mixed problem.

    ``Delta u = h`` in the domain, ``u = f`` on TOP,
    ``du/dn_b + b0 du/dtau_b = g`` on BOTTOM and ``du/dn = wall`` on WALL.
    Each datum may be None (zero), a constant, a callable ``(x, z)``, a
    :class:`ScalarField`, a nodal array or an array of quadrature values.
    ``b0`` is a constant or a callable of points ``(..., 2)``.
    """

    h: Data = None
    f: Data = None
    g: Data = None
    b0: Union[float, Callable, None] = None
    wall: Data = None
    b0_support: float = np.inf


# ----------------------------------------------------------------------
# data helpers
# ----------------------------------------------------------------------


def _nodal(mesh, data, dofs=None):
    pts = mesh.nodes if dofs is None else mesh.nodes[dofs]
    n = len(pts)
    if data is None:
        return np.zeros(n)
    if isinstance(data, ScalarField):
        return data.values if dofs is None else data.values[dofs]
    if callable(data):
        return np.broadcast_to(np.asarray(data(pts[:, 0], pts[:, 1]), float), (n,)).copy()
    arr = np.asarray(data, dtype=float)
    if arr.ndim == 0:
        return np.full(n, float(arr))
    if arr.shape == (mesh.n_dofs,):
        return arr if dofs is None else arr[dofs]
    if arr.shape == (n,):
        return arr
    raise ValueError(f"cannot interpret data of shape {arr.shape}")


def _volume_qp(mesh, data):
    g = fem.element_geometry(mesh)
    if data is None:
        return np.zeros(g.wdet.shape)
    if callable(data) and not isinstance(data, ScalarField):
        return np.asarray(data(g.x[..., 0], g.x[..., 1]), float) * np.ones(g.wdet.shape)
    if isinstance(data, ScalarField):
        return fem.interpolate_qp(mesh, data.values)
    arr = np.asarray(data, dtype=float)
    if arr.ndim == 0:
        return np.full(g.wdet.shape, float(arr))
    if arr.shape == g.wdet.shape:
        return arr
    if arr.shape == (mesh.n_dofs,):
        return fem.interpolate_qp(mesh, arr)
    raise ValueError(f"cannot interpret volume data of shape {arr.shape}")


def _facet_qp(mesh, tag, data):
    f = fem.facet_geometry(mesh, tag)
    if data is None:
        return np.zeros(f.wds.shape)
    if callable(data) and not isinstance(data, ScalarField):
        return np.asarray(data(f.x[..., 0], f.x[..., 1]), float) * np.ones(f.wds.shape)
    if isinstance(data, ScalarField):
        return fem.facet_values(mesh, tag, data.values)
    arr = np.asarray(data, dtype=float)
    if arr.ndim == 0:
        return np.full(f.wds.shape, float(arr))
    if arr.shape == f.wds.shape:
        return arr
    if arr.shape == (mesh.n_dofs,):
        return fem.facet_values(mesh, tag, arr)
    raise ValueError(f"cannot interpret boundary data of shape {arr.shape}")


def _splu(A):
    try:
        return spla.splu(sp.csc_matrix(A))
    except RuntimeError:
        return None


class _Borrowed(NamedTuple):
    """Factorisation of a nearby matrix with the same sparsity, used as a CG preconditioner."""

    lu: object


class _StalePreconditioner(Exception):
    pass


def _solve(lu, A, b, what: str):
    """Direct solve with one step of refinement; GMRES fallback when factorisation failed.

    A borrowed factorisation (symmetric positive definite systems only)
    drives preconditioned CG; slow convergence raises
    :class:`_StalePreconditioner` so the caller can refactor.
    """
    if isinstance(lu, _Borrowed):
        M = spla.LinearOperator(A.shape, lu.lu.solve)
        x, info = spla.cg(A, b, x0=lu.lu.solve(b), rtol=1e-14, atol=0.0, maxiter=25, M=M)
        if info != 0:
            raise _StalePreconditioner
    elif lu is not None:
        x = lu.solve(b)
        r = b - A @ x
        x = x + lu.solve(r)
    else:
        ilu = spla.spilu(sp.csc_matrix(A), drop_tol=1e-6)
        x, info = spla.gmres(A, b, M=spla.LinearOperator(A.shape, ilu.solve), rtol=1e-12,
                             maxiter=2000)
        if info != 0:
            raise SolverError(f"{what}: iterative solve did not converge (info={info})")
    scale = np.linalg.norm(b) + np.linalg.norm(A @ x) + 1e-300
    res = np.linalg.norm(b - A @ x) / scale
    if not np.isfinite(res) or res > SOLVER_TOL:
        raise SolverError(f"{what}: relative residual {res:.2e} above {SOLVER_TOL:.0e}")
    return x


# ----------------------------------------------------------------------
# mixed problem
# ----------------------------------------------------------------------


def _dirichlet_system(mesh, b0=None):
    """Interior block and its factorisation for TOP-Dirichlet problems (cached)."""
    cacheable = b0 is None or (np.isscalar(b0) and b0 == 0)
    key = ("dir", None if cacheable else id(b0))
    if cacheable and key in mesh.cache:
        return mesh.cache[key]
    K = fem.stiffness(mesh)
    if not cacheable:
        K = K + fem.oblique_form(mesh, BOTTOM, b0)
    D = mesh.tag_dofs(TOP)
    free = np.setdiff1d(np.arange(mesh.n_dofs), D)
    K = sp.csr_matrix(K)
    KII = K[free][:, free].tocsc()
    KID = K[free][:, D]
    tc = mesh.topology_cache
    if cacheable and "dir_lu" in tc:
        lu = _Borrowed(tc["dir_lu"])
    else:
        lu = _splu(KII)
        if cacheable and lu is not None:
            tc["dir_lu"] = lu
    sysm = (K, D, free, KII, KID, lu)
    if cacheable:
        mesh.cache[key] = sysm
    return sysm


def _refactor(mesh, sysm):
    K, D, free, KII, KID, _ = sysm
    lu = _splu(KII)
    mesh.topology_cache["dir_lu"] = lu
    sysm = (K, D, free, KII, KID, lu)
    mesh.cache[("dir", None)] = sysm
    return sysm


def rhs_vector(mesh, h=None, g=None, wall=None) -> np.ndarray:
    """Load vector ``-int h phi + int_BOTTOM g phi + int_WALL wall phi``."""
    F = np.zeros(mesh.n_dofs) if h is None else -fem.load_volume(mesh, _volume_qp(mesh, h))
    if g is not None:
        F += fem.load_boundary(mesh, BOTTOM, _facet_qp(mesh, BOTTOM, g))
    if wall is not None and np.any(mesh.bnd_tags == WALL):
        F += fem.load_boundary(mesh, WALL, _facet_qp(mesh, WALL, wall))
    return F


def solve_mixed(mesh, spec: MixedBVPSpec) -> ScalarField:
    """Galerkin solution of the mixed problem.

    Weak form: ``int grad u . grad phi + int_BOTTOM b0 du/dtau phi
    = -int h phi + int_BOTTOM g phi + int_WALL wall phi`` for test
    functions vanishing on TOP, with ``u = f`` imposed at TOP dofs.
    """
    b0 = spec.b0
    if np.isfinite(spec.b0_support) and b0 is not None and not callable(b0):
        const, rad = float(b0), float(spec.b0_support)
        corner = mesh.nodes[mesh.corner] if mesh.corner is not None else np.zeros(2)

        def b0(points):
            return np.where(np.linalg.norm(points - corner, axis=-1) <= rad, const, 0.0)

    sysm = _dirichlet_system(mesh, b0)
    K, D, free, KII, KID, lu = sysm
    u = np.zeros(mesh.n_dofs)
    u[D] = _nodal(mesh, spec.f, D)
    F = rhs_vector(mesh, spec.h, spec.g, spec.wall)
    rhs = F[free] - KID @ u[D]
    try:
        u[free] = _solve(lu, KII, rhs, "mixed problem")
    except _StalePreconditioner:
        lu = _refactor(mesh, sysm)[-1]
        u[free] = _solve(lu, KII, rhs, "mixed problem")
    return ScalarField(mesh, u)


def harmonic_extension(mesh, f_top) -> ScalarField:
    """Harmonic function with trace ``f_top`` on TOP and zero flux elsewhere."""
    return solve_mixed(mesh, MixedBVPSpec(f=f_top))


def laplace_inverse(mesh, h=None, g_bottom=None) -> ScalarField:
    """Solution of ``Delta u = h``, ``u = 0`` on TOP, ``du/dn_b = g_bottom``."""
    return solve_mixed(mesh, MixedBVPSpec(h=h, g=g_bottom))


# ----------------------------------------------------------------------
# fluxes
# ----------------------------------------------------------------------


def _restricted_lu(mesh, key, M, dofs):
    if key not in mesh.cache:
        Mb = sp.csr_matrix(M)[dofs][:, dofs].tocsc()
        mesh.cache[key] = (Mb, _splu(Mb))
    return mesh.cache[key]


def top_flux(mesh, u, h=None, g=None, wall=None) -> Trace:
    """Variational normal derivative of ``u`` on TOP.

    The residual ``r = K u + int h phi - (bottom and wall loads)`` is the
    functional ``phi -> int_TOP (du/dn) phi``; its Riesz representative in
    the TOP trace space is returned.
    """
    vals = u.values if isinstance(u, ScalarField) else np.asarray(u, float)
    r = fem.stiffness(mesh) @ vals - rhs_vector(mesh, h, g, wall)
    D = mesh.tag_dofs(TOP)
    Mb, lu = _restricted_lu(mesh, "Mtop", fem.boundary_mass(mesh, TOP), D)
    lam = _solve(lu, Mb, r[D], "TOP flux")
    return Trace(D, mesh.nodes[D], lam)


def dn_operator(mesh, f_top) -> Trace:
    """Dirichlet-Neumann map: normal derivative of the harmonic extension on TOP."""
    return top_flux(mesh, harmonic_extension(mesh, f_top))


def boundary_flux(field: ScalarField, tag, source=None) -> Trace:
    """Dual-consistent normal derivative of ``field`` on the tagged boundary.

    One boundary-mass solve over every boundary dof represents the residual
    ``K u + int source phi``; the result is restricted to ``tag``.  By
    construction the total flux equals ``int source`` (divergence theorem).
    """
    mesh = field.mesh
    r = fem.stiffness(mesh) @ field.values + fem.load_volume(mesh, _volume_qp(mesh, source))
    B = mesh.boundary_dofs
    all_tags = tuple(np.unique(mesh.bnd_tags).tolist())
    Mb, lu = _restricted_lu(mesh, "Mbnd", fem.boundary_mass(mesh, all_tags), B)
    lam = np.zeros(mesh.n_dofs)
    lam[B] = _solve(lu, Mb, r[B], "boundary flux")
    dofs = mesh.tag_dofs(tag)
    return Trace(dofs, mesh.nodes[dofs], lam[dofs])


def trace_integral(mesh, tag, trace_values) -> float:
    """``int_tag w ds`` for a trace given at the tag's dofs."""
    full = np.zeros(mesh.n_dofs)
    dofs = mesh.tag_dofs(tag)
    full[dofs] = trace_values
    return float(np.sum(fem.boundary_mass(mesh, tag) @ full))


def trace_inner(mesh, tag, a, b) -> float:
    """``int_tag a b ds`` for traces at the tag's dofs (boundary mass matrix)."""
    dofs = mesh.tag_dofs(tag)
    Mb = sp.csr_matrix(fem.boundary_mass(mesh, tag))[dofs][:, dofs]
    return float(np.asarray(a) @ (Mb @ np.asarray(b)))


# ----------------------------------------------------------------------
# Neumann problem
# ----------------------------------------------------------------------


def solve_neumann(mesh, f_top_flux=None, g_bottom_flux=None, h=None, wall=None,
                  compat_tol: float = 1e-6) -> ScalarField:
    """Mean-zero solution of the pure Neumann problem.

    ``Delta u = h``, ``du/dn = f`` on TOP, ``g`` on BOTTOM and ``wall`` on
    WALL.  The data must satisfy ``int h = int f + int g + int wall`` up to
    ``compat_tol`` (relative); the remaining defect is removed by a
    uniform source correction.

    Raises
    ------
    DataError
        If the compatibility defect exceeds ``compat_tol``.
    """
    F = rhs_vector(mesh, h, g_bottom_flux, wall)
    F += fem.load_boundary(mesh, TOP, _facet_qp(mesh, TOP, f_top_flux))
    defect = F.sum()
    scale = np.abs(F).sum()
    if scale > 0 and abs(defect) > compat_tol * scale:
        raise DataError(f"incompatible Neumann data (relative defect {abs(defect) / scale:.2e})")
    m = fem.mass(mesh) @ np.ones(mesh.n_dofs)
    F = F - defect * m / m.sum()
    if "neu" not in mesh.cache:
        K = fem.stiffness(mesh)
        A = sp.bmat([[K, sp.csr_matrix(m[:, None])], [sp.csr_matrix(m[None, :]), None]]).tocsc()
        mesh.cache["neu"] = (A, _splu(A))
    A, lu = mesh.cache["neu"]
    x = _solve(lu, A, np.append(F, 0.0), "Neumann problem")
    return ScalarField(mesh, x[:-1])


# ----------------------------------------------------------------------
# derivatives
# ----------------------------------------------------------------------


def _mass_lu(mesh):
    if "Mlu" not in mesh.cache:
        M = sp.csc_matrix(fem.mass(mesh))
        mesh.cache["Mlu"] = (M, _splu(M))
    return mesh.cache["Mlu"]


def l2_project(mesh, values_qp) -> np.ndarray:
    """L2 projection of quadrature data ``(nt, nq, ...)`` onto the nodal space."""
    g = fem.element_geometry(mesh)
    vq = np.asarray(values_qp, dtype=float)
    blocks = np.einsum("tq,tq...,qa->ta...", g.wdet, vq, g.phi)
    M, lu = _mass_lu(mesh)
    out = []
    flat = blocks.reshape(blocks.shape[0], blocks.shape[1], -1)
    for k in range(flat.shape[-1]):
        rhs = np.bincount(mesh.elem_dofs.ravel(), flat[..., k].ravel(), minlength=mesh.n_dofs)
        out.append(_solve(lu, M, rhs, "L2 projection"))
    return np.stack(out, axis=-1).reshape((mesh.n_dofs,) + vq.shape[2:])


def nodal_gradient(field: ScalarField) -> VectorField:
    """Gradient computed element-wise, then L2-projected to the nodes."""
    mesh = field.mesh
    grad = l2_project(mesh, fem.gradient_qp(mesh, field.values))
    return VectorField.from_array(mesh, grad)


def nodal_hessian(field: ScalarField) -> np.ndarray:
    """Nodal Hessian ``(ndof, 2, 2)`` by differentiating the projected gradient."""
    mesh = field.mesh
    g = nodal_gradient(field).values
    hq = np.stack([fem.gradient_qp(mesh, g[:, 0]), fem.gradient_qp(mesh, g[:, 1])], axis=-2)
    H = l2_project(mesh, hq)
    return 0.5 * (H + np.swapaxes(H, -1, -2))


# ----------------------------------------------------------------------
# error norms and convergence tables
# ----------------------------------------------------------------------


def error_norms(field: ScalarField, exact, exact_grad=None) -> dict:
    """L2 and H1-seminorm errors against closed-form ``exact(x, z)``.

    ``exact_grad(x, z)`` returns an array ``(..., 2)``.
    """
    mesh = field.mesh
    g = fem.element_geometry(mesh, "fine")
    uh = fem.interpolate_qp(mesh, field.values, "fine")
    ue = exact(g.x[..., 0], g.x[..., 1])
    out = {"L2": float(np.sqrt(np.sum(g.wdet * (uh - ue) ** 2)))}
    if exact_grad is not None:
        gh = fem.gradient_qp(mesh, field.values, "fine")
        ge = exact_grad(g.x[..., 0], g.x[..., 1])
        out["H1"] = float(np.sqrt(np.sum(g.wdet * np.sum((gh - ge) ** 2, axis=-1))))
    return out


def observed_orders(h, err) -> list:
    """Slopes ``log(e_k / e_{k+1}) / log(h_k / h_{k+1})`` between consecutive levels."""
    h = np.asarray(h, float)
    e = np.asarray(err, float)
    return [float(np.log(e[k] / e[k + 1]) / np.log(h[k] / h[k + 1])) for k in range(len(e) - 1)]


def convergence_report(levels) -> list:
    """JSON-ready rows ``{level, h_mesh, dofs, errors, observed_order}``.

    ``levels`` is a sequence of ``(h_mesh, dofs, errors_dict)``.
    """
    rows = []
    for k, (h, dofs, errs) in enumerate(levels):
        row = {"level": k, "h_mesh": float(h), "dofs": int(dofs),
               "errors": {key: float(v) for key, v in errs.items()}, "observed_order": {}}
        if k > 0:
            hp, _, ep = levels[k - 1]
            for key in errs:
                row["observed_order"][key] = float(np.log(ep[key] / errs[key]) / np.log(hp / h))
        rows.append(row)
    return rows
