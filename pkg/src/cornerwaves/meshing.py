"""Corner-graded triangulations with tagged boundaries.

Meshes are produced by Shewchuk's Triangle (through the ``triangle``
bindings) from a boundary polygon whose vertices are placed on the exact
curves.  Quadratic meshes carry isoparametric midpoints: boundary midpoints
are projected onto the curves, interior midpoints are straight.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import triangle as tr

from .errors import ConfigError, GeometryError, MeshingError
from .geometry import BOTTOM, TAG_NAMES, TOP, WALL

__all__ = [
    "MeshSpec",
    "Mesh",
    "triangulate",
    "sector_mesh",
    "refine_uniform",
    "graph_remap",
    "transfer_field",
    "quality_report",
    "dump_mesh",
]


@dataclass(frozen=True)
class MeshSpec:
    """Mesh controls.

    Parameters
    ----------
    h_mesh : float
        Target edge length away from the corner.
    grading : float
        Grading exponent ``gamma >= 1``; the edge length near the corner is
        ``h_mesh * (r / grading_radius) ** (1 - 1/gamma)``.
    min_angle : float
        Minimum interior angle in degrees requested from the mesher.
    order : int
        Element order, 1 or 2.
    grading_radius : float
        Radius ``R0`` beyond which the mesh is uniform.
    h_floor_ratio : float
        Smallest edge length as a fraction of ``h_mesh``.
    resolve_depth : bool
        Also cap the edge length by the local depth.
    """

    h_mesh: float
    grading: float = 2.0
    min_angle: float = 20.0
    order: int = 2
    grading_radius: float = 1.0
    h_floor_ratio: float = 0.02
    resolve_depth: bool = True

    def __post_init__(self):
        if not self.h_mesh > 0:
            raise ConfigError("h_mesh must be positive")
        if self.grading < 1:
            raise ConfigError("grading exponent must be >= 1")
        if self.min_angle < 20:
            raise ConfigError("min_angle must be at least 20 degrees")
        if self.min_angle > 33:
            raise ConfigError("min_angle above 33 degrees may not terminate")
        if self.order not in (1, 2):
            raise ConfigError("element order must be 1 or 2")

    def size(self, r, depth=None):
        """Target edge length at distance ``r`` from the corner."""
        r = np.asarray(r, dtype=float)
        h = self.h_mesh * np.ones_like(r)
        if self.grading > 1:
            h = np.minimum(h, self.h_mesh * (np.maximum(r, 0) / self.grading_radius)
                           ** (1.0 - 1.0 / self.grading))
        if depth is not None and self.resolve_depth:
            h = np.minimum(h, np.asarray(depth, dtype=float))
        return np.maximum(h, self.h_floor_ratio * self.h_mesh)


class Mesh:
    """Triangulation with tagged boundary edges and P1 or P2 dofs.

    Attributes
    ----------
    vertices : ndarray (nv, 2)
    triangles : ndarray (nt, 3)
        Counter-clockwise vertex indices.
    bnd_edges : ndarray (nb, 2)
        Boundary edges as vertex pairs, oriented with the fluid on the left.
    bnd_tags : ndarray (nb,)
        TOP, BOTTOM or WALL.
    order : int
    corner : int or None
        Vertex index of the contact corner.
    nodes : ndarray (ndof, 2)
        Dof coordinates; the first ``nv`` rows are the vertices.
    elem_dofs : ndarray (nt, 3 or 6)
        Dofs ordered as ``[v0, v1, v2, m01, m12, m20]``.
    facets : ndarray (nb, 2 or 3)
        Boundary dofs per edge, ``[v0, v1]`` or ``[v0, v1, m01]``.
    """

    def __init__(self, vertices, triangles, bnd_edges, bnd_tags, order: int = 2,
                 corner: int | None = None, projector=None, ref_coords=None, mid_nodes=None,
                 topology: "Mesh | None" = None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        self.bnd_edges = np.ascontiguousarray(bnd_edges, dtype=np.int64)
        self.bnd_tags = np.ascontiguousarray(bnd_tags, dtype=np.int64)
        self.order = int(order)
        self.corner = corner
        self.projector = projector
        self.ref_coords = ref_coords
        self.cache: dict = {}
        for a in (self.vertices, self.triangles, self.bnd_edges, self.bnd_tags):
            a.flags.writeable = False
        self._build(mid_nodes, topology)

    def _build(self, mid_nodes, topology=None):
        t = self.triangles
        nv = len(self.vertices)
        if topology is not None and topology.triangles is self.triangles:
            # same connectivity: share the edge tables and assembly patterns
            self.edges = topology.edges
            self.tri_edges = topology.tri_edges
            self.bnd_edge_ids = topology.bnd_edge_ids
            self.topology_cache = topology.topology_cache
        else:
            loc = np.array([[0, 1], [1, 2], [2, 0]])
            all_edges = np.sort(t[:, loc].reshape(-1, 2), axis=1)
            edges, inv = np.unique(all_edges, axis=0, return_inverse=True)
            self.edges = edges
            self.tri_edges = inv.reshape(-1, 3)
            key = {tuple(e): i for i, e in enumerate(edges)}
            self.bnd_edge_ids = np.array([key[tuple(sorted(e))] for e in self.bnd_edges],
                                         dtype=np.int64)
            self.topology_cache = {}
        edges = self.edges
        bnd_edge_ids = self.bnd_edge_ids
        if self.order == 1:
            self.nodes = self.vertices.copy()
            self.elem_dofs = t.copy()
            self.facets = self.bnd_edges.copy()
        else:
            if mid_nodes is None:
                mid = 0.5 * (self.vertices[edges[:, 0]] + self.vertices[edges[:, 1]])
                if self.projector is not None:
                    for tag in np.unique(self.bnd_tags):
                        ids = bnd_edge_ids[self.bnd_tags == tag]
                        mid[ids] = self.projector(tag, mid[ids])
            else:
                mid = np.asarray(mid_nodes, dtype=float)
            self.nodes = np.vstack([self.vertices, mid])
            self.elem_dofs = np.hstack([t, nv + self.tri_edges])
            self.facets = np.hstack([self.bnd_edges, nv + bnd_edge_ids[:, None]])
        self.nodes.flags.writeable = False

    # ------------------------------------------------------------------
    @property
    def n_dofs(self) -> int:
        return len(self.nodes)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def tag_dofs(self, tag) -> np.ndarray:
        """Sorted unique dofs on boundary edges with the given tag(s)."""
        tags = np.atleast_1d(tag)
        sel = np.isin(self.bnd_tags, tags)
        return np.unique(self.facets[sel])

    def tag_vertices(self, tag) -> np.ndarray:
        sel = np.isin(self.bnd_tags, np.atleast_1d(tag))
        return np.unique(self.bnd_edges[sel])

    @cached_property
    def boundary_dofs(self) -> np.ndarray:
        return np.unique(self.facets)

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        e = self.vertices[self.edges]
        return np.linalg.norm(e[:, 1] - e[:, 0], axis=1)

    @property
    def h_max(self) -> float:
        return float(self.edge_lengths.max())

    def area(self) -> float:
        """Isoparametric area (exact for the quadratic geometry)."""
        from .fem import element_geometry

        geo = element_geometry(self)
        return float(np.sum(geo.wdet))

    def with_nodes(self, nodes) -> "Mesh":
        """Same topology with all dof coordinates replaced (vertices and midpoints)."""
        nodes = np.asarray(nodes, dtype=float)
        nv = self.n_vertices
        mid = nodes[nv:] if self.order == 2 else None
        return Mesh(nodes[:nv], self.triangles, self.bnd_edges, self.bnd_tags, self.order,
                    self.corner, None, None, mid, topology=self)

    def validate(self, domain=None, tol: float = 1e-10, check_corner: bool = True) -> None:
        """Check the mesh invariants; raise :class:`MeshingError` on failure."""
        if np.any(self.signed_areas <= 0):
            raise MeshingError("inverted or degenerate triangle")
        if self.order == 2:
            from .fem import element_geometry

            if np.any(element_geometry(self).det <= 0):
                raise MeshingError("isoparametric map not invertible")
        if domain is not None:
            for tag, fun in ((TOP, domain.top_height), (BOTTOM, domain.bottom_height)):
                v = self.nodes[self.tag_dofs(tag)]
                gap = np.abs(v[:, 1] - fun(v[:, 0]))
                if gap.size and gap.max() > tol:
                    raise MeshingError(f"{TAG_NAMES[tag]} node off its curve by {gap.max():.2e}")
        shared = np.intersect1d(self.tag_vertices(TOP), self.tag_vertices(BOTTOM))
        if check_corner and self.corner is not None and (shared.size != 1 or shared[0] != self.corner):
            raise MeshingError("corner vertex is not the unique TOP/BOTTOM vertex")


# ----------------------------------------------------------------------
# boundary discretisation
# ----------------------------------------------------------------------


_DENSE = np.unique(np.concatenate([
    np.linspace(0.0, 1.0, 257), np.logspace(-9, 0, 181), 1.0 - np.logspace(-9, 0, 181)]))


def _place(params, points_fn, size_fn):
    """Subdivide consecutive required parameters so spacing follows ``size_fn``.

    Returns the parameter values of all points (required ones included),
    excluding the final endpoint.  The sampling used to integrate
    ``ds / h`` is clustered toward both ends of every interval so strongly
    graded spacings near the corner are resolved.
    """
    out = []
    for a, b in zip(params[:-1], params[1:]):
        t = a + (b - a) * _DENSE
        p = points_fn(t)
        ds = np.linalg.norm(np.diff(p, axis=0), axis=1)
        h = size_fn(0.5 * (p[1:] + p[:-1]))
        cum = np.concatenate([[0.0], np.cumsum(ds / h)])
        n = max(1, int(np.round(cum[-1])))
        levels = cum[-1] * np.arange(n) / n
        out.append(np.interp(levels, cum, t))
    return np.concatenate(out)


def _graph_boundary(domain, size_fn):
    """Counter-clockwise boundary polygon of a graph domain with segment tags."""
    xl, xr = domain.x_left, domain.x_right
    top, bot = domain.top_height, domain.bottom_height

    def bottom_pts(x):
        return np.column_stack([x, bot(x)])

    def top_pts(x):
        return np.column_stack([x, top(x)])

    cuts = [xl] + [b for b in getattr(domain.bottom, "breakpoints", ()) if xl < b < xr] + [xr]
    xb = _place(np.array(cuts), bottom_pts, size_fn)
    pts, tags = [bottom_pts(xb)], [np.full(len(xb), BOTTOM)]

    zb, zt = float(bot(xr)), float(top(xr))
    wall_r = _place(np.array([zb, zt]), lambda z: np.column_stack([np.full_like(z, xr), z]), size_fn)
    pts.append(np.column_stack([np.full_like(wall_r, xr), wall_r]))
    tags.append(np.full(len(wall_r), WALL))

    req = np.asarray(domain.required_top_x, dtype=float)
    req = np.unique(np.concatenate([[xl, xr], req[(req >= xl) & (req <= xr)]]))[::-1]
    xt = _place(req, top_pts, size_fn)
    pts.append(top_pts(xt))
    tags.append(np.full(len(xt), TOP))

    if not domain.has_corner:
        zt_l, zb_l = float(top(xl)), float(bot(xl))
        wall_l = _place(np.array([zt_l, zb_l]),
                        lambda z: np.column_stack([np.full_like(z, xl), z]), size_fn)
        pts.append(np.column_stack([np.full_like(wall_l, xl), wall_l]))
        tags.append(np.full(len(wall_l), WALL))
    pts = np.vstack(pts)
    tags = np.concatenate(tags)
    if domain.has_corner:
        # close the polygon at the corner: the first bottom point is X_c
        pts[0] = [xl, float(bot(xl))]
    return pts, tags


def _run_triangle(pts, seg_tags, size_fn, min_angle, max_passes: int = 8):
    n = len(pts)
    seg = np.column_stack([np.arange(n), (np.arange(n) + 1) % n])
    pslg = dict(vertices=pts, segments=seg, segment_markers=seg_tags[:, None].astype(np.int32))
    h_big = float(size_fn(pts).max())
    opts = f"pq{min_angle:g}Ya{0.5 * h_big**2:.12g}"
    try:
        out = tr.triangulate(pslg, opts)
        for _ in range(max_passes):
            p = out["vertices"]
            cen = p[out["triangles"]].mean(axis=1)
            target = 0.4330127 * size_fn(cen) ** 2
            d1 = p[out["triangles"][:, 1]] - p[out["triangles"][:, 0]]
            d2 = p[out["triangles"][:, 2]] - p[out["triangles"][:, 0]]
            area = 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
            if np.all(area <= 1.3 * target):
                break
            out["triangle_max_area"] = target[:, None]
            out = tr.triangulate(out, f"rpq{min_angle:g}Ya")
    except Exception as exc:  # the C library reports failures as generic errors
        raise MeshingError(f"triangle failed: {exc}") from exc
    if len(out["vertices"]) < n or not np.allclose(out["vertices"][:n], pts):
        raise MeshingError("mesher moved boundary vertices")
    segs = out["segments"]
    tags = out["segment_markers"].ravel()
    return out["vertices"], out["triangles"], segs, tags


def _orient_boundary(vertices, triangles, segs):
    """Orient boundary edges so the owning triangle lies on the left."""
    owner = {}
    for t in triangles:
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            owner[(a, b)] = True
    out = segs.copy()
    for i, (a, b) in enumerate(segs):
        if (a, b) not in owner:
            out[i] = (b, a)
    return out


def _graph_projector(domain):
    top, bot = domain.top_height, domain.bottom_height

    def project(tag, p):
        p = np.array(p, dtype=float)
        if tag == TOP:
            p[:, 1] = top(p[:, 0])
        elif tag == BOTTOM:
            p[:, 1] = bot(p[:, 0])
        return p

    return project


def _graph_ref_coords(domain, vertices, bnd_edges, bnd_tags, corner):
    xl, xr = domain.x_left, domain.x_right
    x, z = vertices[:, 0], vertices[:, 1]
    xi = (x - xl) / (xr - xl)
    top = domain.top_height(np.clip(x, xl, xr))
    bot = domain.bottom_height(np.clip(x, xl, xr))
    depth = top - bot
    with np.errstate(divide="ignore", invalid="ignore"):
        zeta = np.where(depth > 0, (z - bot) / np.where(depth > 0, depth, 1.0), 0.0)
    for tag, val in ((TOP, 1.0), (BOTTOM, 0.0)):
        ids = np.unique(bnd_edges[bnd_tags == tag])
        zeta[ids] = val
    wall = np.unique(bnd_edges[bnd_tags == WALL])
    xi[wall] = np.round(xi[wall])
    if corner is not None:
        xi[corner], zeta[corner] = 0.0, 0.0
    return np.column_stack([xi, zeta])


def triangulate(domain, spec: MeshSpec) -> Mesh:
    """Triangulate a corner or strip domain.

    Boundary vertices include every required surface abscissa of the
    domain (the surface markers) and are placed on the exact curves.
    The mesh is graded toward the contact corner following ``spec``.

    Raises
    ------
    MeshingError
        When Triangle fails or the corner wedge cannot be resolved.
    """
    corner_pt = domain.corner if domain.has_corner else None

    def size_fn(p):
        p = np.atleast_2d(p)
        x = np.clip(p[:, 0], domain.x_left, domain.x_right)
        depth = domain.top_height(x) - domain.bottom_height(x)
        if corner_pt is None:
            r = np.full(len(p), np.inf)
        else:
            r = np.linalg.norm(p - corner_pt, axis=1)
        return spec.size(r, np.maximum(depth, 0.0))

    try:
        pts, tags = _graph_boundary(domain, size_fn)
    except (GeometryError, ValueError) as exc:
        raise MeshingError(f"cannot discretise the boundary: {exc}") from exc
    if len(pts) < 3:
        raise MeshingError("boundary polygon has fewer than three vertices")
    verts, tris, segs, seg_tags = _run_triangle(pts, tags, size_fn, spec.min_angle)
    segs = _orient_boundary(verts, tris, segs)
    corner = 0 if domain.has_corner else None
    if corner is not None:
        areas = _areas(verts, tris)
        at_corner = np.any(tris == corner, axis=1)
        if np.any(areas[at_corner] <= 1e-14 * spec.h_mesh**2):
            raise MeshingError("wedge too thin to mesh at this resolution "
                               f"(corner triangle area {areas[at_corner].min():.2e})")
    ref = _graph_ref_coords(domain, verts, segs, seg_tags, corner)
    mesh = Mesh(verts, tris, segs, seg_tags, spec.order, corner, _graph_projector(domain), ref)
    mesh.validate(domain)
    return mesh


def _areas(verts, tris):
    p = verts[tris]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def graph_remap(mesh: Mesh, domain) -> Mesh:
    """Move a graph-domain mesh onto a new domain with the same topology.

    Vertices keep their reference coordinates ``(xi, zeta)``:
    ``x = x_left + xi (x_right - x_left)``, ``z = b(x) + zeta (eta(x) - b(x))``.
    Boundary midpoints are re-projected onto the new curves.
    """
    if mesh.ref_coords is None:
        raise MeshingError("mesh carries no reference coordinates")
    xi, zeta = mesh.ref_coords.T
    x = domain.x_left + xi * (domain.x_right - domain.x_left)
    x = np.clip(x, domain.x_left, domain.x_right)
    bot = domain.bottom_height(x)
    z = bot + zeta * (domain.top_height(x) - bot)
    verts = np.column_stack([x, z])
    return Mesh(verts, mesh.triangles, mesh.bnd_edges, mesh.bnd_tags, mesh.order, mesh.corner,
                _graph_projector(domain), mesh.ref_coords, topology=mesh)


def sector_mesh(omega: float, radius: float, h: float, order: int = 2,
                neumann_edge: str = "theta0") -> Mesh:
    """Uniform mesh of the sector ``0 < theta < omega, r < radius``.

    The straight edge named by ``neumann_edge`` (``"theta0"`` or
    ``"omega"``) is tagged BOTTOM; the other straight edge and the arc
    are tagged TOP.  The apex is the corner vertex.
    """
    n_ray = max(2, int(np.ceil(radius / h)))
    n_arc = max(2, int(np.ceil(radius * omega / h)))
    r = np.linspace(0.0, radius, n_ray + 1)
    th = np.linspace(0.0, omega, n_arc + 1)
    ray0 = np.column_stack([r[:-1], np.zeros(n_ray)])
    arc = radius * np.column_stack([np.cos(th[:-1]), np.sin(th[:-1])])
    ray1 = np.outer(r[::-1][:-1], [np.cos(omega), np.sin(omega)])
    pts = np.vstack([ray0, arc, ray1])
    t0, t1 = (BOTTOM, TOP) if neumann_edge == "theta0" else (TOP, BOTTOM)
    tags = np.concatenate([np.full(n_ray, t0), np.full(n_arc, TOP), np.full(n_ray, t1)])

    def size_fn(p):
        return np.full(len(np.atleast_2d(p)), h)

    verts, tris, segs, seg_tags = _run_triangle(pts, tags, size_fn, 25.0)
    segs = _orient_boundary(verts, tris, segs)

    def project(tag, p):
        # chord midpoints of the arc sit within h^2/(8R) of the circle,
        # midpoints of the radial edges at least h/2 inside it
        p = np.array(p, dtype=float)
        rr = np.linalg.norm(p, axis=1)
        on_arc = rr > radius * (1 - 0.5 * (h / radius) ** 2) - 1e-12
        p[on_arc] *= radius / rr[on_arc, None]
        return p

    mesh = Mesh(verts, tris, segs, seg_tags, order, 0, project)
    mesh.validate(check_corner=False)
    return mesh


def refine_uniform(mesh: Mesh) -> Mesh:
    """Split every triangle into four; boundary midpoints are re-projected."""
    nv = mesh.n_vertices
    mid = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    if mesh.projector is not None:
        for tag in np.unique(mesh.bnd_tags):
            ids = mesh.bnd_edge_ids[mesh.bnd_tags == tag]
            mid[ids] = mesh.projector(tag, mid[ids])
    elif mesh.order == 2:
        mid = mesh.nodes[nv:].copy()
    verts = np.vstack([mesh.vertices, mid])
    t = mesh.triangles
    m = nv + mesh.tri_edges  # m01, m12, m20
    tris = np.vstack([
        np.column_stack([t[:, 0], m[:, 0], m[:, 2]]),
        np.column_stack([m[:, 0], t[:, 1], m[:, 1]]),
        np.column_stack([m[:, 2], m[:, 1], t[:, 2]]),
        np.column_stack([m[:, 0], m[:, 1], m[:, 2]]),
    ])
    be = mesh.bnd_edges
    bm = nv + mesh.bnd_edge_ids
    bnd = np.vstack([np.column_stack([be[:, 0], bm]), np.column_stack([bm, be[:, 1]])])
    tags = np.concatenate([mesh.bnd_tags, mesh.bnd_tags])
    ref = None
    if mesh.ref_coords is not None:
        rc = mesh.ref_coords
        ref_mid = 0.5 * (rc[mesh.edges[:, 0]] + rc[mesh.edges[:, 1]])
        for tag, val in ((TOP, 1.0), (BOTTOM, 0.0)):
            ref_mid[mesh.bnd_edge_ids[mesh.bnd_tags == tag], 1] = val
        ref = np.vstack([rc, ref_mid])
    return Mesh(verts, tris, bnd, tags, mesh.order, mesh.corner, mesh.projector, ref)


def transfer_field(values, old_mesh: Mesh, new_mesh: Mesh, max_distance: float | None = None):
    """Interpolate nodal ``values`` from ``old_mesh`` onto the dofs of ``new_mesh``.

    Points slightly outside the old mesh (up to one edge length) are
    evaluated by extrapolating the nearest element.

    Raises
    ------
    TransferError
        When a target node is farther than ``max_distance`` (default: the
        longest edge of ``old_mesh``) from the old mesh.
    """
    from .fem import evaluate

    if max_distance is None:
        max_distance = old_mesh.h_max
    return evaluate(old_mesh, values, new_mesh.nodes, max_distance=max_distance)


def _angles(mesh: Mesh):
    p = mesh.vertices[mesh.triangles]
    ang = np.empty((len(p), 3))
    for k in range(3):
        a = p[:, (k + 1) % 3] - p[:, k]
        b = p[:, (k + 2) % 3] - p[:, k]
        cosv = np.sum(a * b, axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
        ang[:, k] = np.degrees(np.arccos(np.clip(cosv, -1, 1)))
    return ang


def quality_report(mesh: Mesh, domain=None) -> dict:
    """Angle, aspect-ratio and area diagnostics.

    The angle subtended at the contact corner is a property of the domain,
    not of the mesher, so it is reported separately as ``corner_angle``
    and excluded from ``min_angle``.  ``area_defect`` is the relative
    difference between the mesh area and the quadrature area of the domain.
    """
    ang = _angles(mesh)
    mask = np.ones_like(ang, dtype=bool)
    if mesh.corner is not None:
        mask &= mesh.triangles != mesh.corner
    p = mesh.vertices[mesh.triangles]
    la = np.linalg.norm(p[:, 1] - p[:, 2], axis=1)
    lb = np.linalg.norm(p[:, 2] - p[:, 0], axis=1)
    lc = np.linalg.norm(p[:, 0] - p[:, 1], axis=1)
    area = np.abs(mesh.signed_areas)
    inr = 2 * area / (la + lb + lc)
    circ = la * lb * lc / (4 * area)
    rep = {
        "n_vertices": int(mesh.n_vertices),
        "n_triangles": int(len(mesh.triangles)),
        "n_dofs": int(mesh.n_dofs),
        "min_angle": float(ang[mask].min()),
        "max_angle": float(ang.max()),
        "corner_angle": float(ang[~mask].sum()) if mesh.corner is not None else None,
        "max_aspect_ratio": float(np.max(circ / (2 * inr))),
        "h_max": float(mesh.h_max),
        "h_min": float(mesh.edge_lengths.min()),
        "area": mesh.area(),
    }
    if domain is not None:
        vol = float(domain.volume)
        rep["domain_area"] = vol
        rep["area_defect"] = abs(rep["area"] - vol) / vol
    return rep


def dump_mesh(mesh: Mesh, path) -> Path:
    """Write an OFF-like text file: counts, vertices, triangles and tagged edges."""
    path = Path(path)
    lines = ["MESH2D", f"{mesh.n_vertices} {len(mesh.triangles)} {len(mesh.bnd_edges)}"]
    lines += [f"{x:.17g} {z:.17g}" for x, z in mesh.vertices]
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines += [f"TAG {a} {b} {TAG_NAMES[int(t)]}" for (a, b), t in zip(mesh.bnd_edges, mesh.bnd_tags)]
    if mesh.corner is not None:
        lines.append(f"CORNER {mesh.corner}")
    path.write_text("\n".join(lines) + "\n")
    return path


def load_mesh(path, order: int = 1) -> Mesh:
    """Read a file written by :func:`dump_mesh` (straight-sided geometry)."""
    rows = Path(path).read_text().split("\n")
    nv, nt, nb = map(int, rows[1].split())
    verts = np.array([list(map(float, r.split())) for r in rows[2:2 + nv]])
    tris = np.array([list(map(int, r.split()[1:])) for r in rows[2 + nv:2 + nv + nt]])
    names = {v: k for k, v in TAG_NAMES.items()}
    bnd, tags = [], []
    corner = None
    for r in rows[2 + nv + nt:]:
        parts = r.split()
        if not parts:
            continue
        if parts[0] == "TAG":
            bnd.append((int(parts[1]), int(parts[2])))
            tags.append(names[parts[3]])
        elif parts[0] == "CORNER":
            corner = int(parts[1])
    del nb
    return Mesh(verts, tris, np.array(bnd), np.array(tags), order, corner)
