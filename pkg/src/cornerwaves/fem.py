"""Lagrange P1/P2 finite elements on triangles: quadrature, geometry and assembly."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .errors import TransferError

# ----------------------------------------------------------------------
# quadrature
# ----------------------------------------------------------------------


def _rule_deg5():
    a1, b1 = (6 - np.sqrt(15)) / 21, (9 + 2 * np.sqrt(15)) / 21
    a2, b2 = (6 + np.sqrt(15)) / 21, (9 - 2 * np.sqrt(15)) / 21
    w1, w2 = (155 - np.sqrt(15)) / 1200, (155 + np.sqrt(15)) / 1200
    pts = [(1 / 3, 1 / 3)]
    wts = [9 / 40]
    for a, b, w in ((a1, b1, w1), (a2, b2, w2)):
        pts += [(a, a), (b, a), (a, b)]
        wts += [w] * 3
    return np.array(pts), 0.5 * np.array(wts)


def collapsed_rule(n: int):
    """Duffy-collapsed Gauss rule with ``n * n`` points, exact to degree ``2n - 2``."""
    g, w = np.polynomial.legendre.leggauss(n)
    g = 0.5 * (g + 1)
    w = 0.5 * w
    u, v = np.meshgrid(g, g, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    r = u.ravel()
    s = (v * (1 - u)).ravel()
    return np.column_stack([r, s]), (wu * wv * (1 - u)).ravel()


RULES = {"deg5": _rule_deg5(), "fine": collapsed_rule(8)}
EDGE_X = 0.5 * (np.polynomial.legendre.leggauss(5)[0] + 1)
EDGE_W = 0.5 * np.polynomial.legendre.leggauss(5)[1]


# ----------------------------------------------------------------------
# reference shape functions
# ----------------------------------------------------------------------


def shape(order: int, rs):
    """Shape functions and reference gradients at points ``rs`` (n, 2).

    Returns
    -------
    phi : ndarray (n, nb)
    dphi : ndarray (n, nb, 2)
    """
    rs = np.atleast_2d(rs)
    r, s = rs[:, 0], rs[:, 1]
    l0, l1, l2 = 1 - r - s, r, s
    if order == 1:
        phi = np.column_stack([l0, l1, l2])
        d = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        return phi, np.broadcast_to(d, (len(r), 3, 2)).copy()
    phi = np.column_stack([
        l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
        4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0,
    ])
    dr = np.column_stack([
        -(4 * l0 - 1), 4 * l1 - 1, np.zeros_like(r),
        4 * (l0 - l1), 4 * l2, -4 * l2,
    ])
    ds = np.column_stack([
        -(4 * l0 - 1), np.zeros_like(r), 4 * l2 - 1,
        -4 * l1, 4 * l1, 4 * (l0 - l2),
    ])
    return phi, np.stack([dr, ds], axis=-1)


def shape_1d(order: int, t):
    """Edge shape functions ``[v0, v1(, mid)]`` and their ``t``-derivatives."""
    t = np.asarray(t, dtype=float)
    if order == 1:
        return np.column_stack([1 - t, t]), np.column_stack([-np.ones_like(t), np.ones_like(t)])
    phi = np.column_stack([(1 - t) * (1 - 2 * t), t * (2 * t - 1), 4 * t * (1 - t)])
    dphi = np.column_stack([4 * t - 3, 4 * t - 1, 4 - 8 * t])
    return phi, dphi


# ----------------------------------------------------------------------
# geometry
# ----------------------------------------------------------------------


class ElementGeometry(NamedTuple):
    x: np.ndarray      # (nt, nq, 2) physical quadrature points
    det: np.ndarray    # (nt, nq)
    wdet: np.ndarray   # (nt, nq) weight * det
    grad: np.ndarray   # (nt, nq, nb, 2) physical shape gradients
    phi: np.ndarray    # (nq, nb)


def _geo_nodes(mesh):
    """Geometry nodes per element: vertices for P1, all six nodes for P2."""
    return mesh.nodes[mesh.elem_dofs]


def element_geometry(mesh, rule: str = "deg5") -> ElementGeometry:
    """Isoparametric geometry at the quadrature points of ``rule`` (cached)."""
    key = ("geo", rule)
    if key in mesh.cache:
        return mesh.cache[key]
    rs, w = RULES[rule]
    phi, dphi = shape(mesh.order, rs)
    X = _geo_nodes(mesh)
    x = np.matmul(phi, X)
    jac = np.matmul(X.transpose(0, 2, 1)[:, None], dphi[None])  # d x_d / d r_k
    det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
    inv = np.empty_like(jac)
    inv[..., 0, 0] = jac[..., 1, 1] / det
    inv[..., 1, 1] = jac[..., 0, 0] / det
    inv[..., 0, 1] = -jac[..., 0, 1] / det
    inv[..., 1, 0] = -jac[..., 1, 0] / det
    grad = np.matmul(dphi[None], inv)
    geo = ElementGeometry(x, det, det * w, grad, phi)
    mesh.cache[key] = geo
    return geo


class FacetGeometry(NamedTuple):
    index: np.ndarray    # (nf,) selected boundary edge ids
    dofs: np.ndarray     # (nf, nb)
    x: np.ndarray        # (nf, nq, 2)
    tangent: np.ndarray  # (nf, nq, 2) unit, fluid on the left
    normal: np.ndarray   # (nf, nq, 2) unit outward
    wds: np.ndarray      # (nf, nq) weight * |dx/dt|
    phi: np.ndarray      # (nq, nb)
    dphi_ds: np.ndarray  # (nf, nq, nb) arclength derivative along the tangent


def facet_geometry(mesh, tags) -> FacetGeometry:
    key = ("fgeo", tuple(np.atleast_1d(tags).tolist()))
    if key in mesh.cache:
        return mesh.cache[key]
    sel = np.flatnonzero(np.isin(mesh.bnd_tags, np.atleast_1d(tags)))
    dofs = mesh.facets[sel]
    phi, dphi = shape_1d(mesh.order, EDGE_X)
    X = mesh.nodes[dofs]
    x = np.einsum("qa,fad->fqd", phi, X)
    dx = np.einsum("qa,fad->fqd", dphi, X)
    speed = np.linalg.norm(dx, axis=-1)
    t = dx / speed[..., None]
    n = np.stack([t[..., 1], -t[..., 0]], axis=-1)
    geo = FacetGeometry(sel, dofs, x, t, n, speed * EDGE_W, phi, dphi[None] / speed[..., None])
    mesh.cache[key] = geo
    return geo


# ----------------------------------------------------------------------
# assembly
# ----------------------------------------------------------------------


def _pattern(dofs, n):
    """CSR structure of a block scatter and the map from block entries to it."""
    rows = np.repeat(dofs, dofs.shape[1], axis=1).ravel()
    cols = np.tile(dofs, (1, dofs.shape[1])).ravel()
    pat = sp.csr_matrix((np.arange(1, rows.size + 1, dtype=float), (rows, cols)), shape=(n, n))
    pat.sum_duplicates()
    key = rows * n + cols
    order = np.argsort(key, kind="stable")
    uniq, first = np.unique(key[order], return_index=True)
    slot = np.empty(rows.size, dtype=np.int64)
    slot[order] = np.repeat(np.arange(uniq.size), np.diff(np.append(first, rows.size)))
    return pat.indptr, pat.indices, slot


def _scatter(dofs, blocks, n, topo_cache=None, key=None):
    if topo_cache is None:
        indptr, indices, slot = _pattern(dofs, n)
    else:
        if key not in topo_cache:
            topo_cache[key] = _pattern(dofs, n)
        indptr, indices, slot = topo_cache[key]
    data = np.bincount(slot, blocks.ravel(), minlength=indices.size)
    return sp.csr_matrix((data, indices, indptr), shape=(n, n))


def stiffness(mesh) -> sp.csr_matrix:
    if "K" not in mesh.cache:
        g = element_geometry(mesh)
        nt, nq, nb, _ = g.grad.shape
        A = (g.grad * g.wdet[..., None, None]).transpose(0, 2, 1, 3).reshape(nt, nb, 2 * nq)
        B = g.grad.transpose(0, 2, 1, 3).reshape(nt, nb, 2 * nq)
        blocks = np.matmul(A, B.transpose(0, 2, 1))
        mesh.cache["K"] = _scatter(mesh.elem_dofs, blocks, mesh.n_dofs, mesh.topology_cache,
                                   "elem")
    return mesh.cache["K"]


def mass(mesh) -> sp.csr_matrix:
    if "M" not in mesh.cache:
        g = element_geometry(mesh)
        blocks = np.einsum("tq,qa,qb->tab", g.wdet, g.phi, g.phi, optimize=True)
        mesh.cache["M"] = _scatter(mesh.elem_dofs, blocks, mesh.n_dofs, mesh.topology_cache,
                                   "elem")
    return mesh.cache["M"]


def boundary_mass(mesh, tags) -> sp.csr_matrix:
    key = ("Mb", tuple(np.atleast_1d(tags).tolist()))
    if key not in mesh.cache:
        f = facet_geometry(mesh, tags)
        blocks = np.einsum("fq,qa,qb->fab", f.wds, f.phi, f.phi)
        mesh.cache[key] = _scatter(f.dofs, blocks, mesh.n_dofs)
    return mesh.cache[key]


def oblique_form(mesh, tag, coef) -> sp.csr_matrix:
    """Matrix of ``int_tag b0 (d u / d tau) phi ds`` with ``tau`` the facet tangent.

    ``coef`` is a constant or a callable of the points ``(nf, nq, 2)``.
    """
    f = facet_geometry(mesh, tag)
    b0 = coef(f.x) if callable(coef) else np.full(f.wds.shape, float(coef))
    blocks = np.einsum("fq,fq,qa,fqb->fab", f.wds, b0, f.phi, f.dphi_ds)
    return _scatter(f.dofs, blocks, mesh.n_dofs)


def load_volume(mesh, values_qp) -> np.ndarray:
    """``int f phi`` from quadrature-point values ``(nt, nq)``."""
    g = element_geometry(mesh)
    blocks = np.einsum("tq,tq,qa->ta", g.wdet, values_qp, g.phi)
    return np.bincount(mesh.elem_dofs.ravel(), blocks.ravel(), minlength=mesh.n_dofs)


def load_boundary(mesh, tags, values_qp) -> np.ndarray:
    """``int_tags g phi ds`` from facet quadrature values ``(nf, nq)``."""
    f = facet_geometry(mesh, tags)
    blocks = np.einsum("fq,fq,qa->fa", f.wds, values_qp, f.phi)
    return np.bincount(f.dofs.ravel(), blocks.ravel(), minlength=mesh.n_dofs)


def interpolate_qp(mesh, values, rule: str = "deg5") -> np.ndarray:
    """Nodal field values at element quadrature points ``(nt, nq)``."""
    g = element_geometry(mesh, rule)
    return np.einsum("qa,ta...->tq...", g.phi, np.asarray(values)[mesh.elem_dofs])


def gradient_qp(mesh, values, rule: str = "deg5") -> np.ndarray:
    """Element gradients of a nodal field at quadrature points ``(nt, nq, 2)``."""
    g = element_geometry(mesh, rule)
    return np.einsum("tqad,ta->tqd", g.grad, np.asarray(values)[mesh.elem_dofs])


def facet_values(mesh, tags, values) -> np.ndarray:
    f = facet_geometry(mesh, tags)
    return np.einsum("qa,fa->fq", f.phi, np.asarray(values)[f.dofs])


def facet_gradient(mesh, tags, values) -> np.ndarray:
    """Gradient of the field at facet quadrature points, from the owning element."""
    f = facet_geometry(mesh, tags)
    owner = _facet_owner(mesh)[f.index]
    tri, ref = owner[:, 0], owner[:, 1:]
    # reference coordinates of the facet quadrature points in the owner element
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    a, b = corners[ref[:, 0]], corners[ref[:, 1]]
    rs = a[:, None] + EDGE_X[None, :, None] * (b - a)[:, None]
    nf, nq = rs.shape[:2]
    _, dphi = shape(mesh.order, rs.reshape(-1, 2))
    dphi = dphi.reshape(nf, nq, -1, 2)
    X = _geo_nodes(mesh)[tri]
    jac = np.einsum("fad,fqak->fqdk", X, dphi)
    inv = np.linalg.inv(jac)
    grad = np.einsum("fqak,fqkd->fqad", dphi, inv)
    return np.einsum("fqad,fa->fqd", grad, np.asarray(values)[mesh.elem_dofs[tri]])


def _facet_owner(mesh):
    """For each boundary edge: owning triangle and local vertex indices of its ends."""
    if "owner" in mesh.cache:
        return mesh.cache["owner"]
    lookup = {}
    for t, tri in enumerate(mesh.triangles):
        for k in range(3):
            lookup[(tri[k], tri[(k + 1) % 3])] = (t, k, (k + 1) % 3)
    own = np.array([lookup[(a, b)] for a, b in mesh.bnd_edges], dtype=np.int64)
    mesh.cache["owner"] = own
    return own


# ----------------------------------------------------------------------
# point location and evaluation
# ----------------------------------------------------------------------


def _map(mesh, tri, rs):
    phi, dphi = shape(mesh.order, rs)
    X = _geo_nodes(mesh)[tri]
    x = np.einsum("pa,pad->pd", phi, X)
    jac = np.einsum("pad,pak->pdk", X, dphi)
    return x, jac


def locate(mesh, points, n_candidates: int = 12):
    """Owning element and reference coordinates of each point.

    Returns
    -------
    tri : ndarray (n,)
    rs : ndarray (n, 2)
    dist : ndarray (n,)
        Zero inside the mesh, else the distance to the chosen element.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if "kdtree" not in mesh.cache:
        cen = mesh.vertices[mesh.triangles].mean(axis=1)
        mesh.cache["kdtree"] = cKDTree(cen)
    k = min(n_candidates, len(mesh.triangles))
    _, cand = mesh.cache["kdtree"].query(pts, k=k)
    cand = cand.reshape(len(pts), k)
    V = mesh.vertices[mesh.triangles[cand]]  # (n, k, 3, 2)
    A = np.stack([V[:, :, 1] - V[:, :, 0], V[:, :, 2] - V[:, :, 0]], axis=-1)
    rs = np.linalg.solve(A, (pts[:, None, :] - V[:, :, 0])[..., None])[..., 0]
    if mesh.order == 2:
        flat_t = cand.ravel()
        flat_p = np.repeat(pts, k, axis=0)
        r = rs.reshape(-1, 2)
        for _ in range(6):
            x, jac = _map(mesh, flat_t, r)
            r = r - np.linalg.solve(jac, (x - flat_p)[..., None])[..., 0]
        rs = r.reshape(len(pts), k, 2)
    bary = np.stack([1 - rs[..., 0] - rs[..., 1], rs[..., 0], rs[..., 1]], axis=-1)
    score = bary.min(axis=-1)
    best = np.argmax(score, axis=1)
    idx = np.arange(len(pts))
    tri = cand[idx, best]
    rs_best = rs[idx, best]
    inside = score[idx, best] >= -1e-10
    dist = np.zeros(len(pts))
    if not np.all(inside):
        out = np.flatnonzero(~inside)
        P = mesh.vertices[mesh.triangles[tri[out]]]
        dist[out] = _point_triangle_distance(pts[out], P)
    return tri, rs_best, dist


def _point_triangle_distance(p, tri_pts):
    d = np.full(len(p), np.inf)
    for a, b in ((0, 1), (1, 2), (2, 0)):
        A, B = tri_pts[:, a], tri_pts[:, b]
        AB = B - A
        t = np.clip(np.sum((p - A) * AB, axis=1) / np.sum(AB * AB, axis=1), 0, 1)
        d = np.minimum(d, np.linalg.norm(p - (A + t[:, None] * AB), axis=1))
    return d


def evaluate(mesh, values, points, max_distance: float | None = None, gradient: bool = False):
    """Evaluate a nodal field (or its gradient) at arbitrary points.

    Raises
    ------
    TransferError
        If a point is farther than ``max_distance`` from the mesh.
    """
    tri, rs, dist = locate(mesh, points)
    if max_distance is not None and np.any(dist > max_distance):
        raise TransferError(f"point {dist.max():.3e} away from the mesh (limit {max_distance:.3e})")
    vals = np.asarray(values)[mesh.elem_dofs[tri]]
    phi, dphi = shape(mesh.order, rs)
    if not gradient:
        return np.einsum("pa,pa...->p...", phi, vals)
    _, jac = _map(mesh, tri, rs)
    grad = np.einsum("pak,pkd->pad", dphi, np.linalg.inv(jac))
    return np.einsum("pad,pa->pd", grad, vals)
