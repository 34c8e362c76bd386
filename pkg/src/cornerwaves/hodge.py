"""Pressure solves of the Hodge-type splitting of the velocity equation.

For two vector fields ``w`` and ``v`` the pressure ``P_wv`` solves::

    -Delta P = tr(grad w grad v)        in the fluid,
    P = 0                               on TOP,
    dP/dn_b = w . (grad_v n_b)          on BOTTOM,
    dP/dn = 0                           on the WALL.

``grad_v n_b = (v . tau_b) kappa_b tau_b`` vanishes on straight bottom
pieces, so the bottom datum lives on the blend between beach and floor.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import elliptic, fem
from .elliptic import MixedBVPSpec, ScalarField, VectorField
from .errors import DataError
from .geometry import BOTTOM, TOP


@dataclass(frozen=True)
class PressureField:
    """Pressure ``P`` together with the names of the pair that produced it."""

    P: ScalarField
    pair: tuple = ("w", "v")

    @property
    def mesh(self):
        return self.P.mesh

    @property
    def top_defect(self) -> float:
        """``max |P|`` on TOP; zero up to solver tolerance for pressure_wv."""
        tr = self.P.trace(TOP)
        return float(np.max(np.abs(tr))) if tr.size else 0.0


def _bottom_of(domain):
    if domain is None:
        return None
    return getattr(domain, "bottom", domain)


def _check_mesh(mesh, *fields):
    for f in fields:
        if f.mesh is not mesh:
            raise DataError("fields live on a different mesh than the solve")


def gradient_qp(field: VectorField) -> np.ndarray:
    """``G[..., j, i] = d_i field_j`` at element quadrature points."""
    mesh = field.mesh
    return np.stack([fem.gradient_qp(mesh, field.x.values),
                     fem.gradient_qp(mesh, field.z.values)], axis=-2)


def trace_product(w: VectorField, v: VectorField) -> np.ndarray:
    """``tr(grad w grad v) = d_i w_j d_j v_i`` at quadrature points."""
    Gw, Gv = gradient_qp(w), gradient_qp(v)
    return np.einsum("...ji,...ij->...", Gw, Gv)


def bottom_shape_datum(mesh, w: VectorField, v: VectorField, bottom) -> np.ndarray:
    """``w . grad_v n_b`` at BOTTOM facet quadrature points (zero without a bottom profile)."""
    geo = fem.facet_geometry(mesh, BOTTOM)
    if bottom is None:
        return np.zeros(geo.wds.shape)
    x = geo.x[..., 0]
    tb = bottom.tangent(x)
    kb = bottom.curvature(x)
    wv = np.stack([fem.facet_values(mesh, BOTTOM, w.x.values),
                   fem.facet_values(mesh, BOTTOM, w.z.values)], axis=-1)
    vv = np.stack([fem.facet_values(mesh, BOTTOM, v.x.values),
                   fem.facet_values(mesh, BOTTOM, v.z.values)], axis=-1)
    return kb * np.sum(wv * tb, axis=-1) * np.sum(vv * tb, axis=-1)


def pressure_wv(mesh, w: VectorField, v: VectorField, domain=None,
                names: tuple = ("w", "v")) -> PressureField:
    """Pressure ``P_wv`` of the pair ``(w, v)``.

    Parameters
    ----------
    mesh : Mesh
    w, v : VectorField
        Fields on ``mesh``.
    domain : CornerDomain, StripDomain, BottomProfile or None
        Supplies the bottom profile; ``None`` means a straight bottom.
    names : tuple of str
        Labels stored with the result.

    Raises
    ------
    DataError
        If ``w`` or ``v`` is not defined on ``mesh``.
    """
    _check_mesh(mesh, w, v)
    h = -trace_product(w, v)
    g = bottom_shape_datum(mesh, w, v, _bottom_of(domain))
    P = elliptic.solve_mixed(mesh, MixedBVPSpec(h=h, g=g))
    return PressureField(P, tuple(names))


def pressure_total(mesh, v: VectorField, kappa_trace, sigma: float, domain=None) -> PressureField:
    """``P = P_vv + sigma H(kappa)``; its TOP trace is ``sigma kappa``."""
    pvv = pressure_wv(mesh, v, v, domain, ("v", "v")).P
    cap = elliptic.harmonic_extension(mesh, kappa_trace)
    return PressureField(pvv + sigma * cap, ("v", "v+kappa"))


def covariant_correct(mesh, w: VectorField, v: VectorField, domain=None) -> VectorField:
    """``grad P_wv``, the difference between covariant and material derivative of ``w``."""
    return elliptic.nodal_gradient(pressure_wv(mesh, w, v, domain).P)
