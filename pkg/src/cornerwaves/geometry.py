"""Corner domain geometry: bottom profile, free surface, frames and contact state.

Conventions
-----------
The fluid occupies ``b(x) < z < eta(x)`` for ``c < x < L``.  On the free
surface the unit tangent ``tau_t`` points toward the contact point (the
direction of decreasing ``x``) and the normal ``n_t`` points up, out of the
fluid.  On the bottom ``tau_b`` points away from the contact point and
``n_b`` points down.  With this choice::

    cos(omega) = -tau_t . tau_b,      v_c = -v . tau_b,
    kappa = -eta'' / (1 + eta'**2)**1.5,

so that a crest has positive curvature.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline, make_interp_spline

from .errors import AngleGuardError, ConfigError, DomainError, GeometryError

TOP, BOTTOM, WALL = 1, 2, 3
TAG_NAMES = {TOP: "TOP", BOTTOM: "BOTTOM", WALL: "WALL"}

_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _gauss_integral(fun, a, b):
    """Integrate ``fun`` on each interval ``[a_k, b_k]`` with 12-point Gauss."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    pts = mid[..., None] + half[..., None] * _GL_X
    return half * np.sum(_GL_W * fun(pts), axis=-1)


# ----------------------------------------------------------------------
# bottom
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class BottomProfile:
    """Beach bottom ``z = b(x)``.

    A straight beach ``b = offset - tan(alpha) x`` for ``x <= blend_start``,
    a flat floor ``b = -far_depth`` for ``x >= blend_end`` and a quintic
    Hermite blend in between that matches value, slope and second
    derivative at both ends.

    Parameters
    ----------
    slope_angle : float
        Beach inclination ``alpha`` in radians, ``0 <= alpha < pi/2``.
    blend_start, blend_end : float
        Blend interval ``[x0, x1]``.
    far_depth : float
        Depth ``h`` of the flat floor.
    offset : float
        Height of the beach line at ``x = 0``.
    """

    slope_angle: float
    blend_start: float
    blend_end: float
    far_depth: float
    offset: float = 0.0
    _coef: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        a, x0, x1 = self.slope_angle, self.blend_start, self.blend_end
        if not (0.0 <= a < 0.5 * np.pi):
            raise ConfigError(f"slope_angle must lie in [0, pi/2), got {a}")
        if not x1 > x0:
            raise ConfigError("blend_end must exceed blend_start")
        if self.far_depth <= 0:
            raise ConfigError("far_depth must be positive")
        m = -np.tan(a)
        y0 = self.offset + m * x0
        y1 = -self.far_depth
        if y0 < y1 - 1e-14:
            raise ConfigError("beach line lies below the far floor at blend_start")
        w = x1 - x0
        # quintic in t = (x - x0)/w matching (y, y', y'') at t = 0 and t = 1
        rows = np.array(
            [
                [1, 0, 0, 0, 0, 0],
                [0, 1, 0, 0, 0, 0],
                [0, 0, 2, 0, 0, 0],
                [1, 1, 1, 1, 1, 1],
                [0, 1, 2, 3, 4, 5],
                [0, 0, 2, 6, 12, 20],
            ],
            dtype=float,
        )
        rhs = np.array([y0, m * w, 0.0, y1, 0.0, 0.0])
        object.__setattr__(self, "_coef", np.linalg.solve(rows, rhs))
        t = np.linspace(0.0, 1.0, 2001)
        slope = np.polynomial.polynomial.polyval(t, np.polynomial.polynomial.polyder(self._coef))
        if np.any(slope > 1e-12 * max(1.0, abs(y0 - y1))):
            raise ConfigError("bottom blend is not monotone; widen the blend interval")

    @classmethod
    def flat(cls, depth: float) -> "BottomProfile":
        """Horizontal bottom ``b = -depth``."""
        return cls(0.0, 0.0, 1.0, depth, offset=-depth)

    @property
    def beach_slope(self) -> float:
        return -np.tan(self.slope_angle)

    @property
    def far_tangent(self) -> np.ndarray:
        """Constant beach tangent ``tau_b`` near the contact point."""
        a = self.slope_angle
        return np.array([np.cos(a), -np.sin(a)])

    @property
    def breakpoints(self) -> tuple[float, float]:
        return (self.blend_start, self.blend_end)

    def derivative(self, x, nu: int = 0):
        """``nu``-th derivative of ``b`` at ``x`` (``nu`` up to 3)."""
        x = np.asarray(x, dtype=float)
        x0, x1 = self.blend_start, self.blend_end
        w = x1 - x0
        line = [self.offset + self.beach_slope * x, np.full_like(x, self.beach_slope)]
        line += [np.zeros_like(x)] * 2
        flat = [np.full_like(x, -self.far_depth)] + [np.zeros_like(x)] * 3
        t = np.clip((x - x0) / w, 0.0, 1.0)
        c = self._coef
        for _ in range(nu):
            c = np.polynomial.polynomial.polyder(c)
        blend = np.polynomial.polynomial.polyval(t, c) / w**nu
        out = np.where(x <= x0, line[nu], np.where(x >= x1, flat[nu], blend))
        return out if out.ndim else float(out)

    def __call__(self, x):
        return self.derivative(x, 0)

    def slope(self, x):
        return self.derivative(x, 1)

    def second(self, x):
        return self.derivative(x, 2)

    def tangent(self, x):
        """``tau_b``: unit tangent pointing toward increasing ``x``."""
        bp = np.asarray(self.slope(x), dtype=float)
        return _unit(np.stack([np.ones_like(bp), bp], axis=-1))

    def normal(self, x):
        """``n_b``: unit outward (downward) normal."""
        bp = np.asarray(self.slope(x), dtype=float)
        return _unit(np.stack([bp, -np.ones_like(bp)], axis=-1))

    def curvature(self, x):
        """Signed curvature with ``d n_b / ds = curvature * tau_b``."""
        bp = self.slope(x)
        return self.second(x) / (1.0 + bp**2) ** 1.5

    def arclength(self, a, b):
        """Arclength of the bottom between abscissae ``a`` and ``b``."""
        fun = lambda x: np.sqrt(1.0 + self.slope(x) ** 2)  # noqa: E731
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        total = np.zeros(np.broadcast(a, b).shape)
        cuts = sorted({self.blend_start, self.blend_end})
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        edges = [lo] + [np.clip(cv, lo, hi) for cv in cuts] + [hi]
        for p, q in zip(edges[:-1], edges[1:]):
            total = total + _gauss_integral(fun, p, q)
        total = np.where(b >= a, total, -total)
        return total if total.ndim else float(total)

    def x_at_arclength(self, x_start: float, s):
        """Abscissa reached after arclength ``s`` along the bottom from ``x_start``."""
        s = np.asarray(s, dtype=float)
        x = x_start + s * np.cos(np.arctan(self.slope(x_start)))
        for _ in range(50):
            f = self.arclength(x_start, x) - s
            x = x - f / np.sqrt(1.0 + self.slope(x) ** 2)
            if np.all(np.abs(f) < 1e-14 * (1.0 + np.abs(s))):
                break
        return x if x.ndim else float(x)


# ----------------------------------------------------------------------
# free surface
# ----------------------------------------------------------------------


def graph_spline(x, y, wall_slope: float | None = 0.0,
                 corner_slope: float | None = None) -> CubicSpline:
    """Cubic spline through ``(x, y)``.

    The right end is clamped to ``wall_slope`` (a free surface meeting a
    vertical wall at a right angle has zero slope) and the left end to
    ``corner_slope``; either end is not-a-knot when its slope is None.
    """
    right = "not-a-knot" if wall_slope is None else (1, float(wall_slope))
    left = "not-a-knot" if corner_slope is None else (1, float(corner_slope))
    return CubicSpline(np.asarray(x, float), np.asarray(y, float), bc_type=(left, right))


class SurfaceCurve:
    """Free surface ``z = eta(x)`` interpolated through markers.

    Parameters
    ----------
    x : array_like
        Strictly increasing marker abscissae; ``x[0]`` is the contact
        abscissa and ``x[-1]`` the wall.
    eta : array_like
        Marker heights.
    wall_slope : float or None
        Clamped slope at the wall end, or None for not-a-knot.
    corner_slope : float or None
        Clamped slope at the contact end, or None for not-a-knot.
    """

    def __init__(self, x, eta, wall_slope: float | None = 0.0,
                 corner_slope: float | None = None):
        x = np.array(x, dtype=float)
        eta = np.array(eta, dtype=float)
        if x.ndim != 1 or x.shape != eta.shape:
            raise GeometryError("marker arrays must be one-dimensional and of equal length")
        if x.size < 4:
            raise GeometryError("at least four markers are needed for the spline")
        if np.any(np.diff(x) <= 0):
            raise GeometryError("marker abscissae must be strictly increasing")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(eta))):
            raise GeometryError("non-finite marker data")
        x.flags.writeable = False
        eta.flags.writeable = False
        self.x = x
        self.eta = eta
        self.wall_slope = wall_slope
        self.corner_slope = corner_slope
        self.spline = graph_spline(x, eta, wall_slope, corner_slope)

    def __repr__(self):
        return f"SurfaceCurve(n={self.x.size}, c={self.c:.6g}, L={self.L:.6g})"

    @property
    def c(self) -> float:
        return float(self.x[0])

    @property
    def L(self) -> float:
        return float(self.x[-1])

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        tol = 1e-12 * max(1.0, abs(self.L - self.c))
        if np.any(x < self.c - tol) or np.any(x > self.L + tol):
            raise DomainError(f"abscissa outside [{self.c}, {self.L}]")
        return np.clip(x, self.c, self.L)

    def __call__(self, x, nu: int = 0):
        return self.spline(self._check(x), nu)

    def slope(self, x):
        return self(x, 1)

    def curvature(self, x):
        """Mean curvature ``-eta''/(1+eta'^2)^{3/2}``."""
        x = self._check(x)
        d1 = self.spline(x, 1)
        return -self.spline(x, 2) / (1.0 + d1**2) ** 1.5

    def tangent(self, x):
        """``tau_t``: unit tangent pointing toward the contact point."""
        d1 = np.asarray(self.slope(x))
        return _unit(np.stack([-np.ones_like(d1), -d1], axis=-1))

    def normal(self, x):
        """``n_t``: unit upward normal."""
        d1 = np.asarray(self.slope(x))
        return _unit(np.stack([-d1, np.ones_like(d1)], axis=-1))

    @cached_property
    def _knot_lengths(self):
        seg = _gauss_integral(self._speed, self.x[:-1], self.x[1:])
        return np.concatenate([[0.0], np.cumsum(seg)])

    def _speed(self, x):
        return np.sqrt(1.0 + self.spline(x, 1) ** 2)

    @property
    def length(self) -> float:
        return float(self._knot_lengths[-1])

    def arclength(self, x):
        """Arclength from the contact point to abscissa ``x``."""
        x = self._check(x)
        k = np.clip(np.searchsorted(self.x, x, side="right") - 1, 0, self.x.size - 2)
        out = self._knot_lengths[k] + _gauss_integral(self._speed, self.x[k], x)
        return out if np.ndim(out) else float(out)

    def x_at_arclength(self, s):
        """Inverse of :meth:`arclength` by Newton iteration."""
        s = np.asarray(s, dtype=float)
        if np.any(s < -1e-12) or np.any(s > self.length * (1 + 1e-12)):
            raise DomainError("arclength outside the curve")
        s = np.clip(s, 0.0, self.length)
        x = np.interp(s, self._knot_lengths, self.x)
        for _ in range(30):
            f = self.arclength(x) - s
            x = np.clip(x - f / self._speed(x), self.c, self.L)
            if np.all(np.abs(f) < 1e-14 * max(1.0, self.length)):
                break
        return x if x.ndim else float(x)

    def with_heights(self, eta) -> "SurfaceCurve":
        return SurfaceCurve(self.x, eta, self.wall_slope, self.corner_slope)


def curvature(surface: SurfaceCurve, x):
    """Curvature ``kappa`` of the free surface at ``x`` (positive on crests)."""
    return surface.curvature(x)


def second_fundamental_form(surface: SurfaceCurve, x):
    """Second fundamental form as the scalar ``kappa`` (``Pi(tau) = kappa tau``)."""
    return surface.curvature(x)


def arclength_resample(surface: SurfaceCurve, n_markers: int) -> SurfaceCurve:
    """Redistribute markers equispaced in arclength and refit the spline.

    The first and last markers keep their positions, so the attachment of
    the first marker to the bottom is untouched.
    """
    if n_markers < 8:
        raise GeometryError("n_markers must be at least 8")
    s = np.linspace(0.0, surface.length, n_markers)
    x = surface.x_at_arclength(s)
    x[0], x[-1] = surface.c, surface.L
    if np.any(np.diff(x) <= 0):
        raise GeometryError("resampled markers are not monotone (self-intersecting surface)")
    eta = surface(x)
    eta[0] = surface.eta[0]
    eta[-1] = surface.eta[-1] if np.isclose(x[-1], surface.x[-1]) else eta[-1]
    return SurfaceCurve(x, eta, surface.wall_slope)


# ----------------------------------------------------------------------
# contact point and domain
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class ContactState:
    """Contact point data: abscissa, corner point, angle and contact speed."""

    c: float
    point: tuple[float, float]
    omega: float
    v_c: float = float("nan")


def angle_between(surface_slope, bottom_slope):
    """Wedge angle between a surface rising with ``surface_slope`` and the bottom."""
    return np.arctan(surface_slope) - np.arctan(bottom_slope)


def check_angle(omega: float, omega_min: float, omega_max: float = np.pi / 6) -> float:
    """Raise :class:`AngleGuardError` unless ``omega_min < omega < omega_max``."""
    if not (omega_min < omega < omega_max):
        raise AngleGuardError(omega, omega_min, omega_max)
    return omega


def contact_speed(omega, physics):
    """Contact-line law ``v_c = sigma (cos omega_s - cos omega) / beta_c``.

    ``physics`` is any object with ``sigma``, ``beta_c`` and ``omega_s``
    attributes.  Positive speeds move the corner up the beach.
    """
    sigma, beta, omega_s = physics.sigma, physics.beta_c, physics.omega_s
    if beta <= 0:
        raise ConfigError("beta_c must be positive")
    if sigma <= 0:
        raise ConfigError("sigma must be positive")
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0) or np.any(omega >= np.pi):
        raise DomainError("contact angle must lie in (0, pi)")
    out = sigma * (np.cos(omega_s) - np.cos(omega)) / beta
    return out if out.ndim else float(out)


class CornerDomain:
    """Fluid region ``{b(x) < z < eta(x), c < x < L}`` with a contact corner.

    Parameters
    ----------
    surface : SurfaceCurve
        Free surface; its first marker is the contact point.
    bottom : BottomProfile
    wall : float, optional
        Truncation wall abscissa ``L``; defaults to the last marker.
    h_max : float
        Upper bound on the local depth.
    """

    has_corner = True

    def __init__(self, surface: SurfaceCurve, bottom: BottomProfile, wall: float | None = None,
                 h_max: float = np.inf, eps_geom: float = 1e-9):
        self.surface = surface
        self.bottom = bottom
        self.wall = float(surface.L if wall is None else wall)
        self.h_max = float(h_max)
        c = surface.c
        if not c < self.wall:
            raise GeometryError("contact abscissa must lie left of the wall")
        if abs(surface.L - self.wall) > 1e-12 * max(1.0, abs(self.wall)):
            raise GeometryError("the last marker must sit on the wall")
        gap = surface.eta[0] - bottom(c)
        if abs(gap) > 1e-12:
            raise GeometryError(f"surface not attached to the bottom (gap {gap:.3e})")
        xs = np.union1d(surface.x, 0.5 * (surface.x[1:] + surface.x[:-1]))
        xs = xs[xs > c + eps_geom]
        depth = surface(xs) - bottom(xs)
        if np.any(depth <= 0):
            raise GeometryError("surface touches or crosses the bottom away from the corner")
        if depth.max() > self.h_max:
            raise GeometryError("depth exceeds h_max")

    # graph-domain protocol used by the mesher
    @property
    def x_left(self) -> float:
        return self.surface.c

    @property
    def x_right(self) -> float:
        return self.wall

    def top_height(self, x):
        return self.surface(x)

    def bottom_height(self, x):
        return self.bottom(x)

    @property
    def required_top_x(self):
        return self.surface.x

    @property
    def corner(self) -> np.ndarray:
        c = self.surface.c
        return np.array([c, float(self.bottom(c))])

    def contact_angle(self) -> float:
        return contact_angle(self)

    def contact(self, physics=None) -> ContactState:
        om = contact_angle(self)
        vc = contact_speed(om, physics) if physics is not None else float("nan")
        return ContactState(self.surface.c, tuple(self.corner), om, vc)

    @cached_property
    def volume(self) -> float:
        """Fluid area by Gauss quadrature of ``eta - b``."""
        fun = lambda x: self.surface.spline(x) - self.bottom(x)  # noqa: E731
        knots = np.union1d(self.surface.x, [b for b in self.bottom.breakpoints
                                            if self.x_left < b < self.x_right])
        return float(np.sum(_gauss_integral(fun, knots[:-1], knots[1:])))


class StripDomain:
    """Box-like test domain ``{-depth < z < eta(x), 0 < x < length}`` with two walls.

    This is the degenerate no-corner mode used by the elliptic oracles and
    the calculus audits.  ``surface`` may be None (flat at ``z = 0``) or a
    callable ``eta(x)``.
    """

    has_corner = False

    def __init__(self, length: float, depth: float, surface=None, x_left: float = 0.0,
                 required_top_x=None):
        if length <= 0 or depth <= 0:
            raise GeometryError("length and depth must be positive")
        self._x0 = float(x_left)
        self.length = float(length)
        self.depth = float(depth)
        self._eta = surface
        self.bottom = BottomProfile.flat(depth)
        self._req = None if required_top_x is None else np.asarray(required_top_x, float)
        xs = np.linspace(self.x_left, self.x_right, 257)
        if np.any(self.top_height(xs) <= -depth):
            raise GeometryError("surface below the bottom")

    @property
    def x_left(self):
        return self._x0

    @property
    def x_right(self):
        return self._x0 + self.length

    def top_height(self, x):
        x = np.asarray(x, dtype=float)
        if self._eta is None:
            return np.zeros_like(x) if x.ndim else 0.0
        return self._eta(x)

    def bottom_height(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full_like(x, -self.depth)
        return out if out.ndim else float(out)

    @property
    def required_top_x(self):
        if self._req is None:
            return np.array([self.x_left, self.x_right])
        return self._req

    @property
    def volume(self) -> float:
        fun = lambda x: self.top_height(x) + self.depth  # noqa: E731
        edges = np.linspace(self.x_left, self.x_right, 65)
        return float(np.sum(_gauss_integral(fun, edges[:-1], edges[1:])))


def contact_angle(domain: CornerDomain) -> float:
    """Contact angle ``omega`` with ``cos(omega) = -tau_t . tau_b`` at ``X_c``."""
    c = domain.surface.c
    om = float(angle_between(domain.surface.slope(c), domain.bottom.slope(c)))
    if not (0.0 <= om < np.pi):
        raise GeometryError(f"degenerate contact frames (omega = {om})")
    return om


def frames(domain: CornerDomain, boundary_tag: int, s):
    """Unit tangent and outward normal on a tagged boundary at arclength ``s``.

    ``s`` is measured from the contact point on TOP and BOTTOM and upward
    from the bottom on the WALL.

    Returns
    -------
    tau, n : ndarray
        Arrays of shape ``s.shape + (2,)``.
    """
    s = np.asarray(s, dtype=float)
    if boundary_tag == TOP:
        x = domain.surface.x_at_arclength(s)
        return domain.surface.tangent(x), domain.surface.normal(x)
    if boundary_tag == BOTTOM:
        total = domain.bottom.arclength(domain.x_left, domain.x_right)
        if np.any(s < -1e-12) or np.any(s > total * (1 + 1e-12)):
            raise DomainError("arclength outside the bottom")
        x = domain.bottom.x_at_arclength(domain.x_left, s)
        return domain.bottom.tangent(x), domain.bottom.normal(x)
    if boundary_tag == WALL:
        L = domain.x_right
        height = domain.top_height(L) - domain.bottom_height(L)
        if np.any(s < -1e-12) or np.any(s > height * (1 + 1e-12)):
            raise DomainError("arclength outside the wall")
        tau = np.broadcast_to(np.array([0.0, 1.0]), s.shape + (2,)).copy()
        n = np.broadcast_to(np.array([1.0, 0.0]), s.shape + (2,)).copy()
        return tau, n
    raise GeometryError(f"invalid boundary tag {boundary_tag!r}")


# ----------------------------------------------------------------------
# parametric curves for the transport audits
# ----------------------------------------------------------------------


class ParametricCurve:
    """Smooth closed-form-free curve through ordered points.

    Quintic interpolating splines in the chord-length parameter.  The unit
    tangent ``t`` follows the point order and ``n`` is ``t`` rotated by
    +90 degrees, so for points ordered by increasing ``x`` along a graph
    ``n`` points up and the curvature sign matches :class:`SurfaceCurve`.
    """

    def __init__(self, points, degree: int = 5):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < degree + 2:
            raise GeometryError("need an (n, 2) array with enough points")
        u = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))])
        if np.any(np.diff(u) <= 0):
            raise GeometryError("repeated points along the curve")
        self.points = pts
        self.u = u
        self.degree = degree
        self._sx = make_interp_spline(u, pts[:, 0], k=degree)
        self._sz = make_interp_spline(u, pts[:, 1], k=degree)

    def _derivs(self, u, order):
        return [np.stack([self._sx(u, k), self._sz(u, k)], axis=-1) for k in range(order + 1)]

    def frame(self, u=None):
        """Unit tangent ``t`` and normal ``n`` at parameters ``u`` (default: nodes)."""
        u = self.u if u is None else u
        _, d1 = self._derivs(u, 1)
        t = _unit(d1)
        n = np.stack([-t[..., 1], t[..., 0]], axis=-1)
        return t, n

    def curvature(self, u=None):
        u = self.u if u is None else u
        _, d1, d2 = self._derivs(u, 2)
        speed = np.linalg.norm(d1, axis=-1)
        cross = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
        return -cross / speed**3

    def d_ds(self, values, u=None, order: int = 2):
        """Arclength derivatives of nodal ``values`` up to ``order`` (1 or 2).

        ``values`` may carry trailing component axes.  Returns a list
        ``[f_s, f_ss][:order]`` evaluated at ``u``.
        """
        u = self.u if u is None else u
        vals = np.asarray(values, dtype=float)
        spl = make_interp_spline(self.u, vals, k=self.degree, axis=0)
        _, d1, d2 = self._derivs(u, 2)
        g = np.linalg.norm(d1, axis=-1)
        gu = np.sum(d1 * d2, axis=-1) / g
        fu = spl(u, 1)
        extra = (slice(None),) + (None,) * (vals.ndim - 1)
        g_, gu_ = g[extra], gu[extra]
        fs = fu / g_
        if order == 1:
            return [fs]
        fuu = spl(u, 2)
        fss = fuu / g_**2 - fu * gu_ / g_**3
        return [fs, fss]
