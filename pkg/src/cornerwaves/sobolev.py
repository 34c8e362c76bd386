"""Fractional and weighted Sobolev norms of functions sampled along curves.

Functions are represented by their piecewise-linear interpolant in the
arclength ``rho`` measured from the first node (the contact point for
surface and bottom data).  The Gagliardo double integral is evaluated cell
pair by cell pair: well-separated pairs by tensor Gauss quadrature,
touching and identical cells in closed form after a Duffy split, which
removes the diagonal singularity exactly for linear data.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma, zeta

from .errors import DataError, ResolutionError

MIN_NODES = 16
_GX, _GW = np.polynomial.legendre.leggauss(8)
_GX = 0.5 * (_GX + 1.0)
_GW = 0.5 * _GW


@dataclass(frozen=True)
class CurveFunction:
    """Samples of a function along a curve.

    Parameters
    ----------
    rho : ndarray
        Strictly increasing arclength of the nodes, ``rho[0] = 0`` at the
        reference end.
    values : ndarray
    tag : str
        Boundary the curve belongs to (``"top"``, ``"bottom"`` or free text).
    period : float or None
        If set, the samples cover ``[0, period)`` of a periodic function and
        the node at ``period`` is implied.
    """

    rho: np.ndarray
    values: np.ndarray
    tag: str = ""
    period: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        rho = np.asarray(self.rho, float)
        vals = np.asarray(self.values, float)
        if rho.ndim != 1 or rho.shape != vals.shape:
            raise DataError("rho and values must be 1-D arrays of equal length")
        if np.any(np.diff(rho) <= 0):
            raise DataError("arclength must increase strictly")
        if self.period is not None and rho[-1] >= self.period:
            raise DataError("periodic samples must lie in [0, period)")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_points(cls, points, values, tag: str = "") -> "CurveFunction":
        """Samples at curve ``points`` ordered from the reference end (chord arclength)."""
        p = np.asarray(points, float)
        rho = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(p, axis=0), axis=1))])
        return cls(rho, values, tag)

    @classmethod
    def from_callable(cls, fun, length: float, n: int = 256, grading: float = 1.0,
                      tag: str = "") -> "CurveFunction":
        """Sample ``fun(rho)`` on ``rho_j = length (j/n)^grading`` (grading > 1 clusters at 0)."""
        rho = length * np.linspace(0.0, 1.0, n + 1) ** grading
        return cls(rho, fun(rho), tag)

    @classmethod
    def periodic(cls, fun, period: float, n: int = 256, tag: str = "") -> "CurveFunction":
        rho = np.arange(n) * (period / n)
        return cls(rho, fun(rho), tag, period=float(period))

    @property
    def n(self) -> int:
        return self.rho.size

    @property
    def length(self) -> float:
        return float(self.period if self.period is not None else self.rho[-1])

    def cells(self):
        """Cell endpoints and end values (the closing cell included when periodic)."""
        r, f = self.rho, self.values
        if self.period is not None:
            r = np.append(r, self.period)
            f = np.append(f, f[0])
        return r[:-1], r[1:], f[:-1], f[1:]


# ----------------------------------------------------------------------
# Gagliardo seminorm
# ----------------------------------------------------------------------


def _kernel_remainder(d, a, period):
    """``sum_{m != 0} |d + m P|^{-a}`` for ``|d| <= P/2`` (Hurwitz zeta)."""
    u = d / period
    return period ** (-a) * (zeta(a, 1.0 + u) + zeta(a, 1.0 - u))


def _wrap(d, period):
    return d - period * np.round(d / period)


def _self_cell(h, m, s):
    """``int int (m (x - y))^2 / |x - y|^{1+2s}`` over one cell."""
    return m * m * 2.0 * h ** (3 - 2 * s) / ((2 - 2 * s) * (3 - 2 * s))


def _touching(h1, m1, h2, m2, s):
    """Both orderings of the pair ``[b - h1, b] x [b, b + h2]`` sharing the node ``b``.

    With ``u = b - x``, ``w = y - b`` the difference is ``-(m1 u + m2 w)``.
    On each half of the rectangle the Duffy map ``(u, w) = xi (.., ..)``
    makes the radial integral ``int xi^{2-2s}`` exact.
    """
    a = 1.0 + 2.0 * s
    e, w = _GX, _GW
    # half with w/h2 <= u/h1: u = h1 xi, w = h2 xi eta
    t1 = np.sum(w * (m1 * h1 + m2 * h2 * e) ** 2 / (h1 + h2 * e) ** a) * h1 * h2
    # half with u/h1 <= w/h2: w = h2 xi, u = h1 xi eta
    t2 = np.sum(w * (m1 * h1 * e + m2 * h2) ** 2 / (h1 * e + h2) ** a) * h1 * h2
    return 2.0 * (t1 + t2) / (3.0 - 2.0 * s)


def gagliardo_seminorm_sq(f: CurveFunction, s: float, block: int = 64) -> float:
    """``int int |f(x) - f(y)|^2 / |x - y|^{1+2s} dx dy`` of the interpolant.

    For periodic data the outer integral runs over one period and the inner
    one over the whole line.
    """
    if not 0.0 < s < 1.0:
        raise DataError("the fractional order must lie in (0, 1)")
    if f.n < MIN_NODES:
        raise ResolutionError(f"need at least {MIN_NODES} nodes, got {f.n}")
    a0, a1, f0, f1 = f.cells()
    h = a1 - a0
    m = (f1 - f0) / h
    nc = h.size
    per = f.period
    a = 1.0 + 2.0 * s

    xq = a0[:, None] + h[:, None] * _GX  # (nc, q)
    fq = f0[:, None] + (f1 - f0)[:, None] * _GX
    wq = h[:, None] * _GW

    total = 0.0
    idx = np.arange(nc)
    for start in range(0, nc, block):
        rows = idx[start:start + block]
        d = xq[rows][:, None, :, None] - xq[None, :, None, :]  # (b, nc, q, q)
        if per is not None:
            d = _wrap(d, per)
        df2 = (fq[rows][:, None, :, None] - fq[None, :, None, :]) ** 2
        gap = np.abs(rows[:, None] - idx[None, :])
        if per is not None:
            gap = np.minimum(gap, nc - gap)
        far = gap >= 2
        ww = wq[rows][:, None, :, None] * wq[None, :, None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            contrib = np.where(far[:, :, None, None], df2 * np.abs(d) ** (-a), 0.0)
        total += float(np.sum(contrib * ww))
        if per is not None:
            # smooth far-image part of the kernel, over every pair
            total += float(np.sum(df2 * _kernel_remainder(d, a, per) * ww))

    total += float(np.sum(_self_cell(h, m, s)))
    pairs = [(i, i + 1) for i in range(nc - 1)]
    if per is not None and nc > 2:
        pairs.append((nc - 1, 0))
    for i, j in pairs:
        total += _touching(h[i], m[i], h[j], m[j], s)
    return total


def l2_norm_sq(f: CurveFunction) -> float:
    """Exact ``int f^2`` of the interpolant."""
    a0, a1, f0, f1 = f.cells()
    return float(np.sum((a1 - a0) * (f0 * f0 + f0 * f1 + f1 * f1) / 3.0))


def gagliardo_norm(f: CurveFunction, s: float, seminorm: bool = False) -> float:
    """``(||f||_{L2}^2 + |f|_{s}^2)^{1/2}``; with ``seminorm=True`` the double integral only.

    Raises
    ------
    ResolutionError
        Fewer than 16 nodes.
    DataError
        ``s`` outside ``(0, 1)``.
    """
    semi = gagliardo_seminorm_sq(f, s)
    return float(np.sqrt(semi if seminorm else semi + l2_norm_sq(f)))


def fractional_integral_constant(s: float) -> float:
    """``int_0^inf (1 - cos u) u^{-1-2s} du = Gamma(1-2s) cos(pi s) / (2s)`` (pi/2 at s = 1/2)."""
    if abs(s - 0.5) < 1e-12:
        return np.pi / 2
    return float(gamma(1.0 - 2.0 * s) * np.cos(np.pi * s) / (2.0 * s))


def fourier_seminorm_sq(values, period: float, s: float) -> float:
    """Gagliardo seminorm squared of the trigonometric interpolant of uniform periodic samples.

    Each mode ``c e^{i q x}`` contributes ``4 P I(s) |q|^{2s} |c|^2``; for
    ``cos(kx)`` this is ``2 P I(s) k^{2s}``.
    """
    v = np.asarray(values, float)
    c = np.fft.fft(v) / v.size
    q = 2.0 * np.pi * np.fft.fftfreq(v.size, d=period / v.size)
    return float(4.0 * period * fractional_integral_constant(s) * np.sum(np.abs(q) ** (2 * s)
                                                                         * np.abs(c) ** 2))


# ----------------------------------------------------------------------
# weighted norm near the reference end
# ----------------------------------------------------------------------


@dataclass
class TildeHalfResult:
    """``norm`` is ``inf`` when the weighted integral diverges (``diverges`` set)."""

    norm: float
    seminorm: float
    weighted: float
    diverges: bool
    increments: list


def _weighted_from(a0, a1, f0, f1, eps):
    """``int_{max(a, eps)}^{b} f^2 / rho`` for linear pieces ``f = alpha + m rho``."""
    lo = np.maximum(a0, eps)
    keep = a1 > lo
    a0, a1, f0, f1, lo = a0[keep], a1[keep], f0[keep], f1[keep], lo[keep]
    m = (f1 - f0) / (a1 - a0)
    al = f0 - m * a0
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(al != 0.0, al * al * np.log(a1 / lo), 0.0)
    return float(np.sum(logs + 2 * al * m * (a1 - lo) + 0.5 * m * m * (a1 * a1 - lo * lo)))


def weighted_integral(f: CurveFunction, halvings: int = 12, ratio_tol: float = 0.75,
                      rtol: float = 1e-8) -> tuple[float, bool, list]:
    """``int rho^{-1} f^2`` with a divergence test.

    The integral is cut at ``eps_j = rho_1 2^{-j}`` and the increments
    between successive cuts are examined: a convergent integral has
    geometrically shrinking increments, a logarithmic divergence constant
    ones.
    """
    a0, a1, f0, f1 = f.cells()
    eps = f.rho[1] * 0.5 ** np.arange(halvings + 1)
    W = np.array([_weighted_from(a0, a1, f0, f1, e) for e in eps])
    inc = np.diff(W)
    last = inc[-1]
    scale = max(abs(W[-1]), 1e-300)
    growing = inc[-2] > 0 and last / inc[-2] > ratio_tol
    diverges = bool(growing and last > rtol * scale)
    total = _weighted_from(a0, a1, f0, f1, 0.0) if not diverges else float("inf")
    return total, diverges, inc.tolist()


def tilde_half_norm(f: CurveFunction) -> TildeHalfResult:
    """``(||f||_{H^{1/2}}^2 + int rho^{-1} |f|^2)^{1/2}`` with ``rho`` measured from the first node."""
    if f.period is not None:
        raise DataError("the weighted norm needs an open curve")
    semi = gagliardo_norm(f, 0.5)
    w, div, inc = weighted_integral(f)
    norm = float("inf") if div else float(np.sqrt(semi**2 + w))
    return TildeHalfResult(norm, semi, w, div, inc)


# ----------------------------------------------------------------------
# H^{5/2} of a graph
# ----------------------------------------------------------------------


def h52_norm(spline, a: float | None = None, b: float | None = None) -> dict:
    """``H^{5/2}`` norm of a cubic-spline graph on ``[a, b]`` (default: the spline's knots).

    Realised as ``(||eta||_{H^2}^2 + |eta''|_{1/2}^2)^{1/2}`` with the
    Gagliardo seminorm of the restriction (no extension).  ``eta''`` of a
    cubic spline is piecewise linear between knots, so the seminorm is
    exact up to the Gauss rule on separated cell pairs.
    """
    x = np.asarray(spline.x, float)
    if a is not None or b is not None:
        lo = x[0] if a is None else a
        hi = x[-1] if b is None else b
        x = np.union1d(x[(x > lo) & (x < hi)], [lo, hi])
    if x.size < MIN_NODES:
        # refine uniformly between knots to reach the minimum node count
        k = int(np.ceil((MIN_NODES - 1) / (x.size - 1)))
        x = np.concatenate([np.linspace(x[i], x[i + 1], k + 1)[:-1] for i in range(x.size - 1)]
                           + [x[-1:]])
    xg = (x[:-1, None] + np.diff(x)[:, None] * _GX).ravel()
    wg = (np.diff(x)[:, None] * _GW).ravel()
    h2 = float(sum(np.sum(wg * spline(xg, k) ** 2) for k in range(3)))
    d2 = CurveFunction(x - x[0], spline(x, 2), "top")
    semi = gagliardo_seminorm_sq(d2, 0.5)
    return {"norm": float(np.sqrt(h2 + semi)), "h2_sq": h2, "half_sq": semi,
            "convention": "restriction Gagliardo norm in the abscissa"}


# ----------------------------------------------------------------------
# empirical trace constant
# ----------------------------------------------------------------------


def _sector_fields(mesh, omega, radius, rng, n_modes, dirichlet_top):
    p = mesh.nodes
    r = np.hypot(p[:, 0], p[:, 1]) / radius
    th = np.arctan2(p[:, 1], p[:, 0])
    u = np.zeros(mesh.n_dofs)
    for _ in range(n_modes):
        m = rng.integers(1, 4)
        q = rng.integers(1, 4)
        c = rng.normal()
        if dirichlet_top:
            u += c * r**m * (1 - r) * np.cos((2 * q - 1) * np.pi * th / (2 * omega))
        else:
            u += c * (1.0 + r**m * np.cos(q * th))
    return u


def trace_constant_probe(n_samples: int = 20, omega: float = np.pi / 8, h: float = 0.05,
                         radius: float = 1.0, seed: int = 0, n_modes: int = 3,
                         dirichlet_top: bool = True) -> dict:
    """Largest ratio ``||u|_BOTTOM||~_{1/2} / ||u||_{H^1}`` over random smooth fields.

    Fields vanish on TOP (the arc and the upper edge of the sector) unless
    ``dirichlet_top`` is False, the negative control, where the weighted
    integral of the trace diverges at the apex and the constant is ``inf``.
    """
    from . import fem
    from .geometry import BOTTOM
    from .meshing import sector_mesh

    mesh = sector_mesh(omega, radius, h)
    K = fem.stiffness(mesh)
    M = fem.mass(mesh)
    bot = mesh.tag_dofs(BOTTOM)
    bot = bot[np.argsort(np.hypot(*mesh.nodes[bot].T))]
    rng = np.random.default_rng(seed)
    ratios = []
    flags = 0
    for _ in range(n_samples):
        u = _sector_fields(mesh, omega, radius, rng, n_modes, dirichlet_top)
        h1 = float(np.sqrt(u @ (K @ u) + u @ (M @ u)))
        if h1 == 0.0:
            continue
        res = tilde_half_norm(CurveFunction.from_points(mesh.nodes[bot], u[bot], "bottom"))
        flags += res.diverges
        ratios.append(res.norm / h1)
    C = float(np.max(ratios)) if ratios else float("nan")
    return {"C": C, "ratios": ratios, "diverging": int(flags), "h": h, "omega": omega,
            "dirichlet_top": dirichlet_top, "n_dofs": mesh.n_dofs}
