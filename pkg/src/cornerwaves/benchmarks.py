"""Convergence studies with closed-form references.

Each function returns a JSON-ready dictionary with the per-level errors
and the observed orders.
"""
from __future__ import annotations

import logging
import time

import numpy as np

from . import elliptic, sobolev
from .elliptic import MixedBVPSpec
from .geometry import TOP, StripDomain
from .meshing import MeshSpec, refine_uniform, sector_mesh, triangulate

log = logging.getLogger(__name__)

BENCHMARKS = ("elliptic-convergence", "wedge", "dn-strip", "norms")


def _wedge_mode(omega):
    lam = np.pi / (2 * omega)

    def u(x, z):
        return np.hypot(x, z) ** lam * np.cos(lam * np.arctan2(z, x))

    def grad(x, z):
        r = np.hypot(x, z)
        th = np.arctan2(z, x)
        with np.errstate(divide="ignore", invalid="ignore"):
            ur = np.where(r > 0, lam * r ** (lam - 1) * np.cos(lam * th), 0.0)
            ut = np.where(r > 0, -lam * r ** (lam - 1) * np.sin(lam * th), 0.0)
        return np.stack([ur * np.cos(th) - ut * np.sin(th), ur * np.sin(th) + ut * np.cos(th)],
                        axis=-1)

    return lam, u, grad


def wedge(omegas=(np.pi / 8, np.pi / 4 - 0.1, np.pi / 3), h0: float = 0.1, levels: int = 4,
          order: int = 2) -> dict:
    """Singular corner mode ``r^lam cos(lam theta)``, ``lam = pi / (2 omega)``, on uniform sectors.

    The bottom edge ``theta = 0`` carries the natural condition and the
    mode vanishes on ``theta = omega``; the arc takes the exact Dirichlet
    trace.  The expected H1 order on uniform refinement is ``min(p, lam)``.
    """
    rows = []
    for om in omegas:
        lam, u, gu = _wedge_mode(om)
        mesh = sector_mesh(om, 1.0, h0, order=order)
        hs, errs, dofs = [], [], []
        for _ in range(levels):
            sol = elliptic.solve_mixed(mesh, MixedBVPSpec(f=u))
            e = elliptic.error_norms(sol, u, gu)
            hs.append(mesh.h_max)
            errs.append(e["H1"])
            dofs.append(mesh.n_dofs)
            mesh = refine_uniform(mesh)
        orders = elliptic.observed_orders(hs, errs)
        rows.append({"omega": float(om), "lambda": float(lam),
                     "expected_order": float(min(order, lam)), "h": hs, "dofs": dofs,
                     "H1_error": errs, "orders": orders, "final_order": orders[-1]})
    finals = [r["final_order"] for r in rows]
    return {"benchmark": "wedge", "rows": rows,
            "within_0.3": bool(all(abs(r["final_order"] - r["expected_order"]) <= 0.3
                                   for r in rows)),
            "monotone": bool(all(b <= a + 0.1 for a, b in zip(finals, finals[1:])))}


def dn_strip(ks=(1, 2, 3, 4), hs=(0.1, 0.05, 0.025), depth: float = 1.0,
             length: float = np.pi, order: int = 2) -> dict:
    """DN map of ``cos(kx)`` on a flat strip against ``k tanh(k d) cos(kx)``.

    The strip spans ``[0, length]`` with natural conditions on the walls,
    which ``cos(kx)`` satisfies for integer ``k`` when ``length = pi``.
    Self-adjointness is measured as ``|<N f, g> - <f, N g>|`` for
    ``f = cos(x)``, ``g = cos(2x) + x^2/10`` relative to ``|<N f, g>|``.
    """
    rows = []
    for h in hs:
        dom = StripDomain(length, depth)
        mesh = triangulate(dom, MeshSpec(h, grading=1.0, order=order, resolve_depth=False))
        top = mesh.tag_dofs(TOP)
        x = mesh.nodes[top, 0]
        errs = {}
        for k in ks:
            f = np.zeros(mesh.n_dofs)
            f[top] = np.cos(k * x)
            Nf = elliptic.dn_operator(mesh, f).values
            ex = k * np.tanh(k * depth) * np.cos(k * x)
            num = elliptic.trace_inner(mesh, TOP, Nf - ex, Nf - ex)
            den = elliptic.trace_inner(mesh, TOP, ex, ex)
            errs[int(k)] = float(np.sqrt(num / den))
        fa = np.zeros(mesh.n_dofs)
        fb = np.zeros(mesh.n_dofs)
        fa[top] = np.cos(x)
        fb[top] = np.cos(2 * x) + x**2 / 10
        Na = elliptic.dn_operator(mesh, fa).values
        Nb = elliptic.dn_operator(mesh, fb).values
        ab = elliptic.trace_inner(mesh, TOP, Na, fb[top])
        ba = elliptic.trace_inner(mesh, TOP, fa[top], Nb)
        rows.append({"h": float(h), "dofs": mesh.n_dofs, "rel_L2": errs,
                     "self_adjoint_defect": float(abs(ab - ba) / max(abs(ab), 1e-300))})
    finest = rows[-1]
    return {"benchmark": "dn-strip", "rows": rows,
            "max_rel_L2_finest": float(max(finest["rel_L2"].values())),
            "self_adjoint_defect_finest": finest["self_adjoint_defect"]}


def elliptic_convergence(h0: float = 0.2, levels: int = 4, order: int = 2) -> dict:
    """Mixed problem on a strip with ``u = cosh(z + 1) cos(x)``.

    ``u`` is harmonic, satisfies the natural conditions on the bottom
    ``z = -1`` and the walls ``x = 0, pi``, and supplies the TOP trace.
    """

    def u(x, z):
        return np.cosh(z + 1.0) * np.cos(x)

    def gu(x, z):
        return np.stack([-np.cosh(z + 1.0) * np.sin(x), np.sinh(z + 1.0) * np.cos(x)], axis=-1)

    dom = StripDomain(np.pi, 1.0)
    mesh = triangulate(dom, MeshSpec(h0, grading=1.0, order=order, resolve_depth=False))
    levels_out = []
    for _ in range(levels):
        sol = elliptic.solve_mixed(mesh, MixedBVPSpec(f=u))
        levels_out.append((mesh.h_max, mesh.n_dofs, elliptic.error_norms(sol, u, gu)))
        mesh = refine_uniform(mesh)
    rows = elliptic.convergence_report(levels_out)
    return {"benchmark": "elliptic-convergence", "rows": rows,
            "expected": {"H1": order, "L2": order + 1}}


def norms(ks=(1, 2, 3, 4), s_values=(0.5,), n: int = 256) -> dict:
    """Gagliardo seminorm of periodic ``cos(kx)`` against the Fourier multiplier."""
    P = 2 * np.pi
    rows = []
    for s in s_values:
        for k in ks:
            f = sobolev.CurveFunction.periodic(lambda x, k=k: np.cos(k * x), P, n)
            num = sobolev.gagliardo_seminorm_sq(f, s)
            ex = 2 * P * k ** (2 * s) * sobolev.fractional_integral_constant(s)
            rows.append({"s": float(s), "k": int(k), "numeric": float(num), "fourier": ex,
                         "rel_err": float(abs(num / ex - 1))})
    return {"benchmark": "norms", "rows": rows,
            "max_rel_err": float(max(r["rel_err"] for r in rows))}


def run(which, cfg=None) -> list[dict]:
    """Run the named benchmarks with settings from a :class:`RunConfig` benchmark section."""
    out = []
    for name in which:
        t0 = time.perf_counter()
        if name == "wedge":
            kw = {}
            if cfg is not None:
                kw = {"omegas": cfg.wedge_angles, "h0": cfg.h0, "levels": cfg.levels}
            res = wedge(**kw)
        elif name == "dn-strip":
            res = dn_strip()
        elif name == "elliptic-convergence":
            res = elliptic_convergence()
        elif name == "norms":
            res = norms()
        else:
            raise ValueError(f"unknown benchmark {name!r}")
        res["seconds"] = time.perf_counter() - t0
        log.info("benchmark %s done in %.1fs", name, res["seconds"])
        out.append(res)
    return out
