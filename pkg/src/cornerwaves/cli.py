"""Command-line interface: ``simulate``, ``audit``, ``benchmark`` and ``norms``.

Exit codes: 0 success, 1 configuration error, 2 contact-angle guard
breach, 3 solver or geometry failure, 4 an audit or benchmark check did
not pass.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

EXIT_OK, EXIT_CONFIG, EXIT_GUARD, EXIT_SOLVER, EXIT_CHECK = 0, 1, 2, 3, 4

CSV_COLUMNS = ("t", "c", "omega", "v_c", "m_c", "E0", "E0_kinetic", "E0_gravity", "E0_surface",
               "E0_contact", "dE0_residual", "E_high", "F_corner")

log = logging.getLogger("cornerwaves")


def _limit_threads(n: int | None) -> None:
    if n is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def _header(cfg, command: str) -> dict:
    from . import __version__

    return {"program": "cornerwaves", "version": __version__, "command": command,
            "config_hash": cfg.hash if cfg is not None else None,
            "config_source": cfg.source if cfg is not None else None}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "tolist"):
        return _jsonable(obj.tolist())
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def write_json(path: Path, header: dict, body: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable({"header": header, **body}), indent=2, sort_keys=False))


def write_csv(path: Path, header: dict, rows) -> None:
    """CSV with ``#``-prefixed header lines, then the column row."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        for k, v in header.items():
            fh.write(f"# {k}: {v}\n")
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([repr(float(r[c])) for c in CSV_COLUMNS])


def _out_dir(args, cfg) -> Path:
    return Path(args.out_dir if args.out_dir else cfg.output.directory)


def _load(args):
    from .config import RunConfig, load

    if args.config is None:
        return RunConfig().validate()
    return load(args.config)


# ----------------------------------------------------------------------
# simulate
# ----------------------------------------------------------------------


def _energy_rows(reports, snaps_meta):
    import numpy as np

    t = np.array([r.t for r in reports])
    e = np.array([r.basic for r in reports])
    d = np.array([r.dissipation for r in reports])
    res = np.full(len(reports), np.nan)
    if len(reports) >= 3:
        res[1:-1] = np.gradient(e, t)[1:-1] + d[1:-1]
    rows = []
    for k, r in enumerate(reports):
        c, = snaps_meta[k]
        rows.append({"t": r.t, "c": c, "omega": r.omega, "v_c": r.v_c, "m_c": r.m_c,
                     "E0": r.basic, "E0_kinetic": r.kinetic, "E0_gravity": r.gravity,
                     "E0_surface": r.surface, "E0_contact": r.contact,
                     "dE0_residual": res[k], "E_high": r.high, "F_corner": r.corner})
    return rows


def cmd_simulate(args) -> int:
    from . import dynamics, energy
    from .errors import AngleGuardError
    from .meshing import dump_mesh

    cfg = _load(args)
    out = _out_dir(args, cfg)
    sim = cfg.build_simulator()
    state = cfg.initial_state(sim)
    every_high = cfg.output.high_energy_every
    meta = []
    count = {"k": 0}

    def callback(rep, snap):
        k = count["k"]
        count["k"] += 1
        meta.append((snap.state.c,))
        if every_high and k % every_high == 0:
            terms = energy.high_energy(snap, sim)
            rep.high, rep.corner = terms["high"], terms["corner"]
            rep.corner_confidence = terms["confidence"]
        if cfg.output.mesh_dumps and k % cfg.output.cadence == 0:
            dump_mesh(snap.mesh, out / f"mesh_{k:05d}.txt")

    dt = cfg.time.dt
    result = dynamics.run(sim, state, cfg.time.t_end, dt=dt, callback=callback,
                          energy_every=cfg.output.cadence)
    header = _header(cfg, "simulate")
    rows = _energy_rows(result.reports, meta)
    write_csv(out / "energy.csv", header, rows)
    final = result.final_state
    body = {"state": final.to_dict(), "steps": len(result.steps),
            "volume_drift": ((result.reports[-1].volume - result.reports[0].volume)
                             / result.reports[0].volume) if result.reports else None,
            "error": None if result.error is None else str(result.error)}
    if len(result.reports) >= 3:
        audit = energy.dissipation_audit(result.reports)
        body["dissipation_relative_residual"] = audit.relative
    write_json(out / "final_state.json", header, body)
    if isinstance(result.error, AngleGuardError):
        log.error("contact-angle guard breached: %s", result.error)
        return EXIT_GUARD
    print(f"wrote {out / 'energy.csv'} ({len(rows)} rows) and {out / 'final_state.json'}")
    return EXIT_OK


# ----------------------------------------------------------------------
# audit
# ----------------------------------------------------------------------


def _which(args, default):
    if args.which is None:
        return list(default)
    items = [w.strip() for w in args.which.split(",") if w.strip()]
    return [] if items == ["none"] else items


def cmd_audit(args) -> int:
    from . import calculus_audit as ca
    from .errors import ConfigError

    cfg = _load(args)
    which = _which(args, cfg.audit.which)
    extra = [w for w in which if w == "dissipation"]
    which = [w for w in which if w != "dissipation"]
    unknown = set(which) - set(ca.AUDITS)
    if unknown:
        raise ConfigError(f"unknown audits: {sorted(unknown)}")
    a = cfg.audit
    rhs_flow = ca.canonical_flow(amplitude=0.22) if args.corrupt_rhs else None
    results = [r.as_dict() for r in ca.run_suite(which, h=a.h_mesh, delta=a.delta,
                                                 n_markers=a.n_markers,
                                                 surface_laplacian_form=a.surface_laplacian_form,
                                                 rhs_flow=rhs_flow)] if which else []
    if extra:
        results.append(_dissipation_audit(cfg))
    ok = all(r["pass"] for r in results)
    out = _out_dir(args, cfg)
    write_json(out / "audit.json", _header(cfg, "audit"), {"audits": results, "pass": ok})
    for r in results:
        print(f"{r['identity']:<24} slope {r.get('slope', float('nan')):6.3f}  "
              f"{'PASS' if r['pass'] else 'FAIL'}")
    return EXIT_OK if ok else EXIT_CHECK


def _dissipation_audit(cfg) -> dict:
    from . import dynamics, energy

    sim = cfg.build_simulator()
    res = dynamics.run(sim, cfg.initial_state(sim), cfg.time.t_end, dt=cfg.time.dt)
    if res.error is not None:
        raise res.error
    audit = energy.dissipation_audit(res.reports)
    return {"identity": "dissipation", "relative_residual": audit.relative,
            "max_residual": audit.max_residual, "slope": float("nan"),
            "pass": bool(audit.relative <= 1e-3)}


# ----------------------------------------------------------------------
# benchmark
# ----------------------------------------------------------------------


def _benchmark_passes(res: dict) -> bool:
    name = res["benchmark"]
    if name == "wedge":
        return res["within_0.3"] and res["monotone"]
    if name == "dn-strip":
        return res["max_rel_L2_finest"] <= 1e-3 and res["self_adjoint_defect_finest"] <= 1e-8
    if name == "norms":
        return res["max_rel_err"] <= 0.01
    if name == "elliptic-convergence":
        last = res["rows"][-1]["observed_order"]
        return all(abs(last[k] - v) <= 0.3 for k, v in res["expected"].items())
    return False


def cmd_benchmark(args) -> int:
    from . import benchmarks
    from .errors import ConfigError

    cfg = _load(args)
    which = _which(args, cfg.benchmark.which)
    unknown = set(which) - set(benchmarks.BENCHMARKS)
    if unknown:
        raise ConfigError(f"unknown benchmarks: {sorted(unknown)}")
    results = benchmarks.run(which, cfg.benchmark)
    for r in results:
        r["pass"] = bool(_benchmark_passes(r))
        print(f"{r['benchmark']:<22} {'PASS' if r['pass'] else 'FAIL'}  ({r['seconds']:.1f}s)")
    ok = all(r["pass"] for r in results)
    write_json(_out_dir(args, cfg) / "benchmark.json", _header(cfg, "benchmark"),
               {"benchmarks": results, "pass": ok})
    return EXIT_OK if ok else EXIT_CHECK


# ----------------------------------------------------------------------
# norms
# ----------------------------------------------------------------------


def read_samples(path: Path):
    """Samples from JSON (``{"rho": [...], "values": [...]}``) or a two-column CSV."""
    import numpy as np

    from .errors import ConfigError

    if not path.is_file():
        raise ConfigError(f"sample file not found: {path}")
    try:
        if path.suffix.lower() == ".json":
            d = json.loads(path.read_text())
            return np.asarray(d["rho"], float), np.asarray(d["values"], float)
        arr = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read samples from {path}: {exc}") from None
    if arr.shape[1] < 2:
        raise ConfigError("sample CSV needs two columns: arclength, value")
    return arr[:, 0], arr[:, 1]


def cmd_norms(args) -> int:
    from . import sobolev
    from .errors import ConfigError

    cfg = _load(args)
    src = args.samples or cfg.norms.samples
    if not src:
        raise ConfigError("no sample file given (use --samples or [norms] samples)")
    rho, vals = read_samples(Path(src))
    n = cfg.norms
    f = sobolev.CurveFunction(rho - rho[0] if n.period is None else rho, vals, period=n.period)
    body = {"samples": str(src), "n": int(rho.size), "gagliardo": {}}
    for s in n.s:
        body["gagliardo"][str(s)] = {"norm": sobolev.gagliardo_norm(f, s),
                                     "seminorm": sobolev.gagliardo_norm(f, s, seminorm=True)}
    if n.tilde_half and n.period is None:
        th = sobolev.tilde_half_norm(f)
        body["tilde_half"] = {"norm": th.norm, "weighted": th.weighted, "diverges": th.diverges}
    write_json(_out_dir(args, cfg) / "norms.json", _header(cfg, "norms"), body)
    print(json.dumps(_jsonable(body)))
    return EXIT_OK


# ----------------------------------------------------------------------
# entry point
# ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cornerwaves", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="TOML or JSON run configuration")
        sp.add_argument("--out-dir", help="output directory (overrides [output] directory)")
        sp.add_argument("--threads", type=int, help="threads for the linear algebra backend")
        sp.add_argument("-v", "--verbose", action="store_true")
        return sp

    common(sub.add_parser("simulate", help="run the time stepper and write energy series"))
    sp = common(sub.add_parser("audit", help="commutator and dissipation audits"))
    sp.add_argument("--which", help="comma-separated audits, or 'none'")
    sp.add_argument("--corrupt-rhs", action="store_true", help=argparse.SUPPRESS)
    sp = common(sub.add_parser("benchmark", help="convergence benchmarks"))
    sp.add_argument("--which", help="comma-separated benchmarks, or 'none'")
    sp = common(sub.add_parser("norms", help="Sobolev norms of sampled curve data"))
    sp.add_argument("--samples", help="sample file (JSON or CSV)")
    return p


COMMANDS = {"simulate": cmd_simulate, "audit": cmd_audit, "benchmark": cmd_benchmark,
            "norms": cmd_norms}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _limit_threads(args.threads)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from .errors import (AngleGuardError, ConfigError, CornerWavesError, DataError,
                         ResolutionError)

    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AngleGuardError as exc:
        print(f"contact-angle guard: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (DataError, ResolutionError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CornerWavesError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
