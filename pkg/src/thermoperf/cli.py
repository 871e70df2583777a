"""Command-line entry point.

Every command writes its artifacts into an output directory together with a
``manifest.json`` recording the exact invocation. ``thermoperf replay
<manifest>`` reruns it. Exit codes: 0 ok, 1 runtime failure, 2 bad usage.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .calib import FitConfig, fit_material
from .empirical import empirical_matrix
from .errors import DomainError, FitConvergenceError, ThermoperfError
from .heatsim import (
    ContactConditions,
    MaterialSample,
    SensorParams,
    effective_varied_noise,
    generate_trace,
    normalize_trace,
    read_trace_dir,
    surface_temperature,
    trace_seed,
    write_trace,
)
from .matdb import builtin_appendix_table, dumps_database, load_database
from .perfmodel import (
    PHI_DEFAULT,
    EffusivityGrid,
    F1Matrix,
    binary_map,
    build_node_graph,
    f1_matrix,
    f1_pair,
    matrix_match,
    min_distinguishable_difference,
    noncentrality_lambda,
    read_matrix,
    to_dot,
    write_matrix,
)

log = logging.getLogger("thermoperf")

OUT_ENV = "THERMOPERF_OUT"


class UsageError(Exception):
    """Bad flag values caught after parsing; mapped to exit code 2."""


# --- flag helpers ---------------------------------------------------------

def _positive(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _pos_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return v


def _pair(text):
    try:
        lo, hi = (float(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}") from None
    if not lo < hi:
        raise argparse.ArgumentTypeError(f"need LO < HI, got {text!r}")
    return lo, hi


def _add_sensor(p):
    g = p.add_argument_group("sensor")
    g.add_argument("--e-sens", type=_positive, default=892.0, help="sensor effusivity")
    g.add_argument("--alpha-sens", type=_positive, default=1.19e-9, help="sensor diffusivity, m^2/s")
    g.add_argument("--depth", type=float, default=8e-5, help="thermistor depth, m")
    g.add_argument("--rate", type=_positive, default=200.0, help="sample rate, Hz")


def _add_conditions(p, sigma=True):
    g = p.add_argument_group("conditions")
    g.add_argument("--tsens0", type=float, default=35.0, help="initial sensor temperature, degC")
    g.add_argument("--tamb", type=float, default=25.0, help="initial object (ambient) temperature, degC")
    g.add_argument("--duration", type=_positive, default=2.0, help="contact duration, s")
    if sigma:
        g.add_argument("--sigma", type=_positive, default=0.05, help="noise std, degC")


def _add_grid(p, intervals=500, stride=1):
    g = p.add_argument_group("grid")
    g.add_argument("--emin", type=float, default=0.0)
    g.add_argument("--emax", type=_positive, default=4.0e4)
    g.add_argument("--intervals", type=_pos_int, default=intervals)
    g.add_argument("--stride", type=_pos_int, default=stride, help="keep every k-th interval")


def _add_out(p):
    p.add_argument("--out", type=Path, default=None,
                   help=f"output directory (default ${OUT_ENV}/<command> or ./thermoperf_out/<command>)")


def _sensor(a, sigma=None) -> SensorParams:
    kw = dict(e_sens=a.e_sens, alpha_sens=a.alpha_sens, thermistor_depth=a.depth, sample_rate=a.rate)
    if sigma is not None:
        kw["noise_sigma"] = sigma
    return SensorParams(**kw)


def _conditions(a) -> ContactConditions:
    return ContactConditions(t_sens0=a.tsens0, t_obj0=a.tamb, t_contact=a.duration)


def _grid(a) -> EffusivityGrid:
    return EffusivityGrid(a.emin, a.emax, a.intervals, a.stride)


def _out_dir(a) -> Path:
    if a.out is not None:
        return a.out
    base = Path(os.environ.get(OUT_ENV, "thermoperf_out"))
    return base / a.command


def _write_manifest(out: Path, a, argv, extra=None) -> Path:
    params = {k: (str(v) if isinstance(v, Path) else v)
              for k, v in vars(a).items() if k not in ("func", "command")}
    manifest = {
        "command": a.command,
        "argv": list(argv) + ["--out", str(out.resolve())],
        "params": params,
        "seed": getattr(a, "seed", None),
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    if extra:
        manifest.update(extra)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def _dump(obj, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2) + "\n")


def _load_db(spec):
    return builtin_appendix_table() if spec == "builtin" else load_database(spec)


# --- commands ---------------------------------------------------------------

def cmd_simulate(a, argv):
    if (a.effusivity is None) == (a.material is None):
        raise UsageError("give exactly one of --effusivity or --material")
    if a.material is not None:
        rec = _load_db(a.db)[a.material]
        e, name = rec.representative, rec.name
    else:
        e, name = a.effusivity, None
    sensor = _sensor(a, a.sigma)
    cond = _conditions(a)
    out = _out_dir(a)
    out.mkdir(parents=True, exist_ok=True)
    for k in range(a.trials):
        tr = generate_trace(sensor, MaterialSample(e), cond, trace_seed(a.seed, k),
                            name=name, t_offset=a.offset)
        if a.normalize:
            tr = normalize_trace(tr, sensor)
        write_trace(tr, out / f"trace_{k:03d}")
    _write_manifest(out, a, argv)
    print(f"wrote {a.trials} traces to {out}")


def cmd_predict(a, argv):
    sensor = _sensor(a)
    cond = _conditions(a)
    sigma = a.sigma
    if a.tsens0_range is not None:
        lo, hi = a.tsens0_range
        # normalized traces: unit temperature gap, noise averaged over the band
        sigma = effective_varied_noise(a.sigma, lo, hi, a.tamb)
        cond = ContactConditions(t_sens0=1.0, t_obj0=0.0, t_contact=a.duration)
    result = {
        "f1": f1_pair(sensor, a.e1, a.e2, cond, sigma),
        "lambda": noncentrality_lambda(sensor, a.e1, a.e2, cond, sigma),
        "t_surf1": surface_temperature(sensor, MaterialSample(a.e1), cond),
        "t_surf2": surface_temperature(sensor, MaterialSample(a.e2), cond),
        "n": sensor.n_samples(cond.t_contact),
        "sigma": sigma,
    }
    print(json.dumps(result))
    if a.out is not None:
        _dump(result, a.out / "prediction.json")
        _write_manifest(a.out, a, argv)


def cmd_matrix(a, argv):
    sensor = _sensor(a)
    grid = _grid(a)
    m = f1_matrix(sensor, grid, _conditions(a), a.sigma, workers=a.workers)
    bm = binary_map(m, a.phi)
    out = _out_dir(a)
    write_matrix(m, out / "f1_matrix")
    summary = {"indistinguishable_percent": 100.0 * bm.indistinguishable_fraction()}
    write_matrix(bm, out / "binary_map", extra=summary)
    _write_manifest(out, a, argv)
    print(json.dumps(summary))


def cmd_delta(a, argv):
    sensor = _sensor(a)
    cond = _conditions(a)
    if a.e:
        es = a.e
    else:
        es = list(np.linspace(a.emax / a.points, a.emax, a.points))
    out = _out_dir(a)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "delta.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["e", "delta", "direction"])
        for e in es:
            md = min_distinguishable_difference(sensor, float(e), cond, a.sigma, a.phi, e_max=a.emax)
            w.writerow([repr(float(e)), md.csv_field(), md.direction or ""])
    _write_manifest(out, a, argv)
    print(f"wrote {len(es)} points to {out / 'delta.csv'}")


def cmd_graph(a, argv):
    db = _load_db(a.db)
    if a.matrix is not None:
        m = read_matrix(a.matrix)
        if not isinstance(m, F1Matrix):
            raise UsageError("--matrix must point at an F1 matrix, not a binary map")
    else:
        m = f1_matrix(_sensor(a), _grid(a), _conditions(a), a.sigma, workers=a.workers)
    g = build_node_graph(db, m, a.phi)
    out = _out_dir(a)
    out.mkdir(parents=True, exist_ok=True)
    (out / "graph.dot").write_text(to_dot(g))
    summary = {
        "n_materials": len(g.nodes),
        "n_pairs": g.n_pairs,
        "n_edges": len(g.edges),
        "indistinguishable_percent": 100.0 * g.indistinguishable_fraction(),
    }
    _dump(summary, out / "graph_summary.json")
    _write_manifest(out, a, argv)
    print(json.dumps(summary))


def cmd_compare(a, argv):
    if a.model is not None:
        model = read_matrix(a.model)
        if not isinstance(model, F1Matrix):
            raise UsageError("--model must point at an F1 matrix")
        sensor, cond, sigma, grid = model.sensor, model.cond, model.sigma, model.grid
    else:
        sensor, cond, sigma, grid = _sensor(a), _conditions(a), a.sigma, _grid(a)
        model = f1_matrix(sensor, grid, cond, sigma)
    emp = empirical_matrix(sensor, grid, cond, sigma, a.trials, a.seed,
                           folds=a.folds, C=a.C, epochs=a.epochs)
    model_map, emp_map = binary_map(model, a.phi), binary_map(emp, a.phi)
    out = _out_dir(a)
    write_matrix(emp, out / "empirical_matrix")
    write_matrix(emp_map, out / "empirical_map")
    diag = np.diag(emp.scores)
    report = {
        "match_percent": matrix_match(model_map, emp_map),
        "cells": len(grid),
        "trials_per_interval": a.trials,
        "model_indistinguishable_percent": 100.0 * model_map.indistinguishable_fraction(),
        "empirical_indistinguishable_percent": 100.0 * emp_map.indistinguishable_fraction(),
        "empirical_diagonal_mean": float(diag.mean()),
        "phi": a.phi,
    }
    _dump(report, out / "match_report.json")
    _write_manifest(out, a, argv)
    print(json.dumps(report))


def cmd_fit(a, argv):
    if not a.traces.is_dir():
        raise FileNotFoundError(f"trace directory {a.traces} does not exist")
    traces = read_trace_dir(a.traces)
    if not traces:
        raise UsageError(f"no traces found in {a.traces}")
    cfg = FitConfig(e_bounds=a.bounds, offset_bounds=a.offset_bounds,
                    fit_sensor_params=a.fit_sensor)
    try:
        result = fit_material(traces, _sensor(a), cfg)
    except FitConvergenceError as exc:
        result = exc.best
        log.warning("%s", exc)
    out = _out_dir(a)
    payload = result.to_dict()
    payload["n_traces"] = len(traces)
    _dump(payload, out / "fit_result.json")
    _write_manifest(out, a, argv)
    print(json.dumps(payload))


def cmd_db(a, argv):
    if a.action == "export":
        text = dumps_database(builtin_appendix_table())
        if a.out is None:
            sys.stdout.write(text)
        else:
            a.out.mkdir(parents=True, exist_ok=True)
            (a.out / "materials.csv").write_text(text)
            _write_manifest(a.out, a, argv)
    else:
        db = _load_db(a.path)
        for w in db.warnings:
            print(f"warning: {w}", file=sys.stderr)
        print(f"{len(db)} records ok")


def cmd_replay(a, argv):
    manifest = json.loads(Path(a.manifest).read_text())
    if manifest.get("version") != __version__:
        log.warning("manifest was written by version %s, running %s",
                    manifest.get("version"), __version__)
    args = list(manifest["argv"])
    if a.out is not None:
        args += ["--out", str(a.out)]
    code = main(args)
    if code:
        raise RuntimeError(f"replayed command exited with {code}")


# --- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="thermoperf", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate noisy contact traces")
    s.add_argument("--effusivity", type=_positive)
    s.add_argument("--material", help="material name from --db")
    s.add_argument("--db", default="builtin", help="'builtin' or a CSV path")
    s.add_argument("--trials", type=_pos_int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--offset", type=float, default=0.0, help="contact-time offset injected into the model clock, s")
    s.add_argument("--normalize", action="store_true", help="write normalized traces")
    _add_sensor(s)
    _add_conditions(s)
    _add_out(s)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("predict", help="closed-form F1 for one material pair (JSON on stdout)")
    s.add_argument("--e1", type=_positive, required=True)
    s.add_argument("--e2", type=_positive, required=True)
    s.add_argument("--tsens0-range", type=_pair, default=None,
                   help="LO,HI: varied initial sensor temperature with normalized traces")
    _add_sensor(s)
    _add_conditions(s)
    _add_out(s)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("matrix", help="model F1 matrix and binary map over an effusivity grid")
    s.add_argument("--phi", type=float, default=PHI_DEFAULT)
    s.add_argument("--workers", type=int, default=None)
    _add_grid(s)
    _add_sensor(s)
    _add_conditions(s)
    _add_out(s)
    s.set_defaults(func=cmd_matrix)

    s = sub.add_parser("delta", help="minimum distinguishable difference curve")
    s.add_argument("--e", type=_positive, nargs="+", default=None, help="effusivities to evaluate")
    s.add_argument("--points", type=_pos_int, default=100, help="evenly spaced points in (0, emax]")
    s.add_argument("--emax", type=_positive, default=4.0e4)
    s.add_argument("--phi", type=float, default=PHI_DEFAULT)
    _add_sensor(s)
    _add_conditions(s)
    _add_out(s)
    s.set_defaults(func=cmd_delta)

    s = sub.add_parser("graph", help="material node graph in DOT format")
    s.add_argument("--db", default="builtin", help="'builtin' or a CSV path")
    s.add_argument("--matrix", type=Path, default=None, help="precomputed F1 matrix JSON")
    s.add_argument("--phi", type=float, default=PHI_DEFAULT)
    s.add_argument("--workers", type=int, default=None)
    _add_grid(s)
    _add_sensor(s)
    _add_conditions(s)
    _add_out(s)
    s.set_defaults(func=cmd_graph)

    s = sub.add_parser("compare", help="empirical classifier matrix vs. the model map")
    s.add_argument("--model", type=Path, default=None, help="model F1 matrix JSON (sets grid and conditions)")
    s.add_argument("--trials", type=_pos_int, default=50, help="traces per interval")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--folds", type=_pos_int, default=3)
    s.add_argument("--C", type=_positive, default=1.0)
    s.add_argument("--epochs", type=_pos_int, default=500)
    s.add_argument("--phi", type=float, default=PHI_DEFAULT)
    _add_grid(s, intervals=500, stride=10)
    _add_sensor(s)
    _add_conditions(s)
    _add_out(s)
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("fit", help="identify effusivity and time offset from a trace directory")
    s.add_argument("--traces", type=Path, required=True)
    s.add_argument("--bounds", type=_pair, default=(30.5, 40000.0))
    s.add_argument("--offset-bounds", type=_pair, default=(-1.0, 1.0))
    s.add_argument("--fit-sensor", action="store_true", help="also fit e_sens and alpha_sens")
    _add_sensor(s)
    _add_out(s)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("db", help="material database utilities")
    s.add_argument("action", choices=["export", "validate"])
    s.add_argument("path", nargs="?", default="builtin", help="CSV to validate")
    _add_out(s)
    s.set_defaults(func=cmd_db)

    s = sub.add_parser("replay", help="rerun the command recorded in a manifest")
    s.add_argument("manifest", type=Path)
    _add_out(s)
    s.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    # manifests record the argv without any --out; _write_manifest appends the resolved one
    recorded = _strip_out(argv)
    try:
        a.func(a, recorded)
    except (UsageError, DomainError) as exc:
        parser.print_usage(sys.stderr)
        print(f"thermoperf: error: {exc}", file=sys.stderr)
        return 2
    except KeyError as exc:
        print(f"thermoperf: error: unknown name {exc}", file=sys.stderr)
        return 2
    except (OSError, ThermoperfError, RuntimeError, ValueError) as exc:
        print(f"thermoperf: error: {exc}", file=sys.stderr)
        return 1
    return 0


def _strip_out(argv):
    out, skip = [], False
    for tok in argv:
        if skip:
            skip = False
            continue
        if tok == "--out":
            skip = True
            continue
        if tok.startswith("--out="):
            continue
        out.append(tok)
    return out


if __name__ == "__main__":
    sys.exit(main())
