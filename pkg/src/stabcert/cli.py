"""Command-line front end.

Subcommands expose the full pipeline: ``analyze`` (composite certificate +
embedding verdict + basin corroboration), ``regions`` (region grid and
implicit-curve CSV export), ``catalogue``, ``expand``, ``envelope``,
``embed`` and ``simulate``.  Reports are JSON on stdout (CSV for grids),
deterministic for a fixed seed; errors go to stderr as
``{"error": ..., "hint": ...}`` with exit code 1, and Inconclusive verdicts
exit with code 2.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, _kernels, embedding, envelope2d, mapdef, onedim, orbit, spectral
from .errors import StabcertError
from .expr import node_count

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INCONCLUSIVE = 2


class _CliError(Exception):
    def __init__(self, message: str, hint: str = ""):
        super().__init__(message)
        self.hint = hint


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with 2; we reserve 2
        raise _CliError(message, hint="see --help for usage")


def _emit_error(message: str, hint: str = "") -> int:
    sys.stderr.write(json.dumps({"error": message, "hint": hint}) + "\n")
    return EXIT_ERROR


def _write_report(report: dict, out: str | None) -> None:
    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    sys.stdout.write(text)
    if out:
        Path(out).write_text(text)


def _parse_params(items) -> dict:
    params = {}
    for item in items or []:
        if "=" not in item:
            raise _CliError(f"bad --param {item!r}", hint="use --param name=value")
        name, _, value = item.partition("=")
        try:
            params[name.strip()] = float(value)
        except ValueError:
            raise _CliError(f"parameter {name!r} has non-numeric value {value!r}",
                            hint="use --param name=value with a number") from None
    return params


def _load_map(args) -> mapdef.MapSpec:
    if bool(args.map) == bool(args.spec_file):
        raise _CliError("exactly one map source is required",
                        hint="pass --map NAME or --spec-file PATH")
    params = _parse_params(args.param)
    if args.map:
        return mapdef.get_map(args.map, params)
    data = json.loads(Path(args.spec_file).read_text())
    if params:
        data.setdefault("params", {}).update(params)
    return mapdef.load_mapspec(data)


def _prepared(args) -> mapdef.NormalizedMap:
    nm = mapdef.prepare(_load_map(args))
    j = getattr(args, "expansion", 0) or 0
    if j:
        nm = spectral.expand(nm, j)
    return nm


def _base_meta(args, nm: mapdef.NormalizedMap) -> dict:
    return {
        "map": nm.base.name,
        "params": {k: float(v) for k, v in sorted(nm.base.params.items())},
        "fixed_point": nm.xbar,
        "k": nm.k,
        "expansion": nm.lag,
        "backend": _kernels.BACKEND,
        "version": __version__,
    }


def _add_map_source(p: argparse.ArgumentParser) -> None:
    p.add_argument("--map", help="catalogue map name")
    p.add_argument("--spec-file", help="JSON map-spec file")
    p.add_argument("--param", action="append", metavar="NAME=VALUE",
                   help="parameter override (repeatable)")


def _add_common(p: argparse.ArgumentParser, expansion: bool = True) -> None:
    _add_map_source(p)
    if expansion:
        p.add_argument("--expansion", type=int, default=0, metavar="J",
                       help="analyse the J-th expansion (default 0)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="also write the JSON report to this path")


def build_parser() -> _Parser:
    parser = _Parser(prog="stabcert",
                     description="stability certificates for scalar "
                                 "difference equations")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="full certificate pipeline")
    _add_common(p, expansion=False)
    p.add_argument("--mmax", type=int, default=64)
    p.add_argument("--grid", type=int, default=512)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--basin-n", type=int, default=200)
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("regions", help="region grid and implicit curves as CSV")
    _add_common(p)
    p.add_argument("--grid", "--n", dest="grid", type=int, default=256)
    p.add_argument("--out-dir", default=".", help="directory for CSV files")

    p = sub.add_parser("catalogue", help="list bundled example maps")
    p.add_argument("--out", help="also write the JSON report to this path")

    p = sub.add_parser("expand", help="expansion gradient and norm")
    _add_common(p)

    p = sub.add_parser("envelope", help="check a candidate enveloping map")
    _add_common(p)
    p.add_argument("--g", required=True, metavar="EXPR",
                   help="candidate map in u1 (map parameters are in scope)")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--grid", type=int, default=512)

    p = sub.add_parser("embed", help="monotone-embedding verdict")
    _add_common(p)
    p.add_argument("--grid", type=int, default=256)
    p.add_argument("--boxes", type=int, default=100)
    p.add_argument("--omega-csv", help="write the Omega grid (x,y,in_omega) here")

    p = sub.add_parser("simulate", help="iterate one orbit")
    _add_common(p)
    p.add_argument("--init", required=True,
                   help="comma-separated initial history, newest first")
    p.add_argument("--steps", type=int, default=100_000)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--traj", help="write the trajectory CSV to this path")
    return parser


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_analyze(args) -> int:
    nm = _prepared(args)
    verdict = envelope2d.gas_certificate(
        nm, m_max=args.mmax, grid_n=args.grid, n_samples=args.samples,
        seed=args.seed,
    )
    if nm.k == 2:
        emb = embedding.embedding_gas_verdict(nm).to_dict()
    else:
        emb = {"certified": False,
               "failing_clause": "embedding verdict implemented for k = 2"}
    basin = orbit.basin_sample(nm, n_points=args.basin_n, seed=args.seed,
                               threads=args.threads)
    report = {
        "command": "analyze",
        **_base_meta(args, nm),
        "seed": args.seed,
        "verdict": verdict.level,
        "enveloping": verdict.to_dict(),
        "embedding": emb,
        "basin": basin.to_dict(),
    }
    _write_report(report, args.out)
    return EXIT_INCONCLUSIVE if verdict.level == "Inconclusive" else EXIT_OK


def _trace_curves(fj, n):
    """Point lists of the curves y = F(x, y) and x = F(x, y), root-tracked
    per grid column / row."""
    lo, hi = envelope2d.envelope_window(fj)
    axis = np.linspace(lo, hi, n)
    curve_y = []       # solve F(x, y) - y = 0 in y for each x
    curve_x = []       # solve F(x, y) - x = 0 in x for each y
    from .numerics import bisect_on

    X, Y = np.meshgrid(axis, axis, indexing="ij")
    vals = fj.value_xy(X, Y)
    res_y = vals - Y
    res_x = vals - X
    for j, fixed in enumerate(axis):
        col = res_y[j, :]
        cells = np.where(col[:-1] * col[1:] < 0)[0]
        if len(cells):
            roots = bisect_on(
                lambda t: fj.values(np.column_stack([np.full(len(t), fixed), t])) - t,
                axis[cells], axis[cells + 1], iterations=60)
            curve_y.extend((float(fixed), float(r)) for r in roots)
        row = res_x[:, j]
        cells = np.where(row[:-1] * row[1:] < 0)[0]
        if len(cells):
            roots = bisect_on(
                lambda t: fj.values(np.column_stack([t, np.full(len(t), fixed)])) - t,
                axis[cells], axis[cells + 1], iterations=60)
            curve_x.extend((float(r), float(fixed)) for r in roots)
    return curve_y, curve_x


def cmd_regions(args) -> int:
    nm = _prepared(args)
    if nm.k != 2:
        raise _CliError(f"regions need k = 2, got k = {nm.k}")
    grid = envelope2d.region_grid(nm, n=args.grid)
    curve_y, curve_x = _trace_curves(nm, args.grid)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    prefix = nm.base.name + (f"-exp{nm.lag}" if nm.lag else "")
    paths = {
        "regions": out_dir / f"{prefix}-regions.csv",
        "curve_y_eq_f": out_dir / f"{prefix}-curve-y.csv",
        "curve_x_eq_f": out_dir / f"{prefix}-curve-x.csv",
    }
    with open(paths["regions"], "w", newline="") as fh:
        grid.write_csv(fh)
    for key, points in (("curve_y_eq_f", curve_y), ("curve_x_eq_f", curve_x)):
        with open(paths[key], "w", newline="") as fh:
            fh.write("x,y\r\n")
            for x, y in points:
                fh.write(f"{x!r},{y!r}\r\n")
    report = {
        "command": "regions",
        **_base_meta(args, nm),
        "grid": args.grid,
        "counts": grid.counts(),
        "files": {k: str(v) for k, v in paths.items()},
        "curve_points": {"y_eq_f": len(curve_y), "x_eq_f": len(curve_x)},
    }
    _write_report(report, args.out)
    return EXIT_OK


def cmd_catalogue(args) -> int:
    entries = []
    for m in mapdef.catalogue():
        entries.append({
            "name": m.name,
            "k": m.k,
            "expr": str(m.f),
            "params": {k: float(v) for k, v in sorted(m.params.items())},
            "domain": [m.domain[0],
                       None if math.isinf(m.domain[1]) else m.domain[1]],
            "fixed_point": m.fixed_point,
            "constraints": {
                k: [None if math.isinf(v[0]) else v[0],
                    None if math.isinf(v[1]) else v[1]]
                for k, v in sorted(m.constraints.items())
            },
            "notes": m.notes,
        })
    report = {"command": "catalogue", "version": __version__, "maps": entries}
    _write_report(report, args.out)
    return EXIT_OK


def cmd_expand(args) -> int:
    j = args.expansion
    base = mapdef.prepare(_load_map(args))
    fj = spectral.expand(base, j)
    grad = spectral.gradient(fj)
    text = str(fj.f)
    report = {
        "command": "expand",
        **_base_meta(args, fj),
        "coefficients": [float(v) for v in grad.a],
        "one_norm": grad.one_norm,
        "expression": text if len(text) <= 4000 else None,
        "expression_nodes": node_count(fj.f.root),
    }
    _write_report(report, args.out)
    return EXIT_OK


def cmd_envelope(args) -> int:
    nm = _prepared(args)
    g_expr = mapdef.parse(args.g, 1, tuple(nm.params))
    g = onedim.expr_map(g_expr, envelope2d.envelope_window(nm), nm.params,
                        source="user")
    definition = envelope2d.check_definition_envelope(
        nm, g, n_samples=args.samples, seed=args.seed)
    region = None
    region_error = None
    try:
        region = envelope2d.check_envelope_via_R(nm, g, grid_n=args.grid)
    except StabcertError as exc:
        region_error = str(exc)
    report = {
        "command": "envelope",
        **_base_meta(args, nm),
        "seed": args.seed,
        "candidate": args.g,
        "definition_check": definition.to_dict(),
        "region_check": region.to_dict() if region else None,
        "region_check_error": region_error,
        "passed": definition.passed,
    }
    _write_report(report, args.out)
    return EXIT_OK


def cmd_embed(args) -> int:
    nm = _prepared(args)
    if nm.k != 2:
        raise _CliError(f"embedding verdict needs k = 2, got k = {nm.k}")
    verdict = embedding.embedding_gas_verdict(
        nm, grid_n=args.grid, n_boxes=args.boxes, seed=args.seed)
    omega_file = None
    if args.omega_csv:
        profile = verdict.profile
        if profile.is_monotone:
            omega = embedding.embedding_region_omega(nm, profile,
                                                     grid_n=args.grid)
            with open(args.omega_csv, "w", newline="") as fh:
                omega.write_csv(fh)
            omega_file = args.omega_csv
    report = {
        "command": "embed",
        **_base_meta(args, nm),
        "verdict": "GAS-embedding-certified" if verdict.certified else "Inconclusive",
        "detail": verdict.to_dict(),
        "omega_file": omega_file,
    }
    _write_report(report, args.out)
    return EXIT_OK if verdict.certified else EXIT_INCONCLUSIVE


def cmd_simulate(args) -> int:
    nm = _prepared(args)
    try:
        init = [float(v) for v in args.init.split(",")]
    except ValueError:
        raise _CliError(f"bad --init {args.init!r}",
                        hint="comma-separated numbers, e.g. 0.2,0.4") from None
    result = orbit.iterate(nm, init, n_max=args.steps, tol=args.tol)
    if args.traj:
        with open(args.traj, "w", newline="") as fh:
            result.write_csv(fh)
    report = {
        "command": "simulate",
        **_base_meta(args, nm),
        "init": init,
        "result": result.to_dict(),
        "trajectory_file": args.traj,
    }
    _write_report(report, args.out)
    return EXIT_OK


_COMMANDS = {
    "analyze": cmd_analyze,
    "regions": cmd_regions,
    "catalogue": cmd_catalogue,
    "expand": cmd_expand,
    "envelope": cmd_envelope,
    "embed": cmd_embed,
    "simulate": cmd_simulate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _CliError as exc:
        return _emit_error(str(exc), exc.hint)
    except StabcertError as exc:
        return _emit_error(str(exc), "check the map definition and parameters")
    except FileNotFoundError as exc:
        return _emit_error(str(exc), "check the file path")
    except json.JSONDecodeError as exc:
        return _emit_error(f"invalid JSON: {exc}", "check the spec file")
    except ValueError as exc:
        return _emit_error(str(exc), "check the command arguments")


if __name__ == "__main__":
    sys.exit(main())
