"""Command-line front end.

Exit codes: 0 on success, 2 for a missing file or invalid arguments, 3 for
schema, parse and numerical-domain errors raised while processing data.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .cc import QuantilePair, cc_test_equal, cc_test_zero
from .cpc import ConditioningDesign, cpc_test_equal, cpc_test_zero
from .dataio import ih_outlier_report, load_csv, read_matrix
from .errors import CopscreenError
from .evaluation import prediction_error
from .screening import CASE_MODES, ScreeningConfig, baseline_screeners, screen
from .simbench import EXAMPLES, ERRORS, TEST_EXAMPLES, SimulationSpec, run_screening_study, run_test_study

SCHEMA_VERSION = 1
THREADS_ENV = "COPULA_SCREEN_THREADS"
SCREEN_METHODS = {
    "cc": "marginal_cc",
    "cpc-case1": "cpc_case1",
    "cpc-case2": "cpc_case2",
    "cpc-case3": "cpc_case3",
    "pearson": "pearson_sis",
    "kendall": "kendall_sis",
}
EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 2, 3


class UsageError(Exception):
    """Invalid command-line input detected after parsing."""


def resolve_jobs(flag: Optional[int]) -> int:
    """``--jobs`` if given, else ``$COPULA_SCREEN_THREADS``, else the core count."""
    if flag is not None:
        jobs = flag
    elif os.environ.get(THREADS_ENV, "").strip():
        try:
            jobs = int(os.environ[THREADS_ENV])
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer") from None
    else:
        jobs = os.cpu_count() or 1
    if jobs < 1:
        raise UsageError("parallelism must be >= 1")
    return jobs


def _split(text: Optional[str]) -> List[str]:
    return [s.strip() for s in text.split(",") if s.strip()] if text else []


def _pair(args) -> QuantilePair:
    if getattr(args, "pair", None):
        return QuantilePair.parse(args.pair)
    return QuantilePair(args.tau, args.iota)


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _csv_cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return " ".join(_csv_cell(x) for x in v)
    return str(v)


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return _jsonable(float(v))
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    return v


def render(fmt: str, command: str, config: dict, columns: Sequence[str], rows: Sequence[dict],
           extra: Optional[Dict[str, object]] = None) -> str:
    """Serialise one report. Every format carries the resolved config."""
    if fmt == "json":
        doc = {"schema": SCHEMA_VERSION, "command": command, "version": __version__,
               "config": config, "rows": [{c: r.get(c) for c in columns} for r in rows]}
        doc.update(extra or {})
        return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"
    head = f"# copscreen {command} schema={SCHEMA_VERSION} config={json.dumps(_jsonable(config), sort_keys=True)}\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_csv_cell(r.get(c, "")) for c in columns])
        return head + buf.getvalue()
    cells = [[_fmt(r.get(c, "")) if not isinstance(r.get(c), (list, tuple))
              else " ".join(_fmt(x) for x in r[c]) for c in columns] for r in rows]
    widths = [max([len(c)] + [len(row[k]) for row in cells]) for k, c in enumerate(columns)]
    lines = ["  ".join(c.rjust(wd) for c, wd in zip(columns, widths))]
    lines += ["  ".join(x.rjust(wd) for x, wd in zip(row, widths)) for row in cells]
    out = head + "\n".join(lines) + "\n"
    for key, val in (extra or {}).items():
        if isinstance(val, list) and val and isinstance(val[0], dict):
            out += f"\n{key}:\n"
            for item in val:
                out += "  " + ", ".join(f"{k}={_fmt(v)}" for k, v in item.items()) + "\n"
        else:
            out += f"{key}: {_fmt(val)}\n"
    return out


def _write(text: str, path: Optional[str]):
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load(args):
    if not os.path.isfile(args.data):
        raise FileNotFoundError(args.data)
    return load_csv(args.data, args.response, _split(getattr(args, "conditioning", None)))


def _screen_config(args, pair) -> ScreeningConfig:
    nu, d_bar = getattr(args, "nu", None), getattr(args, "fdr", None)
    mode = "fdr" if d_bar is not None else "absolute" if nu is not None else "top_dn"
    case = SCREEN_METHODS[args.method]
    if case not in CASE_MODES:
        case = "marginal_cc"
    return ScreeningConfig(pair=pair, d_n=args.top, threshold_mode=mode, nu=nu, d_bar=d_bar,
                           case_mode=case, ell=args.ell)


def _run_screen(args, ds, pair):
    cfg = _screen_config(args, pair)
    case = SCREEN_METHODS[args.method]
    if case in ("pearson_sis", "kendall_sis"):
        return cfg, baseline_screeners(ds.y, ds.X, case, args.top)
    if case in ("cpc_case2", "cpc_case3") and ds.W is None:
        raise UsageError(f"--method {args.method} needs --conditioning")
    if case in ("marginal_cc", "cpc_case1") and ds.W is not None:
        raise UsageError(f"--method {args.method} takes no --conditioning columns")
    return cfg, screen(ds.y, ds.X, ds.W, cfg)


def _marginal_test(y, x, pair):
    try:
        t = cc_test_zero(y, x, pair)
        return t.z_stat, t.p_value
    except CopscreenError:
        return math.nan, math.nan


def cmd_screen(args) -> int:
    pair = _pair(args)
    ds = _load(args)
    cfg, res = _run_screen(args, ds, pair)
    names = ds.column_names
    config = {"data": args.data, "response": args.response, "method": args.method,
              "conditioning": _split(args.conditioning), "tau": pair.tau, "iota": pair.iota,
              "top": args.top, "threshold_mode": cfg.threshold_mode, "nu": args.nu,
              "d_bar": args.fdr, "ell": args.ell, "seed": args.seed, "n": ds.n, "p": ds.p,
              "dropped_rows": ds.dropped_rows}

    def rows_for(order):
        out = []
        for pos, j in enumerate(order, start=1):
            z, pv = _marginal_test(ds.y, ds.X[:, j], pair)
            out.append({"rank": pos, "index": int(j), "column": names[j],
                        "utility": float(res.utilities[j]), "z_stat": float(z), "p_value": float(pv)})
        return out

    cols = ["rank", "index", "column", "utility", "z_stat", "p_value"]
    log = [{"iteration": s.iteration, "chosen": names[s.chosen_index],
            "conditional_set": [names[k] for k in s.conditional_set],
            "utility": float(s.utility), "ridge_used": bool(s.ridge_used)} for s in res.per_step_log]
    extra = {"selected": [names[j] for j in res.selected], "threshold": float(res.threshold_used)}
    if log:
        extra["per_step_log"] = log
    chosen = set(int(j) for j in res.selected)
    order = [int(j) for j in res.ranking if int(j) in chosen]
    _write(render(args.format, "screen", config, cols, rows_for(order), extra), args.output)
    if args.ranking_out:
        full = [{"rank": pos, "index": int(j), "column": names[j], "utility": float(res.utilities[j])}
                for pos, j in enumerate(res.ranking, start=1)]
        _write(render("csv", "screen", config, cols[:4], full), args.ranking_out)
    return EXIT_OK


def _column_index(ds, name):
    try:
        return ds.column_names.index(name)
    except ValueError:
        raise CopscreenError(f"column {name!r} is not a covariate in {ds.column_names[:5]}...") from None


def cmd_test(args) -> int:
    pair = _pair(args)
    ds = _load(args)
    design = None if ds.W is None else ConditioningDesign.build(ds.n, W=ds.W)
    config = {"data": args.data, "response": args.response, "tau": pair.tau, "iota": pair.iota,
              "conditioning": _split(args.conditioning), "seed": args.seed, "n": ds.n}
    rows = []
    if args.equal:
        a, b = (_column_index(ds, c) for c in args.equal)
        if design is None:
            t = cc_test_equal(ds.y, ds.X[:, a], ds.X[:, b], pair)
        else:
            t = cpc_test_equal(ds.y, ds.X[:, a], ds.X[:, b], design, pair)
        rows.append({"test": "equal", "columns": f"{args.equal[0]}-{args.equal[1]}",
                     "estimate": t.delta, "variance": t.variance, "z_stat": t.z_stat,
                     "p_value": t.p_value})
    targets = _split(args.columns)
    if not targets and not args.equal:
        targets = list(ds.column_names)
    for c in targets:
        j = _column_index(ds, c)
        if design is None:
            t = cc_test_zero(ds.y, ds.X[:, j], pair)
        else:
            t = cpc_test_zero(ds.y, ds.X[:, j], design, pair)
        rows.append({"test": "zero", "columns": c, "estimate": t.value, "variance": t.variance,
                     "z_stat": t.z_stat, "p_value": t.p_value})
    cols = ["test", "columns", "estimate", "variance", "z_stat", "p_value"]
    _write(render(args.format, "test", config, cols, rows), args.output)
    return EXIT_OK


def cmd_simulate(args) -> int:
    pair = _pair(args)
    spec = SimulationSpec(args.example, args.n, args.p, args.rho, args.c0, args.error,
                          args.reps, args.seed)
    jobs = resolve_jobs(args.jobs)
    config = dict(spec.coordinates(), tau=pair.tau, iota=pair.iota)
    if spec.example in TEST_EXAMPLES:
        rep = run_test_study(spec, pair, args.level, jobs)
        config["level"] = args.level
        records = rep.records
        cols = ["rep", "delta", "z_stat", "p_value", "reject", "error"]
        summary = [{"example": spec.example, "rejection_rate": rep.rejection_rate,
                    "failed": rep.failed, "reps": spec.reps}]
        scols = ["example", "rejection_rate", "failed", "reps"]
    else:
        methods = list(args.methods)
        cfg = ScreeningConfig(pair=pair, d_n=args.dn, ell=args.ell)
        rep = run_screening_study(spec, cfg, methods, jobs)
        config.update(methods=methods, d_n=cfg.resolved_dn(spec.n, spec.p), ell=args.ell)
        records = rep.records
        cols = ["rep", "method", "ranks", "mms", "covered"]
        summary = [{"method": s.method, "mms_median": s.mms_median, "mms_rsd": s.mms_rsd,
                    "rank_medians": list(s.rank_medians), "coverage_P": s.coverage_P}
                   for s in rep.summaries.values()]
        scols = ["method", "mms_median", "mms_rsd", "rank_medians", "coverage_P"]
    _write(render(args.format, "simulate", config, scols, summary), args.output)
    if args.records:
        _write(render("csv", "simulate", config, cols, records), args.records)
    return EXIT_OK


def cmd_outliers(args) -> int:
    if not os.path.isfile(args.data):
        raise FileNotFoundError(args.data)
    header, M, dropped = read_matrix(args.data)
    wanted = _split(args.columns) or [h for h in header if h not in _split(args.exclude)]
    missing = [c for c in wanted if c not in header]
    if missing:
        raise CopscreenError(f"columns not found: {missing}")
    rows = []
    for c in wanted:
        rep = ih_outlier_report(M[:, header.index(c)], two_sided=not args.one_sided,
                                cutoff=args.cutoff)
        rows.append({"column": c, "n_outliers": int(rep.outlier_indices.size),
                     "max_abs_z": float(np.nanmax(np.abs(rep.z_scores))) if not rep.degenerate else math.nan,
                     "degenerate": int(rep.degenerate)})
    flagged = sum(1 for r in rows if r["n_outliers"] > 0)
    config = {"data": args.data, "cutoff": args.cutoff, "two_sided": not args.one_sided,
              "n": int(M.shape[0]), "dropped_rows": dropped}
    extra = {"columns_checked": len(rows), "columns_flagged": flagged,
             "flagged_fraction": flagged / len(rows) if rows else 0.0,
             "degenerate_columns": sum(r["degenerate"] for r in rows)}
    _write(render(args.format, "outliers", config, ["column", "n_outliers", "max_abs_z", "degenerate"],
                  rows, extra), args.output)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    ds = _load(args)
    chosen = _split(args.columns)
    config = {"data": args.data, "response": args.response, "partitions": args.partitions,
              "ratio": args.ratio, "seed": args.seed}
    if chosen:
        sel = [_column_index(ds, c) for c in chosen]
    else:
        if args.top is None:
            raise UsageError("evaluate needs --columns or --top")
        pair = _pair(args)
        _, res = _run_screen(args, ds, pair)
        sel = [int(j) for j in res.ranking[:args.top]]
        config.update(method=args.method, top=args.top, tau=pair.tau, iota=pair.iota)
    config["selected"] = [ds.column_names[j] for j in sel]
    rep = prediction_error(ds, sel, args.partitions, args.ratio, args.seed)
    rows = [{"k": rep.k, "PE1": rep.pe1_mean, "PE2": rep.pe2_mean, "partitions": rep.partitions,
             "ridge_events": len(rep.ridge_events)}]
    _write(render(args.format, "evaluate", config, ["k", "PE1", "PE2", "partitions", "ridge_events"],
                  rows), args.output)
    return EXIT_OK


def _add_common(p, data=True):
    if data:
        p.add_argument("--data", required=True, help="input CSV with a header row")
        p.add_argument("--response", required=True, help="response column name")
        p.add_argument("--conditioning", help="comma-separated conditioning columns (W)")
    p.add_argument("--format", choices=("table", "csv", "json"), default="table")
    p.add_argument("--output", help="write the report here instead of stdout")
    p.add_argument("--seed", type=int, default=0)


def _add_pair(p):
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--iota", type=float, default=0.5)
    p.add_argument("--pair", help="'tau,iota'; overrides --tau/--iota")


def _add_screen_opts(p, top_default=None):
    p.add_argument("--method", choices=sorted(SCREEN_METHODS), default="cc")
    p.add_argument("--top", type=int, default=top_default, help="d_n (default floor(n/log n))")
    p.add_argument("--ell", type=int, default=3, help="confounder set size for cpc-case1/3")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="copscreen", description="Copula-based correlation screening")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("screen", help="rank covariates by (conditional) copula correlation")
    _add_common(p)
    _add_pair(p)
    _add_screen_opts(p)
    p.add_argument("--nu", type=float, help="keep utilities >= nu")
    p.add_argument("--fdr", type=float, metavar="D_BAR", help="FDR threshold with d_bar false positives")
    p.add_argument("--ranking-out", help="write the full ranking as CSV")
    p.set_defaults(func=cmd_screen)

    p = sub.add_parser("test", help="Wald tests of zero or equal (partial) copula correlation")
    _add_common(p)
    _add_pair(p)
    p.add_argument("--equal", nargs=2, metavar=("X1", "X2"))
    p.add_argument("--columns", help="comma-separated columns for zero tests")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("simulate", help="Monte Carlo size/power or screening study")
    _add_common(p, data=False)
    _add_pair(p)
    p.add_argument("--example", choices=EXAMPLES, required=True)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--p", type=int, default=1000)
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--c0", type=float, default=0.0)
    p.add_argument("--error", choices=ERRORS, default="normal")
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--level", type=float, default=0.05)
    p.add_argument("--methods", nargs="+", default=["cc_sis"],
                   help="screening methods, each 'name' or 'name@tau,iota'")
    p.add_argument("--dn", type=int)
    p.add_argument("--ell", type=int, default=3)
    p.add_argument("--jobs", type=int, help=f"worker processes (default ${THREADS_ENV} or all cores)")
    p.add_argument("--records", help="write per-replication records as CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("outliers", help="IH modified z-score outlier summary per column")
    _add_common(p, data=False)
    p.add_argument("--data", required=True)
    p.add_argument("--columns")
    p.add_argument("--exclude")
    p.add_argument("--cutoff", type=float, default=3.5)
    p.add_argument("--one-sided", action="store_true")
    p.set_defaults(func=cmd_outliers)

    p = sub.add_parser("evaluate", help="prediction error of a screened model")
    _add_common(p)
    _add_pair(p)
    _add_screen_opts(p)
    p.add_argument("--columns", help="comma-separated covariates to use instead of screening")
    p.add_argument("--partitions", type=int, default=500)
    p.add_argument("--ratio", type=float, default=0.8)
    p.set_defaults(func=cmd_evaluate)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as err:
        print(f"copscreen: file not found: {err.filename or err}", file=sys.stderr)
        return EXIT_USAGE
    except UsageError as err:
        print(f"copscreen: {err}", file=sys.stderr)
        return EXIT_USAGE
    except CopscreenError as err:
        print(f"copscreen: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as err:
        print(f"copscreen: invalid argument: {err}", file=sys.stderr)
        return EXIT_USAGE


__all__ = ["main", "build_parser", "render", "resolve_jobs", "SCHEMA_VERSION"]
