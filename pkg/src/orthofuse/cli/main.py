"""``orthofuse`` command line.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure. Diagnostics go to standard error as one line.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys

import numpy as np

from .. import __version__
from ..errors import DataError, NumericalError, OrthofuseError
from ..pipeline import RNG_PILOT, fit_pipeline, parse_method, task_handles
from ..sim.montecarlo import run_monte_carlo
from ..weights import compute_weights, fit_pilot
from .config import ConfigError, RunConfig, config_hash, dump_config, load_config
from .io import FitReport, read_fit_report, read_task_csv, write_csv, write_fit_report
from .svg import emit_svg_diagnostics

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p, data=False):
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--model", choices=("plm", "ate", "did"))
    p.add_argument("--level", type=float, help="confidence level of the Wald intervals")
    p.add_argument("--refit", action="store_true", help="report pooled per-cluster refits")
    p.add_argument("--crossfit", type=int, metavar="R", help="R-fold cross-fitting instead of one split")
    if data:
        p.add_argument("--data", help="input CSV")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="orthofuse", description="Adaptive fused estimation of clustered task effects.")
    ap.add_argument("--version", action="version", version=f"orthofuse {__version__}")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", help="run a Monte Carlo study")
    _common(p)
    p.add_argument("--reps", type=int)

    p = sub.add_parser("fit", help="fit the estimator to a CSV of tasks")
    _common(p, data=True)
    p.add_argument("--method", default="adaptive", help="adaptive | personalized | uniform(lam)")

    p = sub.add_parser("weights", help="print the fusion penalty matrix")
    _common(p, data=True)
    p.add_argument("--pilots", help="comma-separated pilot estimates (skips pilot fitting)")

    p = sub.add_parser("report", help="render diagnostics from simulate or fit output")
    p.add_argument("--data", required=True, help="records.csv from simulate or fit_report.json from fit")
    p.add_argument("--out", help="output directory (default: alongside the input)")
    p.add_argument("--method", help="method to plot from records.csv (default: first listed)")
    p.add_argument("--bins", type=int, default=20)
    return ap


def _resolve(args, mode) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig(mode=mode)
    raw = cfg.to_dict()
    raw["mode"] = mode
    if getattr(args, "seed", None) is not None:
        raw["seed"] = args.seed
    if getattr(args, "model", None):
        raw["model"] = args.model
        raw["dgp"]["model"] = args.model
    if getattr(args, "level", None) is not None:
        raw["level"] = args.level
    if getattr(args, "refit", False):
        raw["solver"]["refit"] = True
    if getattr(args, "crossfit", None) is not None:
        raw["crossfit_R"] = args.crossfit
        raw["cross_fit"] = True
    if getattr(args, "reps", None) is not None:
        raw["reps"] = args.reps
    if getattr(args, "out", None):
        raw["output_dir"] = args.out
    if getattr(args, "data", None):
        raw["data"]["path"] = args.data
    return RunConfig.from_dict(raw)


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _versions():
    import numba
    import scipy

    return {"orthofuse": __version__, "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__}


def cmd_simulate(args) -> int:
    cfg = _resolve(args, "simulate")
    dgp = dataclasses.replace(cfg.dgp, seed=cfg.seed)
    res = run_monte_carlo(dgp, cfg.methods, cfg.reps, cfg.pipeline(), seed=cfg.seed)
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    write_csv(
        os.path.join(out, "records.csv"),
        ["rep", "method", "task", "cluster_true", "cluster_est", "theta_true", "theta_hat", "se", "ci_lo", "ci_hi"],
        [dataclasses.astuple(r) for r in res.records],
    )
    write_csv(
        os.path.join(out, "metrics.csv"),
        ["rep", "method", "rmse", "wrmse", "ari", "n_clusters", "coverage", "converged"],
        [dataclasses.astuple(r) for r in res.metrics],
    )
    summary = {"config_hash": config_hash(cfg), "seed": cfg.seed, "methods": res.summary()}
    _write_text(os.path.join(out, "summary.json"), json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _write_text(os.path.join(out, "config.json"), dump_config(cfg))
    for name in res.methods:
        s = res.summary()[name]
        if s.get("replications"):
            print(f"{name}: rmse={s['rmse_mean']:.4g} wrmse={s['wrmse_mean']:.4g} ari={s['ari_median']:.3f} coverage={s['coverage']:.3f}")
    if res.failures:
        print(f"{len(res.failures)} replication(s) failed; see summary.json", file=sys.stderr)
    return EXIT_OK


def _load_tasks(cfg: RunConfig):
    if not cfg.data.path:
        raise UsageError("no input CSV: pass --data or set data.path in the config")
    if not os.path.exists(cfg.data.path):
        raise DataError(f"input file {cfg.data.path!r} does not exist")
    return read_task_csv(cfg.data.path, cfg.data, cfg.model)


def cmd_fit(args) -> int:
    cfg = _resolve(args, "fit")
    method = parse_method(args.method)
    tasks = _load_tasks(cfg)
    result = fit_pipeline(tasks, cfg.pipeline(), method, seed=cfg.seed)
    meta = {"config_hash": config_hash(cfg), "seed": cfg.seed, "method": method.name, "model": cfg.model,
            "versions": _versions(), "converged": bool(result.solution.converged),
            "iterations": int(result.solution.iterations)}
    report = FitReport.from_result(result, tasks, meta)
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    write_fit_report(report, os.path.join(out, "fit_report.json"))
    write_csv(
        os.path.join(out, "estimates.csv"),
        ["task", "label", "n", "theta_hat", "cluster", "se"],
        [[t["task"], t["label"], t["n"], t["theta_hat"][0], t["cluster"], t["se"][0]] for t in report.tasks],
    )
    _write_inference_csv(report, os.path.join(out, "inference.csv"))
    write_csv(
        os.path.join(out, "penalties.csv"),
        ["j", "k", "lambda", "provenance"],
        [[p["j"], p["k"], p["lambda"], p["provenance"]] for p in report.penalties],
    )
    _write_text(os.path.join(out, "config.json"), dump_config(cfg))
    for c in report.clusters:
        labels = " ".join(report.tasks[j]["label"] for j in c["members"])
        print(f"cluster {c['cluster_id']}: {c['estimate'][0]:.4g} (se {c['se'][0]:.3g}) tasks {labels}")
    return EXIT_OK


def _write_inference_csv(report: FitReport, path):
    rows = []
    for c in report.clusters:
        members = " ".join(str(j) for j in c["members"])
        for r in range(len(c["estimate"])):
            rows.append([c["cluster_id"], members, r, c["estimate"][r], c["se"][r], c["ci_lo"][r], c["ci_hi"][r]])
    write_csv(path, ["cluster_id", "members", "component", "estimate", "se", "ci_lo", "ci_hi"], rows)


def cmd_weights(args) -> int:
    cfg = _resolve(args, "fit")
    if args.pilots:
        try:
            pilots = np.array([float(v) for v in args.pilots.split(",")])
        except ValueError:
            raise UsageError(f"--pilots must be comma-separated numbers, got {args.pilots!r}") from None
        labels = [str(j) for j in range(len(pilots))]
    else:
        tasks = _load_tasks(cfg)
        handles = task_handles(tasks, cfg.seed)
        pilots = np.array([fit_pilot(t, cfg.model, cfg.learner, h.fork(RNG_PILOT)) for t, h in zip(tasks, handles)])
        labels = [t.label for t in tasks]
    pen = compute_weights(pilots, cfg.fusion)
    rows = [[labels[j], labels[k], lam, prov] for j, k, lam, prov in pen.rows()]
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["task_a", "task_b", "lambda", "provenance"])
    for r in rows:
        w.writerow([r[0], r[1], repr(float(r[2])), r[3]])
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_csv(os.path.join(args.out, "penalties.csv"), ["task_a", "task_b", "lambda", "provenance"], rows)
        write_csv(os.path.join(args.out, "pilots.csv"), ["task", "pilot"],
                  [[labels[j], *np.atleast_1d(pilots[j])] for j in range(len(labels))])
    return EXIT_OK


def cmd_report(args) -> int:
    path = args.data
    if not os.path.exists(path):
        raise DataError(f"input file {path!r} does not exist")
    out = args.out or os.path.dirname(os.path.abspath(path))
    if path.endswith(".json"):
        report = read_fit_report(path)
        est = [t["theta_hat"][0] for t in report.tasks]
        paths = emit_svg_diagnostics(out, est, None, args.bins)
        p = os.path.join(out, "inference.csv")
        _write_inference_csv(report, p)
        paths.append(p)
    else:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise DataError(f"{path}: no records")
        methods = list(dict.fromkeys(r["method"] for r in rows))
        method = args.method or methods[0]
        if method not in methods:
            raise UsageError(f"method {method!r} not in {path}; available: {', '.join(methods)}")
        sel = [r for r in rows if r["method"] == method]
        est = np.array([float(r["theta_hat"]) for r in sel])
        truth = np.array([float(r["theta_true"]) for r in sel])
        se = np.array([float(r["se"]) for r in sel])
        ok = se > 0
        z = (est[ok] - truth[ok]) / se[ok]
        paths = emit_svg_diagnostics(out, est, z, args.bins)
    for p in paths:
        print(p)
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "weights": cmd_weights, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError("missing subcommand (simulate, fit, weights, report)")
        return COMMANDS[args.command](args)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (UsageError, ConfigError) as exc:
        print(f"orthofuse: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"orthofuse: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"orthofuse: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OrthofuseError as exc:
        print(f"orthofuse: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"orthofuse: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
