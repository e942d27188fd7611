"""Command line interface.

Subcommands cover the full pipeline: preprocess raw quotes, fit one
stream or rolling windows, simulate, compare variants by AIC/BIC, run
residual diagnostics, reproduce the simulation studies, and compute the
parameter analytics.  Every run writes a manifest JSON next to its main
output recording the command, arguments, seed, package version, and
kernel backend, so batches are reproducible and partial results are
traceable.  Exit codes: 0 success, 1 data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__, _kernels
from .core import EventKind, MarketState
from .diagnostics import (
    alpha_bar,
    ks_critical,
    ks_statistic,
    liquidity_ratio,
    moving_average,
    qq_points,
    residuals,
    stability_report,
)
from .estimator import (
    TABLE1_ROWS,
    FitConfig,
    FitReport,
    convergence_experiment,
    fit,
    study_truth,
    table1_experiment,
)
from .ingest import (
    IngestError,
    parse_quotes,
    parse_session,
    preprocess,
    read_events,
    windows,
    write_events,
)
from .intensity import ModelVariant, ParamSet
from .likelihood import aic as aic_of
from .likelihood import bic as bic_of
from .likelihood import log_likelihood
from .simulator import JumpTables, SimConfig, SimulationError, simulate


def _default_jobs() -> int:
    env = os.environ.get("SPREADHAWKES_JOBS", "").strip()
    if env.isdigit() and int(env) > 0:
        return int(env)
    return 1


def _parse_duration(text: str) -> float:
    """'3m' -> 180.0; supports s (default), m, h suffixes."""
    text = text.strip().lower()
    mult = 1.0
    if text.endswith("h"):
        mult, text = 3600.0, text[:-1]
    elif text.endswith("m"):
        mult, text = 60.0, text[:-1]
    elif text.endswith("s"):
        text = text[:-1]
    value = float(text) * mult
    if value <= 0:
        raise ValueError(f"duration must be positive, got {text!r}")
    return value


def _load_params(path: str) -> tuple[ParamSet, ModelVariant]:
    """Read parameters from a fit report JSON or a bare params JSON."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    variant = ModelVariant.from_token(data.get("variant", "proposed"))
    table = data.get("estimates") or data.get("params")
    if not isinstance(table, dict):
        raise IngestError(
            f"{path}: expected an 'estimates' or 'params' object with "
            "parameter values"
        )
    try:
        values = [float(table[n]) for n in variant.param_names]
    except KeyError as exc:
        raise IngestError(f"{path}: missing parameter {exc}") from None
    return ParamSet.from_vector(variant, values), variant


def _write_manifest(out_path: str | None, command: str, args: argparse.Namespace,
                    status: str, outputs: list[str], extra: dict | None = None) -> None:
    if not out_path:
        return
    payload = {
        "schema": "spreadhawkes-manifest-v1",
        "command": command,
        "arguments": {
            k: v for k, v in vars(args).items() if k != "func" and v is not None
        },
        "version": __version__,
        "kernel_backend": _kernels.BACKEND,
        "status": status,
        "outputs": outputs,
        "finished_unix": time.time(),
    }
    if extra:
        payload.update(extra)
    with open(out_path + ".manifest.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, default=str)
        fh.write("\n")


def _print(obj: dict) -> None:
    print(json.dumps(obj, indent=2, default=str))


# --- subcommand implementations ------------------------------------------------


def cmd_preprocess(args: argparse.Namespace) -> int:
    session = parse_session(args.session)
    parsed = parse_quotes(args.infile)
    stream, report = preprocess(parsed, session, tick=args.tick, seed=args.seed)
    write_events(stream, args.out)
    outputs = [args.out]
    if parsed.errors:
        sidecar = args.out + ".errors.csv"
        with open(sidecar, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["line", "reason", "text"])
            for line_no, text, reason in parsed.errors:
                w.writerow([line_no, reason, text])
        outputs.append(sidecar)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2)
            fh.write("\n")
        outputs.append(args.report)
    if report.n_events == 0:
        print("warning: preprocessing produced an empty event stream", file=sys.stderr)
    _print(report.to_dict())
    _write_manifest(args.out, "preprocess", args, "ok", outputs)
    return 0


def _fit_config(args: argparse.Namespace, variant: ModelVariant, **over) -> FitConfig:
    kw = dict(
        variant=variant,
        beta0=args.beta0,
        restarts=args.restarts,
        seed=args.seed,
        method=args.method,
    )
    kw.update(over)
    return FitConfig(**kw)


def cmd_fit(args: argparse.Namespace) -> int:
    stream = read_events(args.events)
    variant = ModelVariant.from_token(args.variant)
    report = fit(stream, _fit_config(args, variant))
    text = report.to_json()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        _write_manifest(args.out, "fit", args, "ok", [args.out])
    print(text)
    return 0


def cmd_fit_rolling(args: argparse.Namespace) -> int:
    stream = read_events(args.events)
    variant = ModelVariant.from_token(args.variant)
    length = _parse_duration(args.window)
    step = _parse_duration(args.step)
    subs = windows(stream, length=length, step=step)
    if not subs:
        raise IngestError(
            f"session of {stream.duration:.0f}s is shorter than the "
            f"{length:.0f}s window"
        )
    n_done = 0
    status = "ok"
    try:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(FitReport.csv_header(variant))
            for sub in subs:
                report = fit(
                    sub,
                    _fit_config(
                        args, variant, compute_se=not args.no_se,
                        min_events_per_process=args.min_events,
                    ),
                )
                w.writerow(report.to_csv_row())
                fh.flush()
                n_done += 1
    except Exception:
        status = f"failed after {n_done}/{len(subs)} windows"
        _write_manifest(args.out, "fit-rolling", args, status, [args.out])
        raise
    print(f"fit {n_done} windows of {length:.0f}s every {step:.0f}s -> {args.out}")
    _write_manifest(args.out, "fit-rolling", args, status, [args.out],
                    {"windows": n_done})
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    params, variant = _load_params(args.params)
    jumps = JumpTables()
    if args.jumps:
        with open(args.jumps, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        jumps = JumpTables.from_mapping(
            {
                EventKind.from_token(k): {int(s): float(p) for s, p in v.items()}
                for k, v in raw.items()
            }
        )
    config = SimConfig(
        initial_state=MarketState(args.bid, args.ask, args.tick),
        horizon=args.horizon,
        n_events=args.n_events,
        seed=args.seed,
        jumps=jumps,
    )
    stream = simulate(params, config, variant)
    write_events(stream, args.out)
    _print(
        {
            "events": len(stream),
            "duration": stream.duration,
            "counts": {k.token: v for k, v in stream.counts().items()},
            **stream.meta,
        }
    )
    _write_manifest(args.out, "simulate", args, "ok", [args.out])
    return 0


def cmd_select(args: argparse.Namespace) -> int:
    stream = read_events(args.events)
    tokens = [t.strip() for t in args.variants.split(",") if t.strip()]
    variants = [ModelVariant.from_token(t) for t in tokens]
    for v in variants:
        if not v.fittable:
            raise ValueError(f"variant {v.value} cannot be fitted to event data")
    rows = []
    status = "ok"
    try:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(
                ["variant", "k", "n_events", "loglik", "aic", "bic", "converged"]
            )
            for v in variants:
                report = fit(stream, _fit_config(args, v, compute_se=False))
                rows.append((v.value, report))
                w.writerow(
                    [v.value, v.k, report.n_events, repr(report.loglik),
                     repr(report.aic), repr(report.bic), int(report.converged)]
                )
                fh.flush()
    except Exception:
        status = f"failed after {len(rows)}/{len(variants)} variants"
        _write_manifest(args.out, "select", args, status, [args.out])
        raise
    best_aic = min(rows, key=lambda r: r[1].aic)
    best_bic = min(rows, key=lambda r: r[1].bic)
    _print(
        {
            "best_aic": best_aic[0],
            "best_bic": best_bic[0],
            "aic": {name: r.aic for name, r in rows},
        }
    )
    _write_manifest(args.out, "select", args, status, [args.out],
                    {"best_aic": best_aic[0], "best_bic": best_bic[0]})
    return 0


def cmd_diagnose(args: argparse.Namespace) -> int:
    stream = read_events(args.events)
    params, variant = _load_params(args.params)
    res = residuals(stream, params, variant)
    pooled = res.pooled()
    qq = qq_points(pooled)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rank", "theoretical", "empirical"])
        for i in range(len(qq)):
            w.writerow([i + 1, repr(float(qq[i, 0])), repr(float(qq[i, 1]))])
    ks = ks_statistic(pooled)
    n = len(pooled)
    summary = {
        "n_residuals": n,
        "mean": float(np.mean(pooled)),
        "ks": ks,
        "ks_critical_5pct": ks_critical(n, 0.05),
        "ks_critical_1pct": ks_critical(n, 0.01),
        "below_5pct": bool(ks < ks_critical(n, 0.05)),
        "below_1pct": bool(ks < ks_critical(n, 0.01)),
        "loglik": log_likelihood(stream, params, variant),
    }
    if args.residuals_out:
        with open(args.residuals_out, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["process", "index", "residual"])
            for i, arr in enumerate(res.per_process):
                for j, val in enumerate(arr):
                    w.writerow([EventKind(i).token, j, repr(float(val))])
    _print(summary)
    _write_manifest(args.out, "diagnose", args, "ok",
                    [args.out] + ([args.residuals_out] if args.residuals_out else []),
                    {"summary": summary})
    return 0


def cmd_experiment_table1(args: argparse.Namespace) -> int:
    spec = TABLE1_ROWS[args.row]
    names = ModelVariant.PROPOSED.param_names
    done = 0
    status = "ok"
    rows = []
    chunk = max(1, args.jobs)
    try:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["path", "seed"] + list(names) + ["loglik", "converged"])
            for start in range(0, args.paths, chunk):
                n_chunk = min(chunk, args.paths - start)
                # Seeding composes: path p of a batch started at seed
                # S + 97*start matches path start+p of a batch at seed S.
                study = table1_experiment(
                    args.row, n_chunk, n_events=args.n_events,
                    seed=args.seed + 97 * start, beta0=args.beta0,
                    restarts=args.restarts, jobs=args.jobs,
                )
                for offset, r in enumerate(study.rows):
                    rows.append(r)
                    w.writerow(
                        [start + offset, int(r["seed"])]
                        + [repr(r[n]) for n in names]
                        + [repr(r["loglik"]), int(r["converged"])]
                    )
                fh.flush()
                done += n_chunk
    except Exception:
        status = f"failed after {done}/{args.paths} paths"
        _write_manifest(args.out, "experiment table1", args, status, [args.out])
        raise
    mean = {n: float(np.mean([r[n] for r in rows])) for n in names}
    std = {
        n: (float(np.std([r[n] for r in rows], ddof=1)) if len(rows) > 1 else math.nan)
        for n in names
    }
    truth = spec["truth"]
    summary = {
        "row": args.row,
        "paths": done,
        "mean": mean,
        "std": std,
        "truth": truth.to_dict(ModelVariant.PROPOSED),
        "within_3_ref_std": all(
            abs(mean[k] - truth.get(k)) <= 3.0 * spec["std"][k] for k in spec["std"]
        ),
    }
    _print(summary)
    _write_manifest(args.out, "experiment table1", args, status, [args.out],
                    {"summary": summary})
    return 0


def cmd_experiment_convergence(args: argparse.Namespace) -> int:
    grid = tuple(float(x) for x in args.grid.split(","))
    truth = study_truth(args.beta)
    done = 0
    status = "ok"
    per_beta0: dict[float, list[float]] = {b: [] for b in grid}
    chunk = max(1, args.jobs)
    try:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["rep", "beta0", "rmse", "success"])
            for start in range(0, args.reps, chunk):
                n_chunk = min(chunk, args.reps - start)
                result = convergence_experiment(
                    truth, args.n_events, grid, n_chunk,
                    threshold=args.threshold, seed=args.seed + 613 * start,
                    jobs=args.jobs,
                )
                for offset in range(n_chunk):
                    for b in grid:
                        r = result.rmse[b][offset]
                        per_beta0[b].append(r)
                        w.writerow(
                            [start + offset, b, repr(r), int(r < args.threshold)]
                        )
                fh.flush()
                done += n_chunk
    except Exception:
        status = f"failed after {done}/{args.reps} replications"
        _write_manifest(args.out, "experiment convergence", args, status, [args.out])
        raise
    rates = {
        b: sum(1 for r in v if r < args.threshold) / len(v)
        for b, v in per_beta0.items()
    }
    summary = {
        "beta": args.beta,
        "n_events": args.n_events,
        "replications": done,
        "threshold": args.threshold,
        "success_rates": rates,
    }
    _print(summary)
    _write_manifest(args.out, "experiment convergence", args, status, [args.out],
                    {"summary": summary})
    return 0


def cmd_analytics(args: argparse.Namespace) -> int:
    with open(args.fits, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    if not rows:
        raise IngestError(f"{args.fits}: no fit rows")
    needed = ("alpha_s1", "alpha_s2", "alpha_m", "alpha_w1", "alpha_w2", "beta")
    for col in needed:
        if col not in rows[0]:
            raise IngestError(f"{args.fits}: missing column {col}")
    params_list = []
    for r in rows:
        params_list.append(
            ParamSet(
                mu=float(r.get("mu", 0.0) or 0.0),
                eta=float(r.get("eta", 0.0) or 0.0),
                alpha_s1=float(r["alpha_s1"]),
                alpha_s2=float(r["alpha_s2"]),
                alpha_m=float(r["alpha_m"]),
                alpha_w1=float(r["alpha_w1"]),
                alpha_w2=float(r["alpha_w2"]),
                beta=float(r["beta"]),
                xi=float(r.get("xi", 0.0) or 0.0),
            )
        )
    bars = [alpha_bar(p) for p in params_list]
    smoothed = moving_average(bars, window=args.ma_window)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["window_start", "window_end", "alpha_bar", "alpha_bar_ma",
             "provision_mean", "depletion_mean", "depletion_provision_ratio",
             "trace", "determinant", "stable", "steady_state_L",
             "steady_state_rate"]
        )
        for r, p, bar, ma in zip(rows, params_list, bars, smoothed):
            liq = liquidity_ratio(p)
            stab = stability_report(p)
            w.writerow(
                [r.get("window_start", ""), r.get("window_end", ""), repr(bar),
                 repr(float(ma)), repr(liq.provision_mean), repr(liq.depletion_mean),
                 "" if liq.ratio is None else repr(liq.ratio),
                 repr(stab.trace), repr(stab.determinant), int(stab.stable),
                 "" if stab.steady_state_L is None else repr(stab.steady_state_L),
                 "" if stab.steady_state_rate is None else repr(stab.steady_state_rate)]
            )
    print(f"analytics for {len(rows)} fits -> {args.out}")
    _write_manifest(args.out, "analytics", args, "ok", [args.out])
    return 0


# --- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spreadhawkes",
        description="Spread-dependent Hawkes modeling of best-quote dynamics",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="raw quote CSV -> event stream CSV")
    p.add_argument("--in", dest="infile", required=True, help="raw quote CSV")
    p.add_argument("--tick", type=float, default=0.01)
    p.add_argument("--session", default="10:00-15:30", help="e.g. 10:00-15:30")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="event CSV to write")
    p.add_argument("--report", help="preprocessing report JSON")
    p.set_defaults(func=cmd_preprocess)

    def fit_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--beta0", type=float, default=100.0)
        p.add_argument("--restarts", type=int, default=3)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--method", choices=("simplex", "gradient"),
                       default="simplex")

    p = sub.add_parser("fit", help="fit one stream, write a fit report JSON")
    p.add_argument("--events", required=True)
    p.add_argument("--variant", default="proposed")
    fit_flags(p)
    p.add_argument("--out", help="fit report JSON (also printed)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("fit-rolling", help="fit overlapping intraday windows")
    p.add_argument("--events", required=True)
    p.add_argument("--variant", default="proposed")
    p.add_argument("--window", default="3m", help="window length (e.g. 3m)")
    p.add_argument("--step", default="1m", help="window step (e.g. 1m)")
    fit_flags(p)
    p.add_argument("--no-se", action="store_true",
                   help="skip standard errors (faster)")
    p.add_argument("--min-events", type=int, default=50,
                   help="per-process events below which a window is "
                        "marked unreliable")
    p.add_argument("--out", required=True, help="CSV of per-window fits")
    p.set_defaults(func=cmd_fit_rolling)

    p = sub.add_parser("simulate", help="simulate a stream from fitted params")
    p.add_argument("--params", required=True,
                   help="fit report JSON or {variant, params} JSON")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--horizon", type=float, help="seconds to simulate")
    group.add_argument("--n-events", type=int, help="events to simulate")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bid", type=float, default=100.00)
    p.add_argument("--ask", type=float, default=100.02)
    p.add_argument("--tick", type=float, default=0.01)
    p.add_argument("--jumps", help="JSON of {kind: {size: prob}} jump tables")
    p.add_argument("--out", required=True, help="event CSV to write")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("select", help="AIC/BIC comparison across variants")
    p.add_argument("--events", required=True)
    p.add_argument("--variants",
                   default="proposed,basic,ext1,ext2,ext3,ext4,ext5,constant")
    fit_flags(p)
    p.add_argument("--out", required=True, help="selection CSV")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("diagnose", help="time-change residuals, Q-Q, KS")
    p.add_argument("--events", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--out", required=True, help="Q-Q pairs CSV")
    p.add_argument("--residuals-out", help="per-process residuals CSV")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("experiment", help="simulation studies")
    esub = p.add_subparsers(dest="experiment", required=True)

    e = esub.add_parser("table1", help="parameter-recovery benchmark")
    e.add_argument("--row", type=int, choices=sorted(TABLE1_ROWS), default=1)
    e.add_argument("--paths", type=int, default=100)
    e.add_argument("--n-events", type=int, default=10_000)
    e.add_argument("--beta0", type=float, default=100.0)
    e.add_argument("--restarts", type=int, default=3)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--jobs", type=int, default=_default_jobs())
    e.add_argument("--out", required=True, help="per-path estimates CSV")
    e.set_defaults(func=cmd_experiment_table1)

    e = esub.add_parser("convergence", help="start-sensitivity study")
    e.add_argument("--beta", type=float, default=400.0, help="truth decay")
    e.add_argument("--grid", default="10,50,100,400",
                   help="comma-separated beta0 values")
    e.add_argument("--n-events", type=int, default=5_000)
    e.add_argument("--reps", type=int, default=50)
    e.add_argument("--threshold", type=float, default=0.2,
                   help="success RMSE threshold")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--jobs", type=int, default=_default_jobs())
    e.add_argument("--out", required=True, help="per-replication CSV")
    e.set_defaults(func=cmd_experiment_convergence)

    p = sub.add_parser("analytics", help="parameter analytics over fit rows")
    p.add_argument("--fits", required=True, help="CSV from fit-rolling")
    p.add_argument("--ma-window", type=int, default=20)
    p.add_argument("--out", required=True, help="metrics CSV")
    p.set_defaults(func=cmd_analytics)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return int(args.func(args) or 0)
    except (IngestError, SimulationError, ValueError, RuntimeError, OSError,
            json.JSONDecodeError) as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
