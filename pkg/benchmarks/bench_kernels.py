#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python reference.

Runs the three hot loops (likelihood sweep, replay, thinning simulation)
on the same inputs through both backends, reports wall times and
speedups, and cross-checks that the outputs are bit-identical while it
is at it.

Usage: python3 benchmarks/bench_kernels.py [--n-events N] [--repeats R]
"""

from __future__ import annotations

import argparse
import importlib
import time

import numpy as np

from spreadhawkes.core import MarketState
from spreadhawkes.intensity import ModelVariant, ParamSet, compile_pack, lower_stream
from spreadhawkes.simulator import JumpTables, SimConfig, simulate

PARAMS = ParamSet(mu=0.08, eta=0.1, alpha_s1=4.0, alpha_s2=26.0, alpha_m=5.0,
                  alpha_w1=11.0, alpha_w2=7.0, beta=50.0, xi=2.7)


def backends() -> dict[str, object]:
    out = {"python": importlib.import_module("spreadhawkes._kernels._ref")}
    try:
        out["compiled"] = importlib.import_module("spreadhawkes._kernels._fast")
    except ImportError:
        print("note: compiled extension not built; benchmarking reference only")
    return out


def time_call(fn, repeats: int):
    best = float("inf")
    result = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    return best, result


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-events", type=int, default=20_000)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    state = MarketState(100.00, 100.02)
    stream = simulate(
        PARAMS, SimConfig(initial_state=state, n_events=args.n_events,
                          seed=args.seed)
    )
    pack = compile_pack(PARAMS, ModelVariant.PROPOSED)
    low = lower_stream(stream)
    lik_args = (low.t, low.kind, low.ell_after, low.lpos_after,
                low.ell0, low.lpos0, low.T, pack.col_decay,
                pack.base_indicator, pack.mu4, pack.eta4, pack.A,
                pack.reset_mode, pack.xi_mat, pack.beta_row)
    vals, cdf, lens = JumpTables().arrays()
    sim_args = (pack.col_decay, pack.base_indicator, pack.mu4, pack.eta4,
                pack.A, pack.reset_mode, pack.xi_mat, pack.beta_row,
                state.bid_ticks, state.ask_ticks, state.tick,
                -1.0, args.n_events, vals, cdf, lens,
                args.n_events, 1000 + 50 * args.n_events)

    mods = backends()
    rows = []
    results: dict[str, dict] = {name: {} for name in mods}
    for task in ("loglik", "replay", "simulate"):
        for name, mod in mods.items():
            if task == "loglik":
                fn = lambda m=mod: m.loglik(*lik_args)
            elif task == "replay":
                fn = lambda m=mod: m.replay(*lik_args)
            else:
                fn = lambda m=mod: m.simulate(
                    *sim_args, np.random.default_rng(args.seed)
                )
            secs, res = time_call(fn, args.repeats)
            results[name][task] = res
            rows.append((task, name, secs))

    if "compiled" in mods:
        ref, fast = results["python"], results["compiled"]
        assert ref["loglik"] == fast["loglik"], "loglik mismatch"
        assert all(
            np.array_equal(a, b)
            for a, b in zip(ref["replay"][:2], fast["replay"][:2])
        ), "replay mismatch"
        assert all(
            np.array_equal(np.asarray(a), np.asarray(b))
            for a, b in zip(ref["simulate"][:5], fast["simulate"][:5])
        ), "simulate mismatch"
        print(f"outputs bit-identical across backends "
              f"({args.n_events} events)\n")

    print(f"{'task':10s} {'backend':10s} {'best of ' + str(args.repeats):>14s} "
          f"{'events/s':>12s}")
    by_task: dict[str, dict[str, float]] = {}
    for task, name, secs in rows:
        by_task.setdefault(task, {})[name] = secs
        print(f"{task:10s} {name:10s} {secs * 1e3:11.2f} ms "
              f"{args.n_events / secs:12.0f}")
    if "compiled" in mods:
        print()
        for task, t in by_task.items():
            print(f"{task:10s} speedup: {t['python'] / t['compiled']:.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
