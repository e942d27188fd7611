#!/usr/bin/env python3
"""Generate the shipped synthetic trading-day fixture.

Simulates one 10:00-15:30 session of best-quote events at parameters
resembling estimates for a liquid large-tick stock (decay near 1000/s,
provision excitement dominating depletion), then writes the path as a
raw quote CSV with nanosecond timestamps, the same shape real quote
data arrives in.  (Consecutive events often land under a microsecond
apart because the excitement decays on the millisecond scale, so coarser
stamps would collide.)  The script verifies the file survives preprocessing
losslessly before declaring success, so the committed fixture is
guaranteed to reproduce the simulated stream exactly.

Usage: python3 scripts/make_synthetic_day.py [--out PATH] [--seed N]
"""

from __future__ import annotations

import argparse
import io
from decimal import Decimal

from spreadhawkes.core import MarketState
from spreadhawkes.ingest import parse_quotes, parse_session, preprocess
from spreadhawkes.intensity import ParamSet
from spreadhawkes.simulator import SimConfig, simulate

DAY_PARAMS = ParamSet(
    mu=0.067,
    eta=0.0693,
    alpha_s1=96.32,
    alpha_s2=193.2,
    alpha_m=219.5,
    alpha_w1=271.6,
    alpha_w2=459.6,
    beta=991.1,
    xi=61.44,
)

SESSION = "10:00-15:30"


def format_time(total_ns: int) -> str:
    s, ns = divmod(total_ns, 1_000_000_000)
    h, rem = divmod(s, 3600)
    m, sec = divmod(rem, 60)
    return f"{h:02d}:{m:02d}:{sec:02d}.{ns:09d}"


def price_text(price: float, tick: float) -> str:
    return str(Decimal(str(tick)) * round(price / tick))


def render_quotes(stream, session_start_s: float) -> str:
    tick = stream.tick
    lines = ["time,bid,ask"]
    warm_ns = int(session_start_s * 1_000_000_000) - 500_000_000
    init = stream.initial_state
    lines.append(
        f"{format_time(warm_ns)},{price_text(init.bid, tick)},"
        f"{price_text(init.ask, tick)}"
    )
    seen = {warm_ns}
    for ev in stream.events:
        t_ns = round((session_start_s + ev.t) * 1_000_000_000)
        if t_ns in seen:
            raise SystemExit(
                f"nanosecond timestamp collision at event t={ev.t!r}; "
                "rerun with a different --seed"
            )
        seen.add(t_ns)
        st = ev.state_after
        lines.append(
            f"{format_time(t_ns)},{price_text(st.bid, tick)},"
            f"{price_text(st.ask, tick)}"
        )
    return "\n".join(lines) + "\n"


def verify_round_trip(text: str, stream, session: tuple[float, float]) -> None:
    parsed = parse_quotes(io.StringIO(text))
    rebuilt, report = preprocess(parsed, session, tick=stream.tick, seed=0)
    problems = []
    if report.n_events != len(stream):
        problems.append(f"{report.n_events} events != {len(stream)} simulated")
    if (report.relocation_groups or report.forced_splits
            or report.random_splits or report.dropped_locked_crossed):
        problems.append(f"unexpected preprocessing activity: {report.to_dict()}")
    for got, want in zip(rebuilt.events, stream.events):
        if got.kind is not want.kind or got.delta != want.delta \
                or got.state_after != want.state_after:
            problems.append(f"event mismatch at t={want.t!r}")
            break
    if problems:
        raise SystemExit("fixture verification failed: " + "; ".join(problems))


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="tests/fixtures/synthetic_day.csv")
    ap.add_argument("--seed", type=int, default=20180102)
    args = ap.parse_args(argv)

    start_s, end_s = parse_session(SESSION)
    stream = simulate(
        DAY_PARAMS,
        SimConfig(
            initial_state=MarketState(100.00, 100.02),
            horizon=end_s - start_s,
            seed=args.seed,
        ),
    )
    text = render_quotes(stream, start_s)
    verify_round_trip(text, stream, (start_s, end_s))
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(text)
    counts = {k.token: v for k, v in stream.counts().items()}
    print(f"wrote {args.out}: {len(stream)} events over "
          f"{stream.duration:.0f}s, counts {counts}, seed {args.seed}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
