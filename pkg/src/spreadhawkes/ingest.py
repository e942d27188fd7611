"""Quote-file parsing, preprocessing into event streams, and serialization.

Input is a CSV of best-quote updates (`time,bid,ask[,exchange]`).
Preprocessing applies, in order: relocation of duplicate timestamps to
equidistant offsets inside one resolution unit, carry-forward of one-sided
updates, dropping of locked/crossed books, session-window filtering, and
decomposition of two-sided changes into ordered events (random order where
both are legal, driven by a seed).  Event streams serialize to their own
versioned CSV with exact decimal prices and shortest-round-trip floats, so
a write/read cycle reproduces the stream bit for bit.
"""

from __future__ import annotations

import io
import json
import math
import re
from dataclasses import dataclass
from decimal import Decimal
from typing import Iterable, Sequence

import numpy as np

from .core import (
    DEFAULT_TICK,
    EventKind,
    EventRecord,
    EventStream,
    LockedCrossedError,
    MarketState,
    apply_event,
    classify_transition,
)

EVENTS_SCHEMA = "spreadhawkes-events v1"


class IngestError(ValueError):
    """Unrecoverable input problem (too many malformed rows, unsorted
    timestamps, or a corrupt event file)."""


_TIME_RE = re.compile(r"^(\d{1,2}):(\d{2}):(\d{2})(?:\.(\d{1,9}))?$")


def parse_clock(text: str) -> float:
    """'HH:MM[:SS[.frac]]' -> seconds since midnight."""
    text = text.strip()
    if re.fullmatch(r"\d{1,2}:\d{2}", text):
        text += ":00"
    m = _TIME_RE.match(text)
    if not m:
        raise ValueError(f"cannot parse clock time {text!r}")
    h, mi, s = int(m.group(1)), int(m.group(2)), int(m.group(3))
    if h > 23 or mi > 59 or s > 60:
        raise ValueError(f"clock fields out of range in {text!r}")
    frac = m.group(4) or ""
    ns = int(frac.ljust(9, "0")) if frac else 0
    return h * 3600 + mi * 60 + s + ns / 1e9


def parse_session(text: str) -> tuple[float, float]:
    """'10:00-15:30' -> (36000.0, 55800.0) seconds since midnight."""
    parts = text.split("-")
    if len(parts) != 2:
        raise ValueError(f"session must look like '10:00-15:30', got {text!r}")
    start, end = parse_clock(parts[0]), parse_clock(parts[1])
    if not end > start:
        raise ValueError("session end must be after session start")
    return start, end


@dataclass(frozen=True)
class RawQuote:
    """One raw quote row: integer nanoseconds since midnight plus prices.

    A missing side (empty field, or price 0, the usual no-quote sentinel)
    is None; at least one side is present.
    """

    t_ns: int
    bid: float | None
    ask: float | None
    exchange: str | None = None
    line_no: int = -1


@dataclass(frozen=True)
class QuoteFormat:
    """Column mapping for quote CSV files."""

    time_col: str = "time"
    bid_col: str = "bid"
    ask_col: str = "ask"
    exchange_col: str | None = "exchange"
    delimiter: str = ","


@dataclass(frozen=True)
class ParseResult:
    quotes: tuple[RawQuote, ...]
    errors: tuple[tuple[int, str, str], ...]  # (line number, text, reason)
    resolution_ns: int

    @property
    def n_rows(self) -> int:
        return len(self.quotes) + len(self.errors)


def _parse_price(text: str) -> float | None:
    text = text.strip()
    if not text:
        return None
    value = float(text)
    if value < 0:
        raise ValueError(f"negative price {text}")
    return None if value == 0.0 else value


def parse_quotes(
    source: str | io.TextIOBase,
    fmt: QuoteFormat = QuoteFormat(),
    max_malformed_fraction: float = 0.05,
) -> ParseResult:
    """Parse a quote CSV into RawQuotes.

    The fractional-second resolution (ms/us/ns) is auto-detected from the
    widest fraction in the file.  Malformed rows are collected with line
    numbers and reasons; more than ``max_malformed_fraction`` of them is a
    hard IngestError.
    """
    if isinstance(source, str):
        with open(source, "r", encoding="utf-8") as fh:
            return parse_quotes(fh, fmt, max_malformed_fraction)

    header = None
    quotes: list[tuple[int, int, int, float | None, float | None, str | None]] = []
    errors: list[tuple[int, str, str]] = []
    max_frac_width = 0
    n_rows = 0
    for line_no, line in enumerate(source, start=1):
        line = line.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        cells = line.split(fmt.delimiter)
        if header is None:
            header = [c.strip().lower() for c in cells]
            try:
                t_idx = header.index(fmt.time_col)
                b_idx = header.index(fmt.bid_col)
                a_idx = header.index(fmt.ask_col)
            except ValueError as exc:
                raise IngestError(f"missing required column: {exc}") from None
            x_idx = (
                header.index(fmt.exchange_col)
                if fmt.exchange_col and fmt.exchange_col in header
                else None
            )
            continue
        n_rows += 1
        try:
            if len(cells) < len(header):
                raise ValueError("too few columns")
            m = _TIME_RE.match(cells[t_idx].strip())
            if not m:
                raise ValueError(f"bad timestamp {cells[t_idx]!r}")
            h, mi, s = int(m.group(1)), int(m.group(2)), int(m.group(3))
            if h > 23 or mi > 59 or s > 60:
                raise ValueError(f"clock fields out of range {cells[t_idx]!r}")
            frac = m.group(4) or ""
            max_frac_width = max(max_frac_width, len(frac))
            t_ns = (h * 3600 + mi * 60 + s) * 1_000_000_000 + int(
                frac.ljust(9, "0") or 0
            )
            bid = _parse_price(cells[b_idx])
            ask = _parse_price(cells[a_idx])
            if bid is None and ask is None:
                raise ValueError("both sides missing")
            exch = cells[x_idx].strip() or None if x_idx is not None else None
            quotes.append((line_no, t_ns, 0, bid, ask, exch))
        except ValueError as exc:
            errors.append((line_no, line, str(exc)))
    if header is None:
        raise IngestError("no header row found")
    if n_rows and len(errors) / n_rows > max_malformed_fraction:
        raise IngestError(
            f"{len(errors)} of {n_rows} rows malformed "
            f"(> {max_malformed_fraction:.0%}); first: {errors[0]}"
        )
    if max_frac_width <= 3:
        digits = 3
    elif max_frac_width <= 6:
        digits = 6
    else:
        digits = 9
    resolution_ns = 10 ** (9 - digits)
    out = tuple(
        RawQuote(t_ns=t, bid=b, ask=a, exchange=x, line_no=ln)
        for ln, t, _, b, a, x in quotes
    )
    return ParseResult(quotes=out, errors=tuple(errors), resolution_ns=resolution_ns)


@dataclass(frozen=True)
class PreprocessReport:
    """Counters describing what preprocessing did to the raw rows."""

    total_rows: int
    malformed_rows: int
    relocation_groups: int
    relocated_rows: int
    forced_splits: int
    random_splits: int
    dropped_locked_crossed: int
    window_excluded: int
    no_change_rows: int
    n_events: int

    @property
    def drop_percentage(self) -> float:
        if self.total_rows == 0:
            return 0.0
        return self.dropped_locked_crossed / self.total_rows

    def to_dict(self) -> dict:
        return {
            "schema": "spreadhawkes-preprocess-report-v1",
            "total_rows": self.total_rows,
            "malformed_rows": self.malformed_rows,
            "relocation_groups": self.relocation_groups,
            "relocated_rows": self.relocated_rows,
            "forced_splits": self.forced_splits,
            "random_splits": self.random_splits,
            "dropped_locked_crossed": self.dropped_locked_crossed,
            "window_excluded": self.window_excluded,
            "no_change_rows": self.no_change_rows,
            "n_events": self.n_events,
            "drop_percentage": self.drop_percentage,
        }


def _relocate(quotes: Sequence[RawQuote], unit_ns: int) -> tuple[list[float], int, int]:
    """Duplicate timestamps -> equidistant offsets inside one unit.

    A group of m equal timestamps t maps to t + j*unit/(m+1), j = 0..m-1,
    so the first row stays put and the last lands strictly inside the
    unit, which can never collide with the next distinct timestamp.
    Returns (times in seconds, groups relocated, rows moved).
    """
    times: list[float] = []
    groups = 0
    moved = 0
    i = 0
    n = len(quotes)
    while i < n:
        j = i
        while j < n and quotes[j].t_ns == quotes[i].t_ns:
            j += 1
        m = j - i
        if m > 1:
            groups += 1
            moved += m - 1
            step = unit_ns / (m + 1)
            for r in range(m):
                times.append((quotes[i].t_ns + r * step) / 1e9)
        else:
            times.append(quotes[i].t_ns / 1e9)
        i = j
    return times, groups, moved


def preprocess(
    parsed: ParseResult | Sequence[RawQuote],
    session: tuple[float, float],
    tick: float = DEFAULT_TICK,
    seed: int | np.random.Generator | None = None,
    resolution_ns: int | None = None,
) -> tuple[EventStream, PreprocessReport]:
    """Turn raw quotes for one instrument-day into a valid event stream.

    ``session`` is (start, end) in seconds since midnight; rows at or
    before the start establish the initial book state, rows after the end
    are excluded.  If no complete book state exists by the session start,
    the stream begins at the first complete in-window state.  The seed
    only influences the order of simultaneous two-sided changes where
    both orders are legal.
    """
    if isinstance(parsed, ParseResult):
        quotes = parsed.quotes
        unit_ns = resolution_ns if resolution_ns is not None else parsed.resolution_ns
        malformed = len(parsed.errors)
        total_rows = parsed.n_rows
    else:
        quotes = tuple(parsed)
        unit_ns = resolution_ns if resolution_ns is not None else 1_000_000
        malformed = 0
        total_rows = len(quotes)
    start_s, end_s = session
    if not end_s > start_s:
        raise ValueError("session end must be after session start")
    for a, b in zip(quotes, quotes[1:]):
        if b.t_ns < a.t_ns:
            raise IngestError(
                f"timestamps not sorted at line {b.line_no} ({b.t_ns} < {a.t_ns})"
            )
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    times, relocation_groups, relocated_rows = _relocate(quotes, unit_ns)
    unit_s = unit_ns / 1e9

    cur_bid: float | None = None
    cur_ask: float | None = None
    state: MarketState | None = None  # last valid book state
    initial_state: MarketState | None = None
    effective_start: float | None = None
    events: list[EventRecord] = []
    forced_splits = 0
    random_splits = 0
    dropped = 0
    window_excluded = 0
    no_change = 0

    for idx, (q, t) in enumerate(zip(quotes, times)):
        if t > end_s:
            window_excluded += 1
            continue
        if q.bid is not None:
            cur_bid = q.bid
        if q.ask is not None:
            cur_ask = q.ask
        if cur_bid is None or cur_ask is None:
            continue
        try:
            new_state = MarketState(cur_bid, cur_ask, tick)
        except LockedCrossedError:
            dropped += 1
            continue
        if t <= start_s:
            window_excluded += 1
            state = new_state
            continue
        if state is None:
            # No book before the session start: open at this quote.
            initial_state = new_state
            effective_start = t
            state = new_state
            continue
        if initial_state is None:
            initial_state = state
            effective_start = start_s
        if new_state == state:
            no_change += 1
            continue
        moves = _ordered_moves(state, new_state, rng)
        if len(moves) == 2:
            if moves[1][2]:
                random_splits += 1
            else:
                forced_splits += 1
            t_next = _next_time(times, idx, end_s)
            second_t = t + min(unit_s, t_next - t) / 2.0
            times_for = (t, second_t)
        else:
            times_for = (t,)
        step_state = state
        for (kind, delta, _), ev_t in zip(moves, times_for):
            step_state = apply_event(step_state, kind, delta)
            events.append(EventRecord(ev_t, kind, delta, step_state))
        state = new_state

    if initial_state is None:
        if state is not None:
            initial_state = state
            effective_start = start_s
        else:
            raise IngestError(
                "no complete book state found; cannot form an event stream"
            )
    stream = EventStream(
        session_start=float(effective_start if effective_start is not None else start_s),
        session_end=float(end_s),
        tick=tick,
        initial_state=initial_state,
        events=tuple(events),
        meta={
            "source": "preprocess",
            "session": f"{start_s}-{end_s}",
            "resolution_ns": unit_ns,
        },
    )
    report = PreprocessReport(
        total_rows=total_rows,
        malformed_rows=malformed,
        relocation_groups=relocation_groups,
        relocated_rows=relocated_rows,
        forced_splits=forced_splits,
        random_splits=random_splits,
        dropped_locked_crossed=dropped,
        window_excluded=window_excluded,
        no_change_rows=no_change,
        n_events=len(events),
    )
    return stream, report


def _ordered_moves(
    prev: MarketState, new: MarketState, rng: np.random.Generator
) -> list[tuple[EventKind, int, bool]]:
    """classify_transition plus a flag marking random-order splits."""
    bid_d = new.bid_ticks - prev.bid_ticks
    ask_d = new.ask_ticks - prev.ask_ticks
    both = bid_d != 0 and ask_d != 0
    randomized = False
    if both:
        ask_first_ok = new.ask_ticks > prev.bid_ticks
        bid_first_ok = new.bid_ticks < prev.ask_ticks
        randomized = ask_first_ok and bid_first_ok
    moves = classify_transition(prev, new, rng=rng)
    return [(k, d, randomized) for k, d in moves]


def _next_time(times: Sequence[float], idx: int, end_s: float) -> float:
    for j in range(idx + 1, len(times)):
        if times[j] > times[idx]:
            return min(times[j], end_s)
    return end_s


def windows(
    stream: EventStream,
    length: float | None = None,
    step: float | None = None,
) -> list[EventStream]:
    """Slice a stream into fitting windows.

    With no ``length`` this is the daily mode: one window, the whole
    session.  Otherwise windows are [start + k*step, start + k*step +
    length] for k = 0 .. floor((duration - length)/step), each with its
    initial state snapshotted at the window start; overlapping windows
    (step < length) are the intraday mode.
    """
    if length is None:
        return [stream]
    if length <= 0:
        raise ValueError("window length must be > 0")
    step = length if step is None else step
    if step <= 0:
        raise ValueError("window step must be > 0")
    if stream.duration < length:
        return []
    k_max = int(math.floor((stream.duration - length) / step + 1e-9))
    times = np.array([ev.t for ev in stream.events])
    out = []
    for k in range(k_max + 1):
        w_start = stream.session_start + k * step
        w_end = w_start + length
        lo = int(np.searchsorted(times, w_start, side="right"))
        hi = int(np.searchsorted(times, w_end, side="right"))
        init = stream.events[lo - 1].state_after if lo > 0 else stream.initial_state
        meta = dict(stream.meta)
        meta["window_index"] = k
        out.append(
            EventStream(
                session_start=w_start,
                session_end=w_end,
                tick=stream.tick,
                initial_state=init,
                events=stream.events[lo:hi],
                meta=meta,
            )
        )
    return out


# --- event CSV serialization --------------------------------------------------


def _price_str(price: float, tick: float) -> str:
    ticks = round(price / tick)
    return str(Decimal(str(tick)) * ticks)


def write_events(stream: EventStream, target: str | io.TextIOBase) -> None:
    """Write a stream to the versioned event CSV format.

    Times use shortest-round-trip float text; prices are exact decimal
    strings on the tick grid, so reading the file back reproduces the
    stream exactly.
    """
    if isinstance(target, str):
        with open(target, "w", encoding="utf-8") as fh:
            write_events(stream, fh)
            return
    w = target.write
    w(f"# {EVENTS_SCHEMA}\n")
    w(f"# session_start={stream.session_start!r}\n")
    w(f"# session_end={stream.session_end!r}\n")
    w(f"# tick={stream.tick!r}\n")
    w(f"# initial_bid={_price_str(stream.initial_state.bid, stream.tick)}\n")
    w(f"# initial_ask={_price_str(stream.initial_state.ask, stream.tick)}\n")
    if stream.meta:
        w(f"# meta={json.dumps(stream.meta, sort_keys=True, default=str)}\n")
    w("t,kind,delta,bid,ask\n")
    tick = stream.tick
    for ev in stream.events:
        w(
            f"{ev.t!r},{ev.kind.token},{ev.delta},"
            f"{_price_str(ev.state_after.bid, tick)},"
            f"{_price_str(ev.state_after.ask, tick)}\n"
        )


def read_events(source: str | io.TextIOBase, validate: bool = True) -> EventStream:
    """Read the event CSV format back into a stream."""
    if isinstance(source, str):
        with open(source, "r", encoding="utf-8") as fh:
            return read_events(fh, validate=validate)
    headers: dict[str, str] = {}
    meta: dict = {}
    schema_seen = False
    rows: list[tuple[float, EventKind, int, str, str]] = []
    header_line = None
    for line_no, line in enumerate(source, start=1):
        line = line.rstrip("\n")
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body == EVENTS_SCHEMA:
                schema_seen = True
            elif "=" in body:
                key, _, value = body.partition("=")
                if key.strip() == "meta":
                    meta = json.loads(value)
                else:
                    headers[key.strip()] = value.strip()
            continue
        if header_line is None:
            if line.strip() != "t,kind,delta,bid,ask":
                raise IngestError(
                    f"line {line_no}: expected column header, got {line!r}"
                )
            header_line = line
            continue
        cells = line.split(",")
        if len(cells) != 5:
            raise IngestError(f"line {line_no}: expected 5 columns")
        rows.append(
            (
                float(cells[0]),
                EventKind.from_token(cells[1]),
                int(cells[2]),
                cells[3],
                cells[4],
            )
        )
    if not schema_seen:
        raise IngestError(f"not a {EVENTS_SCHEMA} file (schema comment missing)")
    try:
        session_start = float(headers["session_start"])
        session_end = float(headers["session_end"])
        tick = float(headers["tick"])
        init = MarketState(
            float(headers["initial_bid"]), float(headers["initial_ask"]), tick
        )
    except KeyError as exc:
        raise IngestError(f"missing header field {exc}") from None
    events = tuple(
        EventRecord(t, kind, delta, MarketState(float(b), float(a), tick))
        for t, kind, delta, b, a in rows
    )
    stream = EventStream(
        session_start=session_start,
        session_end=session_end,
        tick=tick,
        initial_state=init,
        events=events,
        meta=meta,
    )
    if validate:
        stream.validate()
    return stream


__all__ = [
    "IngestError",
    "RawQuote",
    "QuoteFormat",
    "ParseResult",
    "parse_quotes",
    "PreprocessReport",
    "preprocess",
    "windows",
    "write_events",
    "read_events",
    "parse_clock",
    "parse_session",
    "EVENTS_SCHEMA",
]
