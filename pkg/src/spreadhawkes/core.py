"""Domain types and market-state arithmetic for best bid/ask event streams.

Everything downstream (intensities, likelihood, simulation, ingestion) is
built on the four types here: the event taxonomy, the tick-aligned book
state, single events, and whole sessions.  All types are immutable values;
the operations are pure functions.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

__all__ = [
    "DEFAULT_TICK",
    "EventKind",
    "MarketState",
    "EventRecord",
    "EventStream",
    "apply_event",
    "classify_transition",
    "build_stream",
    "LockedCrossedError",
]

DEFAULT_TICK = 0.01


class LockedCrossedError(ValueError):
    """A book state with ask <= bid (locked or crossed)."""


class EventKind(enum.IntEnum):
    """The four quote-change processes.

    Values are 0-based array indices; the conventional 1-based process
    numbering (intensities lambda_1..lambda_4) is ``process_index``.
    AskUp/BidDown widen the spread, AskDown/BidUp narrow it.
    """

    ASK_UP = 0
    ASK_DOWN = 1
    BID_UP = 2
    BID_DOWN = 3

    @property
    def process_index(self) -> int:
        return self.value + 1

    @property
    def widening(self) -> bool:
        return self in (EventKind.ASK_UP, EventKind.BID_DOWN)

    @property
    def narrowing(self) -> bool:
        return not self.widening

    @property
    def moves_ask(self) -> bool:
        return self in (EventKind.ASK_UP, EventKind.ASK_DOWN)

    @property
    def direction(self) -> int:
        """+1 if the moved side goes up in price, -1 if down."""
        return +1 if self in (EventKind.ASK_UP, EventKind.BID_UP) else -1

    @property
    def token(self) -> str:
        return self.name.lower()

    @classmethod
    def from_token(cls, token: str) -> "EventKind":
        try:
            return cls[token.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown event kind {token!r}") from None


def _to_ticks(price: float, tick: float) -> int:
    ticks = price / tick
    nearest = round(ticks)
    if nearest < 1:
        raise ValueError(f"price {price} is below one tick")
    return nearest


@dataclass(frozen=True)
class MarketState:
    """Best bid/ask snapshot, canonicalized onto the tick grid.

    Prices are snapped to the nearest multiple of ``tick`` on construction,
    so equality and replay arithmetic are exact.  ``L`` counts ticks above
    the minimum (one-tick) spread; ``ell`` is the relative level L / p used
    by the spread-dependent intensities.
    """

    bid: float
    ask: float
    tick: float = DEFAULT_TICK

    def __post_init__(self) -> None:
        if not self.tick > 0:
            raise ValueError("tick must be positive")
        bid_t = _to_ticks(self.bid, self.tick)
        ask_t = _to_ticks(self.ask, self.tick)
        if ask_t <= bid_t:
            raise LockedCrossedError(
                f"locked/crossed book: bid {self.bid} >= ask {self.ask}"
            )
        object.__setattr__(self, "bid", bid_t * self.tick)
        object.__setattr__(self, "ask", ask_t * self.tick)

    @classmethod
    def from_ticks(cls, bid_ticks: int, ask_ticks: int, tick: float = DEFAULT_TICK) -> "MarketState":
        return cls(bid_ticks * tick, ask_ticks * tick, tick)

    @property
    def bid_ticks(self) -> int:
        return round(self.bid / self.tick)

    @property
    def ask_ticks(self) -> int:
        return round(self.ask / self.tick)

    @property
    def p(self) -> float:
        """Mid-price in currency units."""
        return (self.bid + self.ask) / 2.0

    @property
    def L(self) -> int:
        """Absolute spread level: ticks above the minimum spread, >= 0."""
        return self.ask_ticks - self.bid_ticks - 1

    @property
    def ell(self) -> float:
        """Relative level L / p (dimensionless)."""
        return self.L / self.p


@dataclass(frozen=True)
class EventRecord:
    """One best-quote change: time, process, jump size, resulting state.

    ``t`` is in seconds on the session axis; ``delta`` is a positive jump
    size in ticks.
    """

    t: float
    kind: EventKind
    delta: int
    state_after: MarketState


def apply_event(
    state: MarketState, kind: EventKind, delta: int, tick: float | None = None
) -> MarketState:
    """Move one side of the book by ``delta`` ticks in ``kind``'s direction.

    Raises ValueError if the move would lock/cross the book (narrowing past
    L = 0) or push the moved price to zero.
    """
    if tick is not None and not math.isclose(tick, state.tick, rel_tol=1e-9):
        raise ValueError(f"tick {tick} does not match state tick {state.tick}")
    if delta < 1 or delta != int(delta):
        raise ValueError(f"delta must be a positive integer tick count, got {delta}")
    bid_t, ask_t = state.bid_ticks, state.ask_ticks
    if kind.moves_ask:
        ask_t += kind.direction * delta
    else:
        bid_t += kind.direction * delta
    if ask_t <= bid_t:
        raise LockedCrossedError(
            f"{kind.token} by {delta} from L={state.L} would lock/cross the book"
        )
    if bid_t < 1:
        raise ValueError(f"{kind.token} by {delta} would drive the bid to zero")
    return MarketState.from_ticks(bid_t, ask_t, state.tick)


def classify_transition(
    prev: MarketState,
    next: MarketState,
    tick: float | None = None,
    rng=None,
) -> list[tuple[EventKind, int]]:
    """Decompose a book transition into one or two quote-change events.

    A single-side change maps to one event.  When both sides changed, the
    two events are ordered so that the intermediate state is never
    locked/crossed; if both orders are valid the choice is made by ``rng``
    (a numpy Generator), which must then be supplied.
    """
    if tick is not None and not math.isclose(tick, prev.tick, rel_tol=1e-9):
        raise ValueError(f"tick {tick} does not match state tick {prev.tick}")
    if not math.isclose(prev.tick, next.tick, rel_tol=1e-9):
        raise ValueError("prev and next use different tick sizes")
    bid_d = next.bid_ticks - prev.bid_ticks
    ask_d = next.ask_ticks - prev.ask_ticks
    if bid_d == 0 and ask_d == 0:
        raise ValueError("no side changed between prev and next")

    def ask_move() -> tuple[EventKind, int]:
        kind = EventKind.ASK_UP if ask_d > 0 else EventKind.ASK_DOWN
        return kind, abs(ask_d)

    def bid_move() -> tuple[EventKind, int]:
        kind = EventKind.BID_UP if bid_d > 0 else EventKind.BID_DOWN
        return kind, abs(bid_d)

    if bid_d == 0:
        return [ask_move()]
    if ask_d == 0:
        return [bid_move()]

    # Both sides changed: the intermediate state must stay valid.
    ask_first_ok = next.ask_ticks > prev.bid_ticks
    bid_first_ok = next.bid_ticks < prev.ask_ticks
    # prev and next are both valid, so at least one order always is.
    if ask_first_ok and bid_first_ok:
        if rng is None:
            raise ValueError(
                "both event orders are valid; a random source is required"
            )
        ask_first = rng.random() < 0.5
    else:
        ask_first = ask_first_ok
    if ask_first:
        return [ask_move(), bid_move()]
    return [bid_move(), ask_move()]


@dataclass(frozen=True)
class EventStream:
    """An ordered session of quote-change events.

    Event times lie strictly inside ``(session_start, session_end]`` and are
    strictly increasing.  Replaying ``events`` from ``initial_state`` with
    :func:`apply_event` reproduces every ``state_after`` (checked by
    :meth:`validate`, which is O(n) and therefore opt-in).
    """

    session_start: float
    session_end: float
    tick: float
    initial_state: MarketState
    events: tuple[EventRecord, ...]
    meta: dict = field(default_factory=dict, compare=False, repr=False)
    _cache: dict = field(
        default_factory=dict, init=False, compare=False, repr=False
    )

    def __post_init__(self) -> None:
        object.__setattr__(self, "events", tuple(self.events))
        if not self.session_end > self.session_start:
            raise ValueError("session_end must exceed session_start")
        if not math.isclose(self.tick, self.initial_state.tick, rel_tol=1e-9):
            raise ValueError("stream tick differs from initial_state tick")
        prev_t = self.session_start
        for i, ev in enumerate(self.events):
            if not ev.t > prev_t:
                raise ValueError(
                    f"event {i} at t={ev.t} is not after its predecessor ({prev_t})"
                )
            prev_t = ev.t
        if self.events and self.events[-1].t > self.session_end:
            raise ValueError("last event lies beyond session_end")

    def __len__(self) -> int:
        return len(self.events)

    @property
    def duration(self) -> float:
        return self.session_end - self.session_start

    def counts(self) -> dict[EventKind, int]:
        out = {k: 0 for k in EventKind}
        for ev in self.events:
            out[ev.kind] += 1
        return out

    def iter_transitions(self) -> Iterator[tuple[MarketState, EventRecord]]:
        """Yield (state_before, event) pairs along the stream."""
        state = self.initial_state
        for ev in self.events:
            yield state, ev
            state = ev.state_after

    def validate(self) -> None:
        """Replay every event and check state consistency and L >= 0."""
        for state, ev in self.iter_transitions():
            expected = apply_event(state, ev.kind, ev.delta)
            if expected != ev.state_after:
                raise ValueError(
                    f"event at t={ev.t}: state_after does not match replay "
                    f"({expected} != {ev.state_after})"
                )
            if ev.state_after.L < 0:
                raise ValueError(f"event at t={ev.t} drives L below 0")

    def replace_meta(self, **kv: str) -> "EventStream":
        merged = dict(self.meta)
        merged.update(kv)
        return EventStream(
            self.session_start,
            self.session_end,
            self.tick,
            self.initial_state,
            self.events,
            meta=merged,
        )


def build_stream(
    session_start: float,
    session_end: float,
    initial_state: MarketState,
    moves: Sequence[tuple[float, EventKind, int]],
    meta: dict | None = None,
) -> EventStream:
    """Construct a stream from (t, kind, delta) moves, deriving each state.

    Convenience for tests and ingestion; states are produced by folding
    :func:`apply_event`, so the result satisfies the replay invariant by
    construction.
    """
    state = initial_state
    events = []
    for t, kind, delta in moves:
        state = apply_event(state, kind, delta)
        events.append(EventRecord(t, kind, delta, state))
    return EventStream(
        session_start,
        session_end,
        initial_state.tick,
        initial_state,
        tuple(events),
        meta=dict(meta or {}),
    )
