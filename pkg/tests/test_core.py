"""Market-state arithmetic, event algebra, and stream invariants."""

import math

import numpy as np
import pytest

from spreadhawkes.core import (
    EventKind,
    EventRecord,
    EventStream,
    LockedCrossedError,
    MarketState,
    apply_event,
    build_stream,
    classify_transition,
)


class TestEventKind:
    def test_indices_and_processes(self):
        assert [k.value for k in EventKind] == [0, 1, 2, 3]
        assert [k.process_index for k in EventKind] == [1, 2, 3, 4]

    def test_widening_narrowing_partition(self):
        assert EventKind.ASK_UP.widening and EventKind.BID_DOWN.widening
        assert EventKind.ASK_DOWN.narrowing and EventKind.BID_UP.narrowing

    def test_token_round_trip(self):
        for k in EventKind:
            assert EventKind.from_token(k.token) is k
        assert EventKind.from_token(" Ask_Up ") is EventKind.ASK_UP
        with pytest.raises(ValueError):
            EventKind.from_token("sideways")


class TestMarketState:
    def test_snaps_to_grid(self):
        s = MarketState(100.004, 100.0199)  # nearest ticks: 100.00 / 100.02
        assert s.bid_ticks == 10000
        assert s.ask_ticks == 10002
        assert s.L == 1

    def test_ell_is_level_over_mid(self):
        s = MarketState(100.00, 100.03)
        assert s.L == 2
        assert s.ell == pytest.approx(2 / 100.015, rel=1e-15)

    def test_min_spread_has_level_zero(self):
        assert MarketState(100.00, 100.01).L == 0

    def test_rejects_locked_and_crossed(self):
        with pytest.raises(LockedCrossedError):
            MarketState(100.00, 100.00)
        with pytest.raises(LockedCrossedError):
            MarketState(100.02, 100.01)

    def test_rejects_nonpositive_prices(self):
        with pytest.raises(ValueError):
            MarketState(0.0, 100.01)

    def test_from_ticks_round_trip(self):
        s = MarketState.from_ticks(9_999, 10_003)
        assert (s.bid_ticks, s.ask_ticks) == (9_999, 10_003)
        assert s == MarketState(99.99, 100.03)

    def test_equality_is_exact_after_snapping(self):
        assert MarketState(100.00, 100.02) == MarketState(
            100.00000000001, 100.02
        )


class TestApplyEvent:
    def test_each_kind_moves_its_side(self):
        s = MarketState(100.00, 100.03)  # L=2
        assert apply_event(s, EventKind.ASK_UP, 1).ask_ticks == s.ask_ticks + 1
        assert apply_event(s, EventKind.ASK_DOWN, 2).ask_ticks == s.ask_ticks - 2
        assert apply_event(s, EventKind.BID_UP, 1).bid_ticks == s.bid_ticks + 1
        assert apply_event(s, EventKind.BID_DOWN, 3).bid_ticks == s.bid_ticks - 3

    def test_narrowing_past_min_spread_raises(self):
        s = MarketState(100.00, 100.02)  # L=1
        apply_event(s, EventKind.ASK_DOWN, 1)  # to L=0: fine
        with pytest.raises(LockedCrossedError):
            apply_event(s, EventKind.ASK_DOWN, 2)
        with pytest.raises(LockedCrossedError):
            apply_event(s, EventKind.BID_UP, 2)

    def test_delta_must_be_positive_integer(self):
        s = MarketState(100.00, 100.03)
        for bad in (0, -1, 1.5):
            with pytest.raises(ValueError):
                apply_event(s, EventKind.ASK_UP, bad)

    def test_bid_cannot_reach_zero(self):
        s = MarketState(0.01, 0.03, tick=0.01)
        with pytest.raises(ValueError):
            apply_event(s, EventKind.BID_DOWN, 1)

    def test_tick_mismatch_raises(self):
        s = MarketState(100.00, 100.03)
        with pytest.raises(ValueError):
            apply_event(s, EventKind.ASK_UP, 1, tick=0.05)


class TestClassifyTransition:
    def test_single_side_moves(self):
        a = MarketState(100.00, 100.03)
        assert classify_transition(a, MarketState(100.00, 100.05)) == [
            (EventKind.ASK_UP, 2)
        ]
        assert classify_transition(a, MarketState(99.98, 100.03)) == [
            (EventKind.BID_DOWN, 2)
        ]

    def test_no_change_raises(self):
        a = MarketState(100.00, 100.03)
        with pytest.raises(ValueError):
            classify_transition(a, a)

    def test_forced_order_avoids_crossing(self):
        # bid and ask both jump above the old ask: ask must move first.
        a = MarketState(100.00, 100.02)
        b = MarketState(100.03, 100.05)
        moves = classify_transition(a, b)
        assert moves == [(EventKind.ASK_UP, 3), (EventKind.BID_UP, 3)]
        # mirror image: both collapse below the old bid, bid must move first
        moves = classify_transition(b, a)
        assert moves == [(EventKind.BID_DOWN, 3), (EventKind.ASK_DOWN, 3)]

    def test_ambiguous_order_requires_rng(self):
        a = MarketState(100.00, 100.03)
        b = MarketState(100.01, 100.04)
        with pytest.raises(ValueError):
            classify_transition(a, b)

    def test_ambiguous_order_uses_rng_and_hits_both(self):
        a = MarketState(100.00, 100.03)
        b = MarketState(100.01, 100.04)
        seen = set()
        rng = np.random.default_rng(3)
        for _ in range(64):
            moves = classify_transition(a, b, rng=rng)
            assert {m[0] for m in moves} == {EventKind.ASK_UP, EventKind.BID_UP}
            seen.add(moves[0][0])
        assert seen == {EventKind.ASK_UP, EventKind.BID_UP}

    def test_intermediate_state_always_valid(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            bid_a = int(rng.integers(9_990, 10_010))
            ask_a = bid_a + int(rng.integers(1, 6))
            bid_b = int(rng.integers(9_990, 10_010))
            ask_b = bid_b + int(rng.integers(1, 6))
            a = MarketState.from_ticks(bid_a, ask_a)
            b = MarketState.from_ticks(bid_b, ask_b)
            if a == b:
                continue
            state = a
            for kind, delta in classify_transition(a, b, rng=rng):
                state = apply_event(state, kind, delta)  # raises if invalid
            assert state == b


class TestEventStream:
    def make(self, times):
        state = MarketState(100.00, 100.02)
        events = []
        for t in times:
            state = apply_event(state, EventKind.ASK_UP, 1)
            events.append(EventRecord(t, EventKind.ASK_UP, 1, state))
        return EventStream(0.0, 10.0, 0.01, MarketState(100.00, 100.02), tuple(events))

    def test_duration_counts_and_len(self):
        s = self.make([1.0, 2.0, 3.0])
        assert len(s) == 3
        assert s.duration == 10.0
        assert s.counts()[EventKind.ASK_UP] == 3
        assert s.counts()[EventKind.BID_UP] == 0

    def test_times_must_increase_strictly(self):
        with pytest.raises(ValueError):
            self.make([1.0, 1.0])
        with pytest.raises(ValueError):
            self.make([2.0, 1.0])

    def test_event_at_session_start_rejected(self):
        with pytest.raises(ValueError):
            self.make([0.0, 1.0])

    def test_event_beyond_session_end_rejected(self):
        with pytest.raises(ValueError):
            self.make([1.0, 11.0])

    def test_last_event_exactly_at_end_allowed(self):
        s = self.make([1.0, 10.0])
        assert s.events[-1].t == 10.0

    def test_validate_catches_inconsistent_state(self):
        s = self.make([1.0, 2.0])
        bad = EventStream(
            s.session_start,
            s.session_end,
            s.tick,
            s.initial_state,
            (
                s.events[0],
                EventRecord(2.0, EventKind.ASK_UP, 1, s.events[0].state_after),
            ),
        )
        with pytest.raises(ValueError):
            bad.validate()

    def test_meta_not_part_of_equality(self):
        s = self.make([1.0])
        assert s.replace_meta(source="x") == s
        assert s.replace_meta(source="x").meta["source"] == "x"

    def test_iter_transitions_pairs_states(self):
        s = self.make([1.0, 2.0])
        pairs = list(s.iter_transitions())
        assert pairs[0][0] == s.initial_state
        assert pairs[1][0] == s.events[0].state_after


class TestBuildStream:
    def test_states_derived_by_folding(self):
        s = build_stream(
            0.0,
            5.0,
            MarketState(100.00, 100.02),
            [
                (1.0, EventKind.ASK_UP, 1),
                (2.0, EventKind.BID_UP, 1),
                (3.5, EventKind.ASK_DOWN, 1),
            ],
        )
        s.validate()
        assert s.events[0].state_after == MarketState(100.00, 100.03)
        assert s.events[1].state_after == MarketState(100.01, 100.03)
        assert s.events[2].state_after == MarketState(100.01, 100.02)

    def test_invalid_move_propagates(self):
        with pytest.raises(LockedCrossedError):
            build_stream(
                0.0,
                5.0,
                MarketState(100.00, 100.02),
                [(1.0, EventKind.BID_UP, 2)],
            )
