"""Exact simulation of the quote model by thinning.

The dominating rate is the current total intensity, refreshed at every
candidate.  That is a valid envelope because the total intensity never
increases between events: bases are constant while the book is still and
all excitement terms decay.  One uniform is drawn per decision (wait,
accept-and-attribute, jump size), and jump-size draws are skipped
entirely for single-atom tables, so simulations are reproducible
bit-for-bit across the compiled and pure-Python backends.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import _kernels
from .core import EventKind, EventRecord, EventStream, MarketState
from .intensity import ModelVariant, ParamSet, compile_pack

_STATUS_NAMES = {1: "exploded", 2: "stalled"}


class SimulationError(RuntimeError):
    """Simulation could not complete (explosion guard hit, or the target
    event count is unreachable because all intensities died out)."""


@dataclass(frozen=True)
class JumpTables:
    """Per-kind distributions of jump sizes in ticks.

    ``sizes[k]`` / ``probs[k]`` give the support and probabilities for
    event kind k (EventKind order).  Defaults to unit jumps everywhere,
    matching the model assumption that quotes move tick by tick.
    """

    sizes: tuple[tuple[int, ...], ...] = ((1,), (1,), (1,), (1,))
    probs: tuple[tuple[float, ...], ...] = ((1.0,), (1.0,), (1.0,), (1.0,))

    def __post_init__(self) -> None:
        if len(self.sizes) != 4 or len(self.probs) != 4:
            raise ValueError("need one size/prob table per event kind")
        for k in range(4):
            s, p = self.sizes[k], self.probs[k]
            if len(s) == 0 or len(s) != len(p):
                raise ValueError(f"kind {k}: sizes and probs must align")
            if any(int(x) != x or x < 1 for x in s):
                raise ValueError(f"kind {k}: jump sizes must be integers >= 1")
            if any(q <= 0 for q in p):
                raise ValueError(f"kind {k}: probabilities must be > 0")

    @classmethod
    def from_mapping(
        cls, per_kind: Mapping[EventKind, Mapping[int, float]]
    ) -> "JumpTables":
        """Build tables from {kind: {size: prob}}; omitted kinds jump 1."""
        sizes = []
        probs = []
        for k in range(4):
            table = per_kind.get(EventKind(k))
            if not table:
                sizes.append((1,))
                probs.append((1.0,))
                continue
            items = sorted(table.items())
            total = float(sum(q for _, q in items))
            sizes.append(tuple(int(s) for s, _ in items))
            probs.append(tuple(q / total for _, q in items))
        return cls(sizes=tuple(sizes), probs=tuple(probs))

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Padded (vals, cdf, len) arrays for the kernels."""
        m = max(len(s) for s in self.sizes)
        vals = np.ones((4, m), dtype=np.int64)
        cdf = np.ones((4, m), dtype=float)
        lens = np.empty(4, dtype=np.int64)
        for k in range(4):
            s, p = self.sizes[k], self.probs[k]
            lens[k] = len(s)
            vals[k, : len(s)] = s
            total = float(sum(p))
            acc = 0.0
            for i, q in enumerate(p):
                acc += q / total
                cdf[k, i] = acc
            cdf[k, len(s) - 1] = 1.0
        return vals, cdf, lens


@dataclass(frozen=True)
class SimConfig:
    """Simulation run settings.

    Exactly one of ``horizon`` (seconds of simulated time) or ``n_events``
    must be set.  In event-count mode the session ends at the last event.
    ``seed`` takes an int or a numpy Generator; guard limits abort runs
    whose intensities explode.
    """

    initial_state: MarketState
    horizon: float | None = None
    n_events: int | None = None
    seed: int | np.random.Generator | None = None
    jumps: JumpTables = field(default_factory=JumpTables)
    session_start: float = 0.0
    max_events: int = 10_000_000
    max_candidates: int | None = None

    def __post_init__(self) -> None:
        if (self.horizon is None) == (self.n_events is None):
            raise ValueError("set exactly one of horizon or n_events")
        if self.horizon is not None and self.horizon <= 0:
            raise ValueError("horizon must be > 0")
        if self.n_events is not None and self.n_events < 1:
            raise ValueError("n_events must be >= 1")
        if self.max_events < 1:
            raise ValueError("max_events must be >= 1")

    def make_rng(self) -> np.random.Generator:
        if isinstance(self.seed, np.random.Generator):
            return self.seed
        return np.random.default_rng(self.seed)

    def limits(self) -> tuple[int, int]:
        cap = self.max_events if self.n_events is None else min(
            self.n_events, self.max_events
        )
        max_cand = self.max_candidates
        if max_cand is None:
            max_cand = 1000 + 50 * cap
        return cap, max_cand


def simulate(
    params: ParamSet,
    config: SimConfig,
    variant: ModelVariant = ModelVariant.PROPOSED,
) -> EventStream:
    """Simulate the four-process model into an event stream.

    The returned stream's ``meta`` records the candidate count, the two
    clamp counters (jump sizes truncated at the spread floor or the price
    floor, and events discarded because no legal move remained), the seed
    behavior is whatever Generator state was passed in.  Raises
    SimulationError if a guard limit is hit or an event-count target is
    unreachable.
    """
    params.validate(variant)
    pack = compile_pack(params, variant)
    if config.initial_state.tick <= 0:
        raise ValueError("tick must be positive")
    rng = config.make_rng()
    vals, cdf, lens = config.jumps.arrays()
    cap, max_cand = config.limits()
    horizon = -1.0 if config.horizon is None else float(config.horizon)
    n_target = -1 if config.n_events is None else int(config.n_events)

    t, kind, delta, bid_t, ask_t, end_time, candidates, truncated, discarded, status = (
        _kernels.impl.simulate(
            pack.col_decay,
            pack.base_indicator,
            pack.mu4,
            pack.eta4,
            pack.A,
            pack.reset_mode,
            pack.xi_mat,
            pack.beta_row,
            config.initial_state.bid_ticks,
            config.initial_state.ask_ticks,
            config.initial_state.tick,
            horizon,
            n_target,
            vals,
            cdf,
            lens,
            cap,
            max_cand,
            rng,
        )
    )
    if status != 0:
        raise SimulationError(
            f"simulation {_STATUS_NAMES.get(status, status)} after "
            f"{len(t)} events and {candidates} candidates; "
            "check stability (alpha_s1+alpha_s2+alpha_m vs beta) or raise the guards"
        )
    if len(t) and not np.all(np.diff(t) > 0.0):
        raise SimulationError(
            "event times collided at float resolution; intensities are too "
            "large for a meaningful continuous-time path"
        )

    tick = config.initial_state.tick
    t0 = config.session_start
    events = []
    for i in range(len(t)):
        events.append(
            EventRecord(
                t=t0 + float(t[i]),
                kind=EventKind(int(kind[i])),
                delta=int(delta[i]),
                state_after=MarketState.from_ticks(
                    int(bid_t[i]), int(ask_t[i]), tick
                ),
            )
        )
    meta = {
        "variant": variant.value,
        "backend": _kernels.BACKEND,
        "n_candidates": int(candidates),
        "clamp_truncated": int(truncated),
        "clamp_discarded": int(discarded),
    }
    return EventStream(
        session_start=t0,
        session_end=t0 + float(end_time),
        tick=tick,
        initial_state=config.initial_state,
        events=tuple(events),
        meta=meta,
    )


@dataclass(frozen=True)
class SpreadPath:
    """A simulated path of the two-process spread reduction.

    ``sign`` is +1 for spread-up events and -1 for spread-down events;
    the level is piecewise constant starting at ``L0`` (ticks).
    """

    t: np.ndarray
    sign: np.ndarray
    L0: int
    T: float
    meta: dict

    def __len__(self) -> int:
        return len(self.t)

    @property
    def levels(self) -> np.ndarray:
        """Spread level in ticks just after each event."""
        return self.L0 + np.cumsum(self.sign, dtype=np.int64)

    def time_average_level(self) -> float:
        """Time average of the piecewise-constant level over (0, T]."""
        if self.T <= 0:
            raise ValueError("empty time span")
        knots = np.concatenate(([0.0], self.t, [self.T]))
        lev = np.concatenate(([self.L0], self.levels)).astype(float)
        return float(np.sum(lev * np.diff(knots)) / self.T)

    def event_rate(self, sign: int | None = None) -> float:
        """Events per second, optionally restricted to one direction."""
        if self.T <= 0:
            raise ValueError("empty time span")
        n = len(self.t) if sign is None else int(np.sum(self.sign == sign))
        return n / self.T


def simulate_spread_only(
    params: ParamSet,
    L0: int,
    horizon: float | None = None,
    n_events: int | None = None,
    seed: int | np.random.Generator | None = None,
    excite_down: bool = False,
    max_events: int = 10_000_000,
    max_candidates: int | None = None,
) -> SpreadPath:
    """Simulate the aggregated spread process.

    The upward (widening) intensity is 2*mu plus excitement fed by
    alpha_s1 per up event and alpha_s2 + alpha_m per down event; the
    downward intensity is 2*eta*L, plus, when ``excite_down`` is set,
    provision excitement (alpha_w1 + alpha_w2 per up event) that resets
    to xi * L after every down event.  Jumps are one tick.
    """
    params.validate(ModelVariant.SPREAD_ONLY)
    if (horizon is None) == (n_events is None):
        raise ValueError("set exactly one of horizon or n_events")
    if L0 < 0:
        raise ValueError("L0 must be >= 0")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    cap = max_events if n_events is None else min(n_events, max_events)
    if max_candidates is None:
        max_candidates = 1000 + 50 * cap
    t, sign, end_time, candidates, status = _kernels.impl.simulate_spread(
        params.mu,
        params.eta,
        params.alpha_s1,
        params.alpha_s2 + params.alpha_m,
        params.beta,
        excite_down,
        params.alpha_w1 + params.alpha_w2,
        params.xi,
        L0,
        -1.0 if horizon is None else float(horizon),
        -1 if n_events is None else int(n_events),
        cap,
        max_candidates,
        rng,
    )
    if status != 0:
        raise SimulationError(
            f"spread simulation {_STATUS_NAMES.get(status, status)} after "
            f"{len(t)} events and {candidates} candidates"
        )
    meta = {
        "backend": _kernels.BACKEND,
        "n_candidates": int(candidates),
        "excite_down": bool(excite_down),
    }
    return SpreadPath(t=t, sign=sign, L0=int(L0), T=float(end_time), meta=meta)


__all__ = [
    "JumpTables",
    "SimConfig",
    "SimulationError",
    "SpreadPath",
    "simulate",
    "simulate_spread_only",
]
