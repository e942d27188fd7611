"""Intensity state machine for the quote model and its variants.

The model drives four counting processes (ask up/down, bid up/down) whose
intensities are a spread-dependent base plus exponentially decaying
excitement.  The defining feature is the narrowing-side update: after any
spread-narrowing event the excitement of both narrowing processes is reset
to xi * ell(t+), which cancels all accumulated excitement, keeps every
intensity nonnegative, and pins the narrowing intensities to exactly zero
at the minimum spread.

Two layers live here:

* :class:`IntensityState` — a readable, value-semantics state machine used
  for spot evaluation and as the reference in property tests;
* :func:`lower_stream` / :func:`compile_pack` / :func:`replay` — the array
  form consumed by the sequential kernels (compiled or pure Python), which
  likelihood, diagnostics, and estimation run on.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field, fields, replace
from typing import Sequence

import numpy as np

from . import _kernels
from .core import EventKind, EventStream, MarketState, apply_event

__all__ = [
    "ModelVariant",
    "ParamSet",
    "IntensityState",
    "StabilityWarning",
    "intensity_at",
    "on_event",
    "compensator",
    "replay",
    "ReplayResult",
    "compile_pack",
    "lower_stream",
    "KernelPack",
]

PARAM_FLOOR = 1e-12  # optimizer floor; also the "is xi zero" threshold


class StabilityWarning(UserWarning):
    """alpha_s1 + alpha_s2 + alpha_m >= beta: mean-reversion not guaranteed."""


class ModelVariant(enum.Enum):
    """Model family selector; the value doubles as the CLI token."""

    PROPOSED = "proposed"
    BASIC_HAWKES = "basic"
    EXTENDED_I = "ext1"
    EXTENDED_II = "ext2"
    EXTENDED_III = "ext3"
    EXTENDED_IV = "ext4"
    EXTENDED_V = "ext5"
    CONSTANT_BASE = "constant"
    SPREAD_ONLY = "spread_only"

    @classmethod
    def from_token(cls, token: str) -> "ModelVariant":
        token = token.strip().lower()
        for v in cls:
            if v.value == token:
                return v
        raise ValueError(
            f"unknown variant {token!r}; expected one of "
            + ", ".join(v.value for v in cls)
        )

    @property
    def param_names(self) -> tuple[str, ...]:
        return _PARAM_NAMES[self]

    @property
    def k(self) -> int:
        """Number of free parameters (the k of AIC/BIC)."""
        return len(_PARAM_NAMES[self])

    @property
    def fittable(self) -> bool:
        """SPREAD_ONLY is a 2-process reduction and cannot be fitted to
        4-kind event streams."""
        return self is not ModelVariant.SPREAD_ONLY


_CORE9 = (
    "mu",
    "eta",
    "alpha_s1",
    "alpha_s2",
    "alpha_m",
    "alpha_w1",
    "alpha_w2",
    "beta",
    "xi",
)
_ALPHA_FULL_NAMES = tuple(
    f"alpha_{i}{j}" for i in range(1, 5) for j in range(1, 5)
)

_PARAM_NAMES: dict[ModelVariant, tuple[str, ...]] = {
    ModelVariant.PROPOSED: _CORE9,
    ModelVariant.BASIC_HAWKES: ("mu",) + _ALPHA_FULL_NAMES + ("beta",),
    ModelVariant.EXTENDED_I: _CORE9 + ("alpha_14", "alpha_41"),
    ModelVariant.EXTENDED_II: (
        "mu_1",
        "mu_4",
        "eta_1",
        "eta_2",
        "eta_3",
        "eta_4",
        "alpha_s1",
        "alpha_s2",
        "alpha_m",
        "alpha_w1",
        "alpha_w2",
        "beta",
        "xi",
    ),
    ModelVariant.EXTENDED_III: _CORE9[:8] + ("xi_1", "xi_2", "xi_3", "xi_4"),
    ModelVariant.EXTENDED_IV: _CORE9[:7]
    + ("beta_1", "beta_2", "beta_3", "beta_4", "xi"),
    ModelVariant.EXTENDED_V: _CORE9[:7]
    + ("beta_1", "beta_2", "beta_3", "beta_4", "xi"),
    ModelVariant.CONSTANT_BASE: _CORE9,
    ModelVariant.SPREAD_ONLY: _CORE9,
}


@dataclass(frozen=True)
class ParamSet:
    """Model parameters.

    The nine core fields parameterize the proposed model (rates are per
    second; ``eta`` multiplies the relative level; ``xi`` is the reset
    slope).  The optional fields extend it for the other variants: the full
    4x4 excitation matrix (basic Hawkes), the corner terms (extended I),
    per-process bases (II), per-reset slopes (III), and per-column or
    per-row decay rates (IV/V).  Unused extensions stay None.
    """

    mu: float = 0.0
    eta: float = 0.0
    alpha_s1: float = 0.0
    alpha_s2: float = 0.0
    alpha_m: float = 0.0
    alpha_w1: float = 0.0
    alpha_w2: float = 0.0
    beta: float = 0.0
    xi: float = 0.0
    alpha_full: tuple[float, ...] | None = None  # 16 entries, row-major
    alpha_14: float | None = None
    alpha_41: float | None = None
    mu_1: float | None = None
    mu_4: float | None = None
    eta_1: float | None = None
    eta_2: float | None = None
    eta_3: float | None = None
    eta_4: float | None = None
    xi_1: float | None = None
    xi_2: float | None = None
    xi_3: float | None = None
    xi_4: float | None = None
    beta_1: float | None = None
    beta_2: float | None = None
    beta_3: float | None = None
    beta_4: float | None = None

    def get(self, name: str) -> float:
        # alpha_ij names resolve to the full matrix when present; alpha_14
        # and alpha_41 double as the extended-I corner fields otherwise.
        if (
            name.startswith("alpha_")
            and len(name) == 8
            and name[6:].isdigit()
            and self.alpha_full is not None
        ):
            i, j = int(name[6]), int(name[7])
            return self.alpha_full[(i - 1) * 4 + (j - 1)]
        value = getattr(self, name, None)
        if value is None:
            raise ValueError(f"parameter {name} is not set")
        return float(value)

    def as_vector(self, variant: ModelVariant) -> np.ndarray:
        return np.array([self.get(n) for n in variant.param_names], dtype=float)

    @classmethod
    def from_vector(
        cls, variant: ModelVariant, values: Sequence[float]
    ) -> "ParamSet":
        names = variant.param_names
        if len(values) != len(names):
            raise ValueError(
                f"{variant.value} takes {len(names)} parameters, got {len(values)}"
            )
        if variant is ModelVariant.BASIC_HAWKES:
            return cls(
                mu=float(values[0]),
                alpha_full=tuple(float(v) for v in values[1:17]),
                beta=float(values[17]),
            )
        return cls(**{n: float(v) for n, v in zip(names, values)})

    def validate(self, variant: ModelVariant) -> None:
        """Check completeness and sign constraints for ``variant``.

        All parameters must be >= 0 and every decay rate > 0 (the
        compensator divides by it).  Violation of the mean-reversion
        condition alpha_s1 + alpha_s2 + alpha_m < beta only warns: the
        provision-side parameters legitimately exceed beta on real data.
        """
        vec = self.as_vector(variant)  # raises on missing fields
        names = variant.param_names
        for name, value in zip(names, vec):
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"parameter {name} must be >= 0, got {value}")
            if name.startswith("beta") and value <= 0:
                raise ValueError(f"decay rate {name} must be > 0, got {value}")
        if variant is not ModelVariant.BASIC_HAWKES:
            depletion = self.alpha_s1 + self.alpha_s2 + self.alpha_m
            beta_min = min(self.get(n) for n in names if n.startswith("beta"))
            if depletion >= beta_min:
                warnings.warn(
                    f"alpha_s1+alpha_s2+alpha_m = {depletion:g} >= beta = "
                    f"{beta_min:g}; spread mean reversion is not guaranteed",
                    StabilityWarning,
                    stacklevel=2,
                )

    @property
    def xi_at_floor(self) -> bool:
        return self.xi <= PARAM_FLOOR

    def to_dict(self, variant: ModelVariant) -> dict[str, float]:
        return {n: self.get(n) for n in variant.param_names}

    def replace(self, **kv) -> "ParamSet":
        return replace(self, **kv)


# --- kernel lowering ---------------------------------------------------------

RESET_NONE = 0  # basic Hawkes: narrowing events add like any other
RESET_LINEAR = 1  # E_2, E_3 := xi * ell(t+) after every narrowing event
RESET_CONSTANT = 2  # E_2, E_3 += xi if L(t+) > 0 else := 0


@dataclass(frozen=True)
class KernelPack:
    """Array form of (params, variant) consumed by the sweep kernels.

    ``A[i][j]`` is the additive excitement jump to target i from a source-j
    event; for reset-bearing variants the narrowing-target entries of
    narrowing columns are zero because the reset replaces them.  Row decay
    keeps one accumulator per target (all kernels into a target share a
    rate); column decay (extended IV) keeps one per (target, source).
    """

    col_decay: bool
    base_indicator: bool
    mu4: np.ndarray
    eta4: np.ndarray
    A: np.ndarray
    reset_mode: int
    xi_mat: np.ndarray
    beta_row: np.ndarray
    beta_col: np.ndarray

    def base(self, state: MarketState) -> np.ndarray:
        g = (1.0 if state.L > 0 else 0.0) if self.base_indicator else state.ell
        return self.mu4 + self.eta4 * g


def compile_pack(params: ParamSet, variant: ModelVariant) -> KernelPack:
    """Lower a parameter set to the generic kernel arrays."""
    if variant is ModelVariant.SPREAD_ONLY:
        raise ValueError(
            "spread_only is a two-process reduction; use simulate_spread_only"
        )
    p = params
    col_decay = variant is ModelVariant.EXTENDED_IV
    base_indicator = variant is ModelVariant.CONSTANT_BASE
    reset_mode = RESET_LINEAR
    xi = np.full((2, 2), p.xi, dtype=float)

    if variant is ModelVariant.BASIC_HAWKES:
        if p.alpha_full is None or len(p.alpha_full) != 16:
            raise ValueError("basic Hawkes requires a 16-entry alpha_full")
        A = np.array(p.alpha_full, dtype=float).reshape(4, 4)
        mu4 = np.full(4, p.mu)
        eta4 = np.zeros(4)
        reset_mode = RESET_NONE
    else:
        A = np.array(
            [
                [p.alpha_s1, p.alpha_m, p.alpha_s2, 0.0],
                [p.alpha_w1, 0.0, 0.0, p.alpha_w2],
                [p.alpha_w2, 0.0, 0.0, p.alpha_w1],
                [0.0, p.alpha_s2, p.alpha_m, p.alpha_s1],
            ]
        )
        mu4 = np.array([p.mu, 0.0, 0.0, p.mu])
        eta4 = np.array([0.0, p.eta, p.eta, 0.0])
        if variant is ModelVariant.EXTENDED_I:
            A[0, 3] = p.get("alpha_14")
            A[3, 0] = p.get("alpha_41")
        elif variant is ModelVariant.EXTENDED_II:
            mu4 = np.array([p.get("mu_1"), 0.0, 0.0, p.get("mu_4")])
            eta4 = np.array([p.get(f"eta_{i}") for i in range(1, 5)])
        elif variant is ModelVariant.EXTENDED_III:
            # xi_mat[target 2|3][source AskDown|BidUp]
            xi = np.array(
                [
                    [p.get("xi_1"), p.get("xi_2")],
                    [p.get("xi_3"), p.get("xi_4")],
                ]
            )
        elif variant is ModelVariant.CONSTANT_BASE:
            reset_mode = RESET_CONSTANT

    if variant in (ModelVariant.EXTENDED_IV, ModelVariant.EXTENDED_V):
        betas = np.array([p.get(f"beta_{i}") for i in range(1, 5)])
    else:
        betas = np.full(4, p.beta)
    if np.any(betas <= 0):
        raise ValueError("decay rates must be > 0")

    # Force float64 everywhere: parameter values may arrive as Python ints.
    f64 = lambda a: np.ascontiguousarray(a, dtype=np.float64)
    return KernelPack(
        col_decay=col_decay,
        base_indicator=base_indicator,
        mu4=f64(mu4),
        eta4=f64(eta4),
        A=f64(A),
        reset_mode=reset_mode,
        xi_mat=f64(xi),
        beta_row=f64(betas),
        beta_col=f64(betas),
    )


@dataclass(frozen=True)
class LoweredStream:
    """Per-event arrays for the kernels; times shifted to a 0 origin."""

    t: np.ndarray  # (n,) float64, strictly increasing, > 0
    kind: np.ndarray  # (n,) int32
    ell_after: np.ndarray  # (n,) float64, relative level after each event
    lpos_after: np.ndarray  # (n,) float64, 1.0 where L > 0 after the event
    ell0: float
    lpos0: float
    T: float  # session length

    @property
    def n(self) -> int:
        return len(self.t)


def lower_stream(stream: EventStream) -> LoweredStream:
    """Extract (and cache) the kernel arrays for a stream."""
    cached = stream._cache.get("lowered")
    if cached is not None:
        return cached
    n = len(stream)
    t = np.empty(n)
    kind = np.empty(n, dtype=np.int32)
    ell_after = np.empty(n)
    lpos_after = np.empty(n)
    for i, ev in enumerate(stream.events):
        t[i] = ev.t - stream.session_start
        kind[i] = ev.kind.value
        ell_after[i] = ev.state_after.ell
        lpos_after[i] = 1.0 if ev.state_after.L > 0 else 0.0
    s0 = stream.initial_state
    lowered = LoweredStream(
        t=t,
        kind=kind,
        ell_after=ell_after,
        lpos_after=lpos_after,
        ell0=s0.ell,
        lpos0=1.0 if s0.L > 0 else 0.0,
        T=stream.duration,
    )
    stream._cache["lowered"] = lowered
    return lowered


# --- value-semantics state machine -------------------------------------------


@dataclass(frozen=True)
class IntensityState:
    """Sufficient statistics of the intensity process at one instant.

    ``E`` holds the decayed excitement accumulators just after ``t_current``
    (a 4-vector under row decay, a 4x4 target-by-source matrix under column
    decay); ``state`` supplies the spread level entering the bases.  The
    triple (t, E, market state) is Markov-sufficient: replaying a suffix
    from it equals replaying the whole history.
    """

    params: ParamSet
    variant: ModelVariant
    state: MarketState
    t_current: float = 0.0
    E: np.ndarray | None = None
    pack: KernelPack = field(init=False, compare=False, repr=False)

    def __post_init__(self) -> None:
        pack = compile_pack(self.params, self.variant)
        object.__setattr__(self, "pack", pack)
        if self.E is None:
            shape = (4, 4) if pack.col_decay else (4,)
            object.__setattr__(self, "E", np.zeros(shape))
        else:
            E = np.asarray(self.E, dtype=float)
            expected = (4, 4) if pack.col_decay else (4,)
            if E.shape != expected:
                raise ValueError(f"E must have shape {expected}, got {E.shape}")
            object.__setattr__(self, "E", E.copy())

    def _decayed(self, dt: float) -> np.ndarray:
        if dt < 0:
            raise ValueError("cannot evaluate before t_current")
        if self.pack.col_decay:
            return self.E * np.exp(-self.pack.beta_col * dt)[None, :]
        return self.E * np.exp(-self.pack.beta_row * dt)

    def excitement_at(self, t: float) -> np.ndarray:
        """Per-target excitement sums at time t (no events in between)."""
        E = self._decayed(t - self.t_current)
        return E.sum(axis=1) if self.pack.col_decay else E

    def intensity_at(self, t: float) -> np.ndarray:
        """Left-continuous intensities (lambda_1..lambda_4) at time t."""
        return self.pack.base(self.state) + self.excitement_at(t)

    def compensator(self, t0: float, t1: float) -> np.ndarray:
        """Integrated intensities over (t0, t1], event-free, in closed form."""
        if not (t1 >= t0 >= self.t_current):
            raise ValueError("need t_current <= t0 <= t1")
        dt = t1 - t0
        base = self.pack.base(self.state)
        if self.pack.col_decay:
            E0 = self.E * np.exp(-self.pack.beta_col * (t0 - self.t_current))[None, :]
            decay_w = -np.expm1(-self.pack.beta_col * dt) / self.pack.beta_col
            return base * dt + E0 @ decay_w
        E0 = self._decayed(t0 - self.t_current)
        decay_w = -np.expm1(-self.pack.beta_row * dt) / self.pack.beta_row
        return base * dt + E0 * decay_w

    def on_event(self, kind: EventKind, delta: int, t: float | None = None) -> "IntensityState":
        """Advance to an event at time t and apply its jump/reset updates.

        Widening events (and every event under basic Hawkes) add their
        column of the excitation matrix.  Narrowing events additionally
        reset the two narrowing-side accumulators from the post-event
        level; under column decay the reset zeroes all of a target's
        accumulators and reseeds the triggering source's slot, which is the
        unique assignment preserving both the reset identity and
        nonnegativity when decay rates differ.
        """
        t = self.t_current if t is None else t
        E = self._decayed(t - self.t_current)
        pack = self.pack
        new_state = apply_event(self.state, kind, delta)
        k = kind.value
        if pack.col_decay:
            E[:, k] += pack.A[:, k]
        else:
            E += pack.A[:, k]
        if pack.reset_mode != RESET_NONE and kind.narrowing:
            src = 0 if kind is EventKind.ASK_DOWN else 1
            if pack.reset_mode == RESET_LINEAR:
                values = pack.xi_mat[:, src] * new_state.ell
                if pack.col_decay:
                    E[1, :] = 0.0
                    E[2, :] = 0.0
                    E[1, k] = values[0]
                    E[2, k] = values[1]
                else:
                    E[1] = values[0]
                    E[2] = values[1]
            else:  # RESET_CONSTANT
                if new_state.L > 0:
                    if pack.col_decay:
                        E[1, k] += pack.xi_mat[0, src]
                        E[2, k] += pack.xi_mat[1, src]
                    else:
                        E[1] += pack.xi_mat[0, src]
                        E[2] += pack.xi_mat[1, src]
                else:
                    if pack.col_decay:
                        E[1, :] = 0.0
                        E[2, :] = 0.0
                    else:
                        E[1] = 0.0
                        E[2] = 0.0
        return IntensityState(
            params=self.params,
            variant=self.variant,
            state=new_state,
            t_current=t,
            E=E,
        )


def intensity_at(state: IntensityState, t: float) -> np.ndarray:
    return state.intensity_at(t)


def on_event(state: IntensityState, kind: EventKind, delta: int, t: float | None = None) -> IntensityState:
    return state.on_event(kind, delta, t)


def compensator(state: IntensityState, t0: float, t1: float) -> np.ndarray:
    return state.compensator(t0, t1)


# --- whole-stream sweep -------------------------------------------------------


@dataclass(frozen=True)
class ReplayResult:
    """Sequential sweep output over one stream.

    ``lam`` holds the left-limit own-process intensity at each event;
    ``compensators`` row j holds the four integrals over the inter-event
    interval ending at event j, with row n the tail out to session end.
    """

    lam: np.ndarray  # (n,)
    compensators: np.ndarray  # (n+1, 4)

    def total_compensator(self) -> np.ndarray:
        return self.compensators.sum(axis=0)


def replay(
    stream: EventStream, params: ParamSet, variant: ModelVariant = ModelVariant.PROPOSED
) -> ReplayResult:
    """Run the intensity sweep over a stream at fixed parameters.

    Raises RuntimeError if any intensity evaluates negative; that cannot
    happen for valid parameters and indicates an internal inconsistency.
    Zero own-event intensities are legal here (the likelihood layer flags
    them).
    """
    params.validate(variant)
    pack = compile_pack(params, variant)
    low = lower_stream(stream)
    lam, comp, status, bad = _kernels.impl.replay(
        low.t,
        low.kind,
        low.ell_after,
        low.lpos_after,
        low.ell0,
        low.lpos0,
        low.T,
        pack.col_decay,
        pack.base_indicator,
        pack.mu4,
        pack.eta4,
        pack.A,
        pack.reset_mode,
        pack.xi_mat,
        pack.beta_row,
    )
    if status == 2:
        raise RuntimeError(
            f"negative intensity at event {bad}: internal model violation"
        )
    return ReplayResult(lam=lam, compensators=comp)
