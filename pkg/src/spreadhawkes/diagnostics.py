"""Residual diagnostics, model-comparison helpers, and parameter analytics.

The time-change theorem says that integrating each process's intensity
between its own consecutive events turns the gaps into i.i.d. unit
exponentials when the model is right; Q-Q points and the KS distance
against Exp(1) quantify the fit.  The analytics summarize fitted
parameters: mean excitement, liquidity provision vs depletion, and the
mean-reversion stability of the implied spread dynamics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .core import EventStream
from .intensity import ModelVariant, ParamSet, replay

KS_COEFFICIENTS = {0.10: 1.22, 0.05: 1.36, 0.01: 1.63}


@dataclass(frozen=True)
class ResidualSet:
    """Time-change residuals grouped by process (EventKind order).

    Each process contributes the integrated intensity from session start
    to its first event, between its consecutive events, and - when the
    set is built with the censored tail - from its last event to session
    end.  With the tail included, the residuals of process i sum to its
    total compensator over the session.
    """

    per_process: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]

    def pooled(self) -> np.ndarray:
        return np.concatenate(self.per_process)

    def __len__(self) -> int:
        return sum(len(r) for r in self.per_process)

    def mean(self) -> float:
        return float(np.mean(self.pooled()))


def residuals(
    stream: EventStream,
    params: ParamSet,
    variant: ModelVariant = ModelVariant.PROPOSED,
    include_censored_tail: bool = True,
) -> ResidualSet:
    """Compute time-change residuals of a stream at given parameters.

    Every residual is an integral of one process's intensity between that
    process's consecutive events; events of other processes inside the
    interval contribute their excitement jumps to the integrand, handled
    by summing closed-form compensator pieces across the sub-intervals.
    The trailing piece (last own event to session end) is a censored
    residual; including it (default) makes the per-process residual sums
    match the total compensators.
    """
    result = replay(stream, params, variant)
    comp = result.compensators  # (n+1, 4)
    low_kind = np.fromiter(
        (ev.kind.value for ev in stream.events), dtype=np.int64, count=len(stream)
    )
    out = []
    for i in range(4):
        cs = np.cumsum(comp[:, i])
        own = np.where(low_kind == i)[0]
        if len(own) == 0:
            pieces = np.array([cs[-1]]) if include_censored_tail else np.empty(0)
            out.append(pieces)
            continue
        vals = np.empty(len(own) + (1 if include_censored_tail else 0))
        vals[0] = cs[own[0]]
        vals[1 : len(own)] = cs[own[1:]] - cs[own[:-1]]
        if include_censored_tail:
            vals[-1] = cs[-1] - cs[own[-1]]
        out.append(vals)
    return ResidualSet(per_process=tuple(out))


def qq_points(sample: Sequence[float] | np.ndarray) -> np.ndarray:
    """(theoretical, empirical) quantile pairs against Exp(1).

    Column 0 holds -log(1 - (j - 0.5)/n) at the plotting positions,
    column 1 the sorted sample.
    """
    x = np.sort(np.asarray(sample, dtype=float))
    n = len(x)
    if n == 0:
        raise ValueError("need a nonempty sample")
    p = (np.arange(1, n + 1) - 0.5) / n
    return np.column_stack((-np.log1p(-p), x))


def ks_statistic(sample: Sequence[float] | np.ndarray) -> float:
    """Kolmogorov-Smirnov distance sup |F_n - F| against Exp(1)."""
    x = np.sort(np.asarray(sample, dtype=float))
    n = len(x)
    if n == 0:
        raise ValueError("need a nonempty sample")
    cdf = -np.expm1(-x)
    upper = np.max(np.arange(1, n + 1) / n - cdf)
    lower = np.max(cdf - np.arange(0, n) / n)
    return float(max(upper, lower))


def ks_critical(n: int, level: float = 0.05) -> float:
    """Asymptotic KS critical value c(level)/sqrt(n).

    Supported levels: 0.10, 0.05, 0.01.  Residual dependence makes this a
    diagnostic heuristic, not an exact test.
    """
    if n <= 0:
        raise ValueError("need n > 0")
    try:
        coeff = KS_COEFFICIENTS[level]
    except KeyError:
        raise ValueError(f"level must be one of {sorted(KS_COEFFICIENTS)}")
    return coeff / math.sqrt(n)


def alpha_bar(params: ParamSet) -> float:
    """Mean of the five excitement parameters: overall responsiveness."""
    return (
        params.alpha_s1
        + params.alpha_s2
        + params.alpha_m
        + params.alpha_w1
        + params.alpha_w2
    ) / 5.0


class LiquidityRatio(NamedTuple):
    provision_mean: float  # (alpha_w1 + alpha_w2) / 2
    depletion_mean: float  # (alpha_s1 + alpha_s2 + alpha_m) / 3
    ratio: float | None  # depletion / provision, None when provision is 0


def liquidity_ratio(params: ParamSet) -> LiquidityRatio:
    """Mean liquidity-provision and -depletion excitements and their ratio."""
    provision = (params.alpha_w1 + params.alpha_w2) / 2.0
    depletion = (params.alpha_s1 + params.alpha_s2 + params.alpha_m) / 3.0
    ratio = None if provision == 0 else depletion / provision
    return LiquidityRatio(provision, depletion, ratio)


def moving_average(series: Sequence[float] | np.ndarray, window: int = 20) -> np.ndarray:
    """Trailing mean over ``window`` points; shorter prefixes average what
    is available, so the output has the input's length."""
    if window < 1:
        raise ValueError("window must be >= 1")
    x = np.asarray(series, dtype=float)
    cs = np.concatenate(([0.0], np.cumsum(x)))
    idx = np.arange(1, len(x) + 1)
    lo = np.maximum(idx - window, 0)
    return (cs[idx] - cs[lo]) / (idx - lo)


@dataclass(frozen=True)
class StabilityReport:
    """Mean-reversion diagnosis of the implied spread dynamics.

    ``trace`` and ``determinant`` refer to the drift matrix of the
    aggregated (intensity, level) system; the process mean-reverts when
    the trace is negative and the determinant positive, which for eta > 0
    is equivalent to alpha_s1 + alpha_s2 + alpha_m < beta.  Steady-state
    fields are None when unstable.
    """

    trace: float
    determinant: float
    stable: bool
    steady_state_L: float | None
    steady_state_rate: float | None

    def to_dict(self) -> dict:
        return {
            "trace": self.trace,
            "determinant": self.determinant,
            "stable": self.stable,
            "steady_state_L": self.steady_state_L,
            "steady_state_rate": self.steady_state_rate,
        }


def stability_report(params: ParamSet) -> StabilityReport:
    """Evaluate the spread-stability condition and steady-state levels.

    steady_state_rate is the long-run intensity of each aggregated spread
    process (2*beta*mu/(beta - alpha_s1 - alpha_s2 - alpha_m));
    steady_state_L divides it by 2*eta.
    """
    depletion = params.alpha_s1 + params.alpha_s2 + params.alpha_m
    trace = params.alpha_s1 - params.beta - 2.0 * params.eta
    det = 2.0 * params.eta * (params.beta - depletion)
    stable = trace < 0 and det > 0
    if stable:
        rate = 2.0 * params.beta * params.mu / (params.beta - depletion)
        level = params.beta * params.mu / (params.eta * (params.beta - depletion))
    else:
        rate = None
        level = None
    return StabilityReport(
        trace=trace,
        determinant=det,
        stable=stable,
        steady_state_L=level,
        steady_state_rate=rate,
    )


__all__ = [
    "ResidualSet",
    "residuals",
    "qq_points",
    "ks_statistic",
    "ks_critical",
    "alpha_bar",
    "LiquidityRatio",
    "liquidity_ratio",
    "moving_average",
    "StabilityReport",
    "stability_report",
]
