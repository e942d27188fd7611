"""Spread-dependent Hawkes models of best bid/ask price dynamics.

A four-process self-exciting model of ask-up, ask-down, bid-up and
bid-down price moves in which the spread enters the base intensity of
the narrowing processes and every narrowing event resets their
excitement to a level proportional to the remaining relative spread.
The package covers simulation, maximum-likelihood estimation, model
variants for information-criterion comparison, time-change residual
diagnostics and quote-data preprocessing, behind both a library API and
the ``spreadhawkes`` command line tool.
"""

from .core import (
    DEFAULT_TICK,
    EventKind,
    EventRecord,
    EventStream,
    LockedCrossedError,
    MarketState,
    apply_event,
    build_stream,
    classify_transition,
)
from .intensity import (
    IntensityState,
    ModelVariant,
    ParamSet,
    StabilityWarning,
    compensator,
    intensity_at,
    on_event,
    replay,
)
from .likelihood import aic, bic, log_likelihood
from .estimator import FitConfig, FitReport, fit
from .simulator import SimConfig, SimulationError, SpreadPath, simulate, simulate_spread_only
from .diagnostics import (
    alpha_bar,
    ks_critical,
    ks_statistic,
    liquidity_ratio,
    qq_points,
    residuals,
    stability_report,
)
from . import _kernels

__version__ = "0.1.0"


def kernel_backend() -> str:
    """Which kernel backend is active: 'compiled' or 'python'."""
    return _kernels.BACKEND


__all__ = [
    "DEFAULT_TICK",
    "EventKind",
    "EventRecord",
    "EventStream",
    "LockedCrossedError",
    "MarketState",
    "apply_event",
    "build_stream",
    "classify_transition",
    "IntensityState",
    "ModelVariant",
    "ParamSet",
    "StabilityWarning",
    "compensator",
    "intensity_at",
    "on_event",
    "replay",
    "aic",
    "bic",
    "log_likelihood",
    "FitConfig",
    "FitReport",
    "fit",
    "SimConfig",
    "SimulationError",
    "SpreadPath",
    "simulate",
    "simulate_spread_only",
    "alpha_bar",
    "ks_critical",
    "ks_statistic",
    "liquidity_ratio",
    "qq_points",
    "residuals",
    "stability_report",
    "kernel_backend",
    "__version__",
]
