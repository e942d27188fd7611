"""Exact log-likelihood of an event stream and information criteria.

The log-likelihood of a multivariate point process with intensities
lambda_i over (0, T] is

    sum_i [ sum_{events j of type i} log lambda_i(t_j-) - Lambda_i(0, T) ]

with the integrated intensity Lambda_i available in closed form for
exponential kernels, so no quadrature is involved.  Intensities are
evaluated left-continuously (the event's own jump is excluded).
"""

from __future__ import annotations

import math

from . import _kernels
from .core import EventStream
from .intensity import ModelVariant, ParamSet, compile_pack, lower_stream


class FlaggedNegInf(float):
    """-inf log-likelihood carrying the index of the offending event.

    Produced when some event has exactly zero intensity under the given
    parameters (e.g. a narrowing event recorded while the spread was at
    its floor under a variant that pins those intensities to zero).
    Compares and arithmetics like ``float('-inf')``.
    """

    event_index: int

    def __new__(cls, event_index: int) -> "FlaggedNegInf":
        obj = super().__new__(cls, -math.inf)
        obj.event_index = event_index
        return obj

    def __repr__(self) -> str:
        return f"FlaggedNegInf(event_index={self.event_index})"


def log_likelihood(
    stream: EventStream,
    params: ParamSet,
    variant: ModelVariant = ModelVariant.PROPOSED,
) -> float:
    """Exact log-likelihood of ``stream`` under ``params``.

    Returns a plain float, or a FlaggedNegInf (== -inf) naming the first
    event with zero intensity.  Raises ValueError if the parameters are
    invalid for the variant and RuntimeError if an intensity comes out
    negative, which indicates an internal inconsistency rather than a
    bad fit.
    """
    params.validate(variant)
    pack = compile_pack(params, variant)
    low = lower_stream(stream)
    value, status, bad = _kernels.impl.loglik(
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
            f"negative intensity at event {bad}; the excitement recursion "
            "is inconsistent with the parameter constraints"
        )
    if status == 1:
        return FlaggedNegInf(bad)
    return float(value)


def aic(loglik: float, k: int) -> float:
    """Akaike information criterion 2k - 2*loglik."""
    return 2.0 * k - 2.0 * loglik


def bic(loglik: float, k: int, n: int) -> float:
    """Bayesian information criterion k*ln(n) - 2*loglik.

    ``n`` is the total number of events across all four processes.
    """
    if n <= 0:
        raise ValueError("BIC needs at least one event")
    return k * math.log(n) - 2.0 * loglik


__all__ = ["FlaggedNegInf", "log_likelihood", "aic", "bic"]
