"""Log-likelihood correctness against a hand-assembled oracle."""

import math

import numpy as np
import pytest

import spreadhawkes.likelihood as lik
from spreadhawkes.core import EventKind, MarketState, build_stream
from spreadhawkes.intensity import ModelVariant, ParamSet, replay
from spreadhawkes.likelihood import FlaggedNegInf, aic, bic, log_likelihood

P = ParamSet(
    mu=0.08, eta=0.1, alpha_s1=4.0, alpha_s2=26.0, alpha_m=5.0,
    alpha_w1=11.0, alpha_w2=7.0, beta=2.0, xi=2.7,
)


def two_event_stream(shift=0.0):
    return build_stream(
        0.0 + shift,
        2.0 + shift,
        MarketState(100.00, 100.03),  # L = 2
        [
            (0.7 + shift, EventKind.ASK_UP, 1),   # -> L = 3
            (1.3 + shift, EventKind.ASK_DOWN, 1),  # -> L = 2, reset
        ],
    )


def hand_loglik():
    """Assemble the two-event log-likelihood term by term from scratch.

    Deliberately spelled out with scalar math so it shares nothing with
    the kernel implementation.
    """
    mu, eta, beta, xi = 0.08, 0.1, 2.0, 2.7
    A = [
        [4.0, 5.0, 26.0, 0.0],
        [11.0, 0.0, 0.0, 7.0],
        [7.0, 0.0, 0.0, 11.0],
        [0.0, 26.0, 5.0, 4.0],
    ]
    ell0 = 2 / ((100.00 + 100.03) / 2)
    ell1 = 3 / ((100.00 + 100.04) / 2)
    ell2 = 2 / ((100.00 + 100.03) / 2)

    def bases(ell):
        return [mu, eta * ell, eta * ell, mu]

    ll = 0.0
    # interval (0, 0.7]: no excitement yet
    for b in bases(ell0):
        ll -= b * 0.7
    ll += math.log(mu)  # AskUp at 0.7
    E = [A[i][0] for i in range(4)]
    # interval (0.7, 1.3]
    w = (1.0 - math.exp(-beta * 0.6)) / beta
    for i, b in enumerate(bases(ell1)):
        ll -= b * 0.6 + E[i] * w
    lam2 = eta * ell1 + E[1] * math.exp(-beta * 0.6)
    ll += math.log(lam2)  # AskDown at 1.3
    E = [E[i] * math.exp(-beta * 0.6) + A[i][1] for i in range(4)]
    E[1] = xi * ell2
    E[2] = xi * ell2
    # tail (1.3, 2.0]
    w = (1.0 - math.exp(-beta * 0.7)) / beta
    for i, b in enumerate(bases(ell2)):
        ll -= b * 0.7 + E[i] * w
    return ll


class TestLogLikelihood:
    def test_two_event_oracle(self):
        got = log_likelihood(two_event_stream(), P)
        assert got == pytest.approx(hand_loglik(), rel=1e-12)

    def test_time_shift_invariance(self):
        base = log_likelihood(two_event_stream(), P)
        shifted = log_likelihood(two_event_stream(shift=500.0), P)
        assert shifted == pytest.approx(base, rel=1e-9)

    def test_consistent_with_replay(self, stream4k, row1):
        """Two kernel entry points, one model: sum(log lam) - sum(comp)."""
        ll = log_likelihood(stream4k, row1)
        result = replay(stream4k, row1)
        recon = float(
            np.sum(np.log(result.lam)) - result.compensators.sum()
        )
        assert ll == pytest.approx(recon, rel=1e-12)

    def test_returns_plain_float(self, stream4k, row1):
        value = log_likelihood(stream4k, row1)
        assert type(value) is float and math.isfinite(value)

    def test_invalid_params_raise(self, stream4k):
        with pytest.raises(ValueError):
            log_likelihood(stream4k, P.replace(mu=-0.1))


class TestFlaggedNegInf:
    def test_zero_intensity_event_flagged(self):
        # eta = 0 pins narrowing intensities at zero before any excitement,
        # so a stream opening with a narrowing event has likelihood zero
        stream = build_stream(
            0.0,
            2.0,
            MarketState(100.00, 100.03),
            [(0.5, EventKind.ASK_DOWN, 1), (1.0, EventKind.ASK_UP, 1)],
        )
        value = log_likelihood(stream, P.replace(eta=0.0))
        assert value == -math.inf
        assert isinstance(value, FlaggedNegInf)
        assert value.event_index == 0

    def test_behaves_like_neg_inf(self):
        v = FlaggedNegInf(3)
        assert v < -1e300
        assert v + 1 == -math.inf
        assert "3" in repr(v)

    def test_negative_intensity_escalates(self, stream4k, row1, monkeypatch):
        class Stub:
            @staticmethod
            def loglik(*a, **kw):
                return (math.nan, 2, 17)

        monkeypatch.setattr(lik._kernels, "impl", Stub())
        with pytest.raises(RuntimeError, match="17"):
            log_likelihood(stream4k, row1)


class TestInformationCriteria:
    def test_aic(self):
        assert aic(-100.0, 9) == 218.0

    def test_bic(self):
        assert bic(-100.0, 9, 1000) == pytest.approx(
            9 * math.log(1000) + 200.0, rel=1e-15
        )

    def test_bic_needs_events(self):
        with pytest.raises(ValueError):
            bic(-1.0, 2, 0)

    def test_extra_parameters_cost(self):
        # same fit quality, more parameters: both criteria must worsen
        assert aic(-50.0, 10) > aic(-50.0, 9)
        assert bic(-50.0, 10, 500) > bic(-50.0, 9, 500)
