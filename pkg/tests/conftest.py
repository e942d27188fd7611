"""Shared fixtures: canonical parameter sets and cached simulated streams."""

import pytest

from spreadhawkes import MarketState, ModelVariant, ParamSet, SimConfig, simulate

ROW1 = ParamSet(
    mu=0.080, eta=0.100, alpha_s1=4.0, alpha_s2=26.0, alpha_m=5.0,
    alpha_w1=11.0, alpha_w2=7.0, beta=50.0, xi=2.7,
)

ROW2 = ParamSet(
    mu=0.170, eta=0.140, alpha_s1=200.0, alpha_s2=250.0, alpha_m=150.0,
    alpha_w1=300.0, alpha_w2=330.0, beta=1200.0, xi=50.0,
)

START_STATE = MarketState(bid=100.00, ask=100.02)


@pytest.fixture(scope="session")
def row1() -> ParamSet:
    return ROW1


@pytest.fixture(scope="session")
def row2() -> ParamSet:
    return ROW2


@pytest.fixture(scope="session")
def stream4k(row1):
    """One mid-size stream simulated at row-1 truth, reused across tests."""
    return simulate(
        row1,
        SimConfig(initial_state=START_STATE, n_events=4000, seed=20240601),
    )


@pytest.fixture(scope="session")
def stream_basic(row1):
    """A stream from the basic-Hawkes variant (no reset, constant bases)."""
    basic = ParamSet(
        mu=0.05, eta=0.0, alpha_s1=0.0, alpha_s2=0.0, alpha_m=0.0,
        alpha_w1=0.0, alpha_w2=0.0, beta=20.0, xi=0.0,
        alpha_full=(
            2.0, 1.0, 0.5, 0.0,
            1.5, 0.8, 0.0, 0.3,
            0.3, 0.0, 0.8, 1.5,
            0.0, 0.5, 1.0, 2.0,
        ),
    )
    return simulate(
        basic,
        SimConfig(initial_state=START_STATE, n_events=3000, seed=77),
        ModelVariant.BASIC_HAWKES,
    )
