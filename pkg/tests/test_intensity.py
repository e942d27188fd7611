"""Intensity state machine: closed forms vs quadrature, resets, variants.

The compensator and spot-intensity values are pinned twice: against
adaptive quadrature of ``intensity_at`` computed here (independent of the
closed forms under test), and as frozen literals so regressions cannot
hide behind a tolerant comparison.
"""

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from spreadhawkes.core import EventKind, MarketState, apply_event
from spreadhawkes.intensity import (
    IntensityState,
    ModelVariant,
    ParamSet,
    StabilityWarning,
    compile_pack,
    lower_stream,
    replay,
)

P_SLOW = ParamSet(
    mu=0.08, eta=0.1, alpha_s1=4.0, alpha_s2=26.0, alpha_m=5.0,
    alpha_w1=11.0, alpha_w2=7.0, beta=2.0, xi=2.7,
)  # beta reduced so excitement stays visible over unit-scale gaps


def make_state():
    st_ = IntensityState(
        params=P_SLOW, variant=ModelVariant.PROPOSED, state=MarketState(100.00, 100.03)
    )
    st_ = st_.on_event(EventKind.ASK_UP, 1, t=1.0)
    return st_.on_event(EventKind.ASK_DOWN, 1, t=1.5)


class TestFrozenScenario:
    """AskUp at t=1 then AskDown at t=1.5 from (100.00, 100.03)."""

    def test_excitement_jump_and_reset(self):
        s = make_state()
        assert s.state.L == 2
        # target 0: alpha_s1 * e^{-beta/2} from the AskUp, + alpha_m jump
        assert s.E[0] == pytest.approx(4.0 * math.exp(-1.0) + 5.0, rel=1e-15)
        assert s.E[0] == 6.471517764685769
        # narrowing reset: E_2 = E_3 = xi * ell(t+), replacing history
        assert s.E[1] == s.E[2] == pytest.approx(2.7 * s.state.ell, rel=1e-15)
        assert s.E[1] == 0.05399190121481778
        # target 3 was never excited before; the AskDown adds alpha_s2
        assert s.E[3] == 26.0

    def test_intensity_frozen_values(self):
        lam = make_state().intensity_at(2.25)
        assert lam[0] == 1.5239907952377443
        assert lam[1] == lam[2] == 0.014046921609773744
        assert lam[3] == 5.881384163859176

    def test_compensator_frozen_values(self):
        comp = make_state().compensator(1.75, 2.25)
        assert comp[0] == 1.280591571959571
        assert comp[1] == comp[2] == 0.01135011097158776
        assert comp[3] == 5.0242064943346465

    def test_compensator_matches_quadrature(self):
        s = make_state()
        comp = s.compensator(1.75, 2.25)
        for i in range(4):
            q, _ = quad(
                lambda u: s.intensity_at(u)[i], 1.75, 2.25,
                epsabs=1e-13, epsrel=1e-13,
            )
            assert comp[i] == pytest.approx(q, rel=1e-12)

    def test_compensator_additive_in_time(self):
        s = make_state()
        whole = s.compensator(1.5, 4.0)
        split = s.compensator(1.5, 2.2) + s.compensator(2.2, 4.0)
        np.testing.assert_allclose(split, whole, rtol=1e-13)


class TestCompensatorOracleRandomized:
    def test_random_cases_match_quadrature(self):
        rng = np.random.default_rng(8)
        for _ in range(60):
            params = ParamSet(
                mu=rng.uniform(0.01, 0.5),
                eta=rng.uniform(0.0, 0.5),
                alpha_s1=rng.uniform(0, 5),
                alpha_s2=rng.uniform(0, 5),
                alpha_m=rng.uniform(0, 5),
                alpha_w1=rng.uniform(0, 5),
                alpha_w2=rng.uniform(0, 5),
                beta=rng.uniform(0.5, 30),
                xi=rng.uniform(0, 3),
            )
            state = MarketState.from_ticks(10_000, 10_001 + int(rng.integers(0, 5)))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", StabilityWarning)
                s = IntensityState(
                    params=params,
                    variant=ModelVariant.PROPOSED,
                    state=state,
                    E=rng.uniform(0, 10, size=4),
                )
            t0 = rng.uniform(0, 0.5)
            t1 = t0 + rng.uniform(0.01, 2.0)
            comp = s.compensator(t0, t1)
            for i in range(4):
                q, _ = quad(
                    lambda u: s.intensity_at(u)[i], t0, t1,
                    epsabs=1e-12, epsrel=1e-12, limit=200,
                )
                assert comp[i] == pytest.approx(q, rel=1e-8, abs=1e-12)


# random event walks for the property tests: (kind index, jump size) pairs
walks = st.lists(
    st.tuples(st.integers(0, 3), st.integers(1, 3)), min_size=1, max_size=40
)


def run_walk(walk, variant=ModelVariant.PROPOSED, params=P_SLOW, start_L=2):
    """Apply a random walk of quote events, skipping illegal moves."""
    s = IntensityState(
        params=params,
        variant=variant,
        state=MarketState.from_ticks(10_000, 10_001 + start_L),
    )
    t = 0.0
    for k, delta in walk:
        kind = EventKind(k)
        t += 0.05
        try:
            apply_event(s.state, kind, delta)
        except ValueError:
            continue
        s = s.on_event(kind, delta, t=t)
    return s


class TestResetProperties:
    @settings(max_examples=200, deadline=None)
    @given(walks)
    def test_intensities_never_negative(self, walk):
        s = run_walk(walk)
        for dt in (0.0, 0.1, 2.0):
            lam = s.intensity_at(s.t_current + dt)
            assert np.all(lam >= 0.0)

    @settings(max_examples=200, deadline=None)
    @given(walks, st.integers(0, 1))
    def test_reset_identity_after_narrowing(self, walk, which):
        s = run_walk(walk)
        kind = EventKind.ASK_DOWN if which == 0 else EventKind.BID_UP
        try:
            apply_event(s.state, kind, 1)
        except ValueError:
            return  # already at the minimum spread
        s2 = s.on_event(kind, 1, t=s.t_current + 0.01)
        expected = s2.params.xi * s2.state.ell
        assert s2.E[1] == expected
        assert s2.E[2] == expected

    @settings(max_examples=200, deadline=None)
    @given(walks)
    def test_narrowing_to_min_spread_zeroes_narrowing_intensities(self, walk):
        s = run_walk(walk)
        L = s.state.L
        if L == 0:
            return
        s2 = s.on_event(EventKind.ASK_DOWN, L, t=s.t_current + 0.01)
        assert s2.state.L == 0
        lam = s2.intensity_at(s2.t_current)
        assert lam[1] == 0.0
        assert lam[2] == 0.0
        # they stay zero until the spread widens again
        lam_later = s2.intensity_at(s2.t_current + 5.0)
        assert lam_later[1] == 0.0 and lam_later[2] == 0.0

    @settings(max_examples=100, deadline=None)
    @given(walks)
    def test_widening_does_not_reset(self, walk):
        s = run_walk(walk)
        before = s.excitement_at(s.t_current + 0.01)
        s2 = s.on_event(EventKind.ASK_UP, 1, t=s.t_current + 0.01)
        # widening adds its column on top of the decayed values
        np.testing.assert_allclose(
            s2.E, before + s.pack.A[:, 0], rtol=1e-12, atol=1e-15
        )


class TestReplayMatchesStateMachine:
    """The array kernels must agree with the readable state machine."""

    @pytest.mark.parametrize(
        "variant,params",
        [
            (ModelVariant.PROPOSED, P_SLOW),
            (
                ModelVariant.EXTENDED_I,
                P_SLOW.replace(alpha_14=1.1, alpha_41=0.7),
            ),
            (
                ModelVariant.EXTENDED_II,
                P_SLOW.replace(
                    mu_1=0.08, mu_4=0.05, eta_1=0.02, eta_2=0.1,
                    eta_3=0.12, eta_4=0.03,
                ),
            ),
            (
                ModelVariant.EXTENDED_III,
                P_SLOW.replace(xi_1=2.7, xi_2=1.0, xi_3=0.5, xi_4=3.1),
            ),
            (
                ModelVariant.EXTENDED_IV,
                P_SLOW.replace(beta_1=2.0, beta_2=3.0, beta_3=1.5, beta_4=2.5),
            ),
            (
                ModelVariant.EXTENDED_V,
                P_SLOW.replace(beta_1=2.0, beta_2=3.0, beta_3=1.5, beta_4=2.5),
            ),
            (ModelVariant.CONSTANT_BASE, P_SLOW),
            (
                ModelVariant.BASIC_HAWKES,
                ParamSet(
                    mu=0.06,
                    beta=2.0,
                    alpha_full=(
                        0.5, 0.3, 0.2, 0.1,
                        0.4, 0.6, 0.0, 0.2,
                        0.2, 0.0, 0.6, 0.4,
                        0.1, 0.2, 0.3, 0.5,
                    ),
                ),
            ),
        ],
        ids=lambda v: v.value if isinstance(v, ModelVariant) else "",
    )
    def test_replay_equals_stepping(self, variant, params, stream4k):
        stream = stream4k
        sub_events = stream.events[:200]
        sub = type(stream)(
            stream.session_start,
            sub_events[-1].t,
            stream.tick,
            stream.initial_state,
            sub_events,
        )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", StabilityWarning)
            result = replay(sub, params, variant)
            s = IntensityState(
                params=params, variant=variant, state=sub.initial_state
            )
        t0 = sub.session_start
        for j, ev in enumerate(sub.events):
            lam = s.intensity_at(ev.t - t0)[ev.kind.value]
            comp = s.compensator(s.t_current, ev.t - t0)
            assert lam == pytest.approx(result.lam[j], rel=1e-10, abs=1e-14)
            np.testing.assert_allclose(
                comp, result.compensators[j], rtol=1e-10, atol=1e-14
            )
            s = s.on_event(ev.kind, ev.delta, t=ev.t - t0)
        tail = s.compensator(s.t_current, sub.duration)
        np.testing.assert_allclose(
            tail, result.compensators[-1], rtol=1e-10, atol=1e-14
        )


class TestParamSet:
    @pytest.mark.parametrize("variant", [v for v in ModelVariant if v.fittable])
    def test_vector_round_trip(self, variant):
        rng = np.random.default_rng(hash(variant.value) % 2**32)
        vec = rng.uniform(0.5, 3.0, size=variant.k)
        p = ParamSet.from_vector(variant, vec)
        np.testing.assert_array_equal(p.as_vector(variant), vec)

    def test_k_values(self):
        expected = {
            "proposed": 9, "basic": 18, "ext1": 11, "ext2": 13,
            "ext3": 12, "ext4": 12, "ext5": 12, "constant": 9,
            "spread_only": 9,
        }
        assert {v.value: v.k for v in ModelVariant} == expected

    def test_validate_rejects_negative(self):
        with pytest.raises(ValueError):
            P_SLOW.replace(alpha_m=-1.0).validate(ModelVariant.PROPOSED)

    def test_validate_rejects_zero_beta(self):
        with pytest.raises(ValueError):
            P_SLOW.replace(beta=0.0).validate(ModelVariant.PROPOSED)

    def test_validate_warns_when_depletion_dominates(self):
        with pytest.warns(StabilityWarning):
            P_SLOW.replace(beta=30.0).validate(ModelVariant.PROPOSED)

    def test_get_alpha_ij_uses_full_matrix(self):
        p = ParamSet(mu=1.0, beta=1.0, alpha_full=tuple(range(16)))
        assert p.get("alpha_11") == 0.0
        assert p.get("alpha_23") == 6.0
        assert p.get("alpha_44") == 15.0

    def test_missing_extension_raises(self):
        with pytest.raises(ValueError):
            P_SLOW.as_vector(ModelVariant.EXTENDED_I)


class TestCompilePack:
    def test_proposed_matrix_layout(self):
        pack = compile_pack(P_SLOW, ModelVariant.PROPOSED)
        A = pack.A
        assert A[0].tolist() == [4.0, 5.0, 26.0, 0.0]
        assert A[1].tolist() == [11.0, 0.0, 0.0, 7.0]
        assert A[2].tolist() == [7.0, 0.0, 0.0, 11.0]
        assert A[3].tolist() == [0.0, 26.0, 5.0, 4.0]
        assert pack.mu4.tolist() == [0.08, 0.0, 0.0, 0.08]
        assert pack.eta4.tolist() == [0.0, 0.1, 0.1, 0.0]
        assert not pack.col_decay and not pack.base_indicator

    def test_corner_terms_only_in_extended_one(self):
        pack = compile_pack(
            P_SLOW.replace(alpha_14=1.1, alpha_41=0.7), ModelVariant.EXTENDED_I
        )
        assert pack.A[0, 3] == 1.1
        assert pack.A[3, 0] == 0.7

    def test_column_decay_selected_for_extended_four_only(self):
        p = P_SLOW.replace(beta_1=1.0, beta_2=2.0, beta_3=3.0, beta_4=4.0)
        assert compile_pack(p, ModelVariant.EXTENDED_IV).col_decay
        assert not compile_pack(p, ModelVariant.EXTENDED_V).col_decay
        assert compile_pack(p, ModelVariant.EXTENDED_IV).beta_row.tolist() == [
            1.0, 2.0, 3.0, 4.0,
        ]

    def test_spread_only_not_compilable(self):
        with pytest.raises(ValueError):
            compile_pack(P_SLOW, ModelVariant.SPREAD_ONLY)

    def test_arrays_are_float64_even_from_ints(self):
        p = ParamSet(mu=1, eta=1, alpha_s1=1, alpha_s2=1, alpha_m=1,
                     alpha_w1=1, alpha_w2=1, beta=10, xi=1)
        pack = compile_pack(p, ModelVariant.PROPOSED)
        for arr in (pack.mu4, pack.eta4, pack.A, pack.xi_mat, pack.beta_row):
            assert arr.dtype == np.float64


class TestLowerStream:
    def test_shapes_and_cache(self, stream4k):
        low = lower_stream(stream4k)
        assert low.n == len(stream4k)
        assert low.t[0] > 0 and np.all(np.diff(low.t) > 0)
        assert low.T == stream4k.duration
        assert lower_stream(stream4k) is low  # cached

    def test_level_columns_match_states(self, stream4k):
        low = lower_stream(stream4k)
        for j in (0, 17, len(stream4k) - 1):
            ev = stream4k.events[j]
            assert low.ell_after[j] == ev.state_after.ell
            assert low.lpos_after[j] == (1.0 if ev.state_after.L > 0 else 0.0)
