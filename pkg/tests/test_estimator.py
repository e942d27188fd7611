"""Fitting: starts, optimization, standard errors, and the study drivers.

The standard-error code is validated against an injected quadratic
log-likelihood whose Hessian (and therefore whose exact standard errors)
is known in closed form, so the finite-difference machinery is tested
without trusting any of it.
"""

import math

import numpy as np
import pytest

import spreadhawkes.estimator as est
from spreadhawkes.core import EventKind, MarketState, build_stream
from spreadhawkes.estimator import (
    LOG_CEIL,
    LOG_FLOOR,
    TABLE1_ROWS,
    ConvergenceResult,
    FitConfig,
    FitReport,
    convergence_experiment,
    fit,
    rmse_vs_truth,
    standard_errors,
    study_truth,
    table1_experiment,
)
from spreadhawkes.intensity import ModelVariant, ParamSet
from spreadhawkes.likelihood import log_likelihood


class TestFitConfig:
    def test_rejects_bad_settings(self):
        with pytest.raises(ValueError):
            FitConfig(beta0=0.0)
        with pytest.raises(ValueError):
            FitConfig(restarts=0)
        with pytest.raises(ValueError):
            FitConfig(method="annealing")
        with pytest.raises(ValueError):
            FitConfig(variant=ModelVariant.SPREAD_ONLY)

    def test_log_bounds(self):
        assert LOG_FLOOR == math.log(1e-12)
        assert LOG_CEIL == math.log(1e8)


class TestStarts:
    def test_heuristic_start_from_event_rates(self, stream4k):
        config = FitConfig(beta0=80.0)
        start = est._heuristic_start(stream4k, ModelVariant.PROPOSED, config)
        low = est.lower_stream(stream4k)
        counts = np.bincount(low.kind, minlength=4)
        T = stream4k.duration
        mu0 = 0.5 * (counts[0] + counts[3]) / (2 * T)
        eta0 = 0.5 * (counts[1] + counts[2]) / (2 * T) / np.mean(low.ell_after)
        assert start[0] == pytest.approx(mu0, rel=1e-12)
        assert start[1] == pytest.approx(eta0, rel=1e-12)
        assert start[2:7].tolist() == [20.0] * 5  # beta0 / 4
        assert start[7] == 80.0
        assert start[8] == pytest.approx(8.0)  # beta0 / 10

    def test_random_start_bounds(self):
        rng = np.random.default_rng(0)
        config = FitConfig(beta0=40.0)
        for _ in range(50):
            v = est._random_start(ModelVariant.PROPOSED, config, rng)
            assert 0 <= v[0] <= 10 and 0 <= v[1] <= 10
            assert np.all(v[2:7] <= 40.0) and 0 <= v[8] <= 40.0
            assert v[7] == 40.0  # beta pinned at beta0


class TestFit:
    def test_recovers_truth(self, stream4k, row1):
        report = fit(
            stream4k,
            FitConfig(beta0=100.0, restarts=2, seed=3, compute_se=False),
        )
        assert report.converged
        assert rmse_vs_truth(report.estimates, row1) < 0.15
        assert report.n_events == len(stream4k)
        assert sum(report.counts) == len(stream4k)
        assert report.stable and report.reliable

    def test_deterministic_given_seed(self, stream4k):
        cfg = dict(beta0=100.0, restarts=2, compute_se=False)
        a = fit(stream4k, FitConfig(seed=11, **cfg))
        b = fit(stream4k, FitConfig(seed=11, **cfg))
        assert a.loglik == b.loglik
        assert a.estimates == b.estimates

    def test_loglik_at_estimates_matches_report(self, stream4k):
        report = fit(
            stream4k, FitConfig(restarts=1, seed=0, compute_se=False)
        )
        direct = log_likelihood(stream4k, report.estimates)
        assert direct == pytest.approx(report.loglik, rel=1e-9)

    def test_gradient_method_agrees(self, stream4k, row1):
        simplex = fit(
            stream4k, FitConfig(restarts=1, seed=0, compute_se=False)
        )
        grad = fit(
            stream4k,
            FitConfig(restarts=1, seed=0, method="gradient", compute_se=False),
        )
        assert grad.loglik == pytest.approx(simplex.loglik, rel=1e-3)
        assert rmse_vs_truth(grad.estimates, row1) < 0.2

    def test_unreliable_flag_for_sparse_processes(self):
        stream = build_stream(
            0.0,
            100.0,
            MarketState(100.00, 100.02),
            [(float(i), EventKind.ASK_UP, 1) for i in range(1, 60)],
        )
        report = fit(
            stream,
            FitConfig(restarts=1, seed=0, compute_se=False, max_iter=200),
        )
        assert not report.reliable  # three processes have zero events

    def test_all_minus_inf_raises(self, stream4k, monkeypatch):
        monkeypatch.setattr(
            est, "log_likelihood", lambda *a, **kw: -math.inf
        )
        with pytest.raises(ValueError, match="clean the data"):
            fit(stream4k, FitConfig(restarts=2, seed=0, compute_se=False))

    def test_report_serialization(self, stream4k):
        report = fit(
            stream4k, FitConfig(restarts=1, seed=0, compute_se=False)
        )
        d = report.to_dict()
        assert d["schema"] == "spreadhawkes-fit-v1"
        assert set(d["estimates"]) == set(ModelVariant.PROPOSED.param_names)
        header = FitReport.csv_header(ModelVariant.PROPOSED)
        row = report.to_csv_row()
        assert len(header) == len(row) == 9 + 2 * 9
        assert float(row[3]) == report.loglik


def quadratic_loglik(center, M):
    """A fake log-likelihood with known curvature for SE validation."""

    def fake(stream, params, variant=ModelVariant.PROPOSED):
        theta = params.as_vector(variant)
        d = theta - center
        return -0.5 * float(d @ M @ d)

    return fake


class TestStandardErrors:
    def test_exact_on_known_quadratic(self, stream4k, monkeypatch):
        rng = np.random.default_rng(5)
        d = 9
        B = rng.normal(size=(d, d))
        M = B @ B.T + np.eye(d) * 5.0
        center = rng.uniform(0.5, 3.0, size=d)
        monkeypatch.setattr(
            est, "log_likelihood", quadratic_loglik(center, M)
        )
        se, note = standard_errors(
            stream4k,
            ParamSet.from_vector(ModelVariant.PROPOSED, center),
            ModelVariant.PROPOSED,
        )
        assert note is None
        expected = np.sqrt(np.diag(np.linalg.inv(M)))
        got = np.array([se[n] for n in ModelVariant.PROPOSED.param_names])
        np.testing.assert_allclose(got, expected, rtol=1e-6)

    def test_non_positive_definite_reported(self, stream4k, monkeypatch):
        M = -np.eye(9)  # wrong-signed curvature: a minimum, not a maximum
        monkeypatch.setattr(
            est, "log_likelihood", quadratic_loglik(np.ones(9), M)
        )
        se, note = standard_errors(
            stream4k,
            ParamSet.from_vector(ModelVariant.PROPOSED, np.ones(9)),
            ModelVariant.PROPOSED,
        )
        assert se is None
        assert "positive definite" in note

    def test_not_finite_reported(self, stream4k, monkeypatch):
        monkeypatch.setattr(est, "log_likelihood", lambda *a, **kw: -math.inf)
        se, note = standard_errors(
            stream4k,
            ParamSet.from_vector(ModelVariant.PROPOSED, np.ones(9)),
            ModelVariant.PROPOSED,
        )
        assert se is None and "not finite" in note

    def test_real_fit_errors_bracket_truth(self, stream4k, row1):
        report = fit(
            stream4k, FitConfig(beta0=100.0, restarts=2, seed=3)
        )
        assert report.standard_errors is not None
        names = ModelVariant.PROPOSED.param_names
        hits = sum(
            abs(report.estimates.get(n) - row1.get(n))
            <= 5.0 * report.standard_errors[n]
            for n in names
        )
        assert hits >= 8  # at most one 5-sigma excursion among nine


class TestStudyHelpers:
    def test_rmse_vs_truth_hand_value(self):
        truth = ParamSet(mu=2.0, eta=1.0, alpha_s1=4.0, alpha_s2=4.0,
                         alpha_m=4.0, alpha_w1=4.0, alpha_w2=4.0,
                         beta=10.0, xi=1.0)
        # every estimate 10% high: relative rmse is exactly 0.1
        display = {n: truth.get(n) * 1.1 for n in ModelVariant.PROPOSED.param_names}
        estimate = ParamSet(**display)
        assert rmse_vs_truth(estimate, truth) == pytest.approx(0.1, rel=1e-12)

    def test_rmse_zero_truth_falls_back_to_absolute(self):
        truth = ParamSet(mu=1.0, eta=0.0, alpha_s1=1.0, alpha_s2=1.0,
                         alpha_m=1.0, alpha_w1=1.0, alpha_w2=1.0,
                         beta=1.0, xi=1.0)
        estimate = truth.replace(eta=0.3)
        # only eta errs, absolutely: rmse = sqrt(0.09 / 9) = 0.1
        assert rmse_vs_truth(estimate, truth) == pytest.approx(0.1, rel=1e-12)

    def test_study_truth_shape(self):
        p = study_truth(400.0)
        assert p.mu == 0.1 and p.eta == 0.0
        assert p.alpha_s1 == p.alpha_w2 == 100.0
        assert p.beta == 400.0 and p.xi == 40.0

    def test_is_stable(self):
        assert est._is_stable(
            ParamSet(mu=1, eta=1, alpha_s1=1, alpha_s2=1, alpha_m=1,
                     alpha_w1=99, alpha_w2=99, beta=10, xi=1),
            ModelVariant.PROPOSED,
        )
        assert not est._is_stable(
            ParamSet(mu=1, eta=1, alpha_s1=5, alpha_s2=5, alpha_m=5,
                     alpha_w1=0, alpha_w2=0, beta=10, xi=1),
            ModelVariant.PROPOSED,
        )


class TestStudyDrivers:
    def test_table1_smoke(self):
        study = table1_experiment(
            1, paths=2, n_events=800, seed=0, beta0=100.0, restarts=1
        )
        assert len(study.rows) == 2
        assert study.rows[0]["seed"] == 1_000_000
        assert study.rows[1]["seed"] == 1_000_097
        mean = study.mean()
        assert set(mean) == set(ModelVariant.PROPOSED.param_names)
        assert isinstance(study.within(n_std=1e9), bool)

    def test_table1_rejects_unknown_row(self):
        with pytest.raises(ValueError):
            table1_experiment(7, paths=1)

    def test_table1_reference_rows(self):
        assert TABLE1_ROWS[1]["truth"].beta == 50.0
        assert TABLE1_ROWS[2]["truth"].beta == 1200.0
        assert TABLE1_ROWS[1]["std"]["beta"] == 0.796
        assert TABLE1_ROWS[2]["std"]["xi"] == 2.441

    def test_convergence_smoke(self):
        truth = study_truth(400.0)
        result = convergence_experiment(
            truth, n_events=800, beta0_grid=(100.0, 400.0),
            replications=2, seed=1,
        )
        assert isinstance(result, ConvergenceResult)
        assert set(result.rmse) == {100.0, 400.0}
        assert all(len(v) == 2 for v in result.rmse.values())
        rates = result.rates()
        assert all(0.0 <= r <= 1.0 for r in rates.values())

    def test_convergence_rejects_zero_reps(self):
        with pytest.raises(ValueError):
            convergence_experiment(study_truth(400.0), 100, (10.0,), 0)
