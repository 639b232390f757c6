"""Tests for series validation, residuals, initialization, and fit_series."""

import math
from datetime import datetime, timezone

import numpy as np
import pytest

from adoptcurve.curve import FitParams, evaluate
from adoptcurve.errors import InsufficientDataError, ValidationError
from adoptcurve.fitting import (
    SENTINEL_PARAMS,
    STATUS_BOUND_DEGENERATE,
    STATUS_CONVERGED,
    STATUS_FAILED_SENTINEL,
    AdoptionSeries,
    FitOptions,
    default_initialization,
    fit_series,
    residuals,
    rmse_log,
)

RELEASE = datetime(2023, 7, 18, tzinfo=timezone.utc)


def make_series(cumulative, subject="org/model", offset=0.0, bucket_days=30.0):
    return AdoptionSeries(
        subject_id=subject,
        release_instant=RELEASE,
        bucket_length_days=bucket_days,
        cumulative=tuple(cumulative),
        observation_offset_buckets=offset,
    )


def synthetic_series(lam, mu, sigma, n=36):
    t = np.arange(n) + 1.0
    return make_series(evaluate(FitParams(lam, mu, sigma), t))


class TestAdoptionSeries:
    def test_valid_series(self):
        s = make_series([0, 1, 3, 3, 7])
        assert s.n_points == 5
        assert np.array_equal(s.times(), [1, 2, 3, 4, 5])

    def test_offset_shifts_times(self):
        s = make_series([10, 11], offset=20.0, bucket_days=1.0)
        assert np.array_equal(s.times(), [21.0, 22.0])

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            make_series([])

    def test_decreasing_rejected(self):
        with pytest.raises(ValidationError):
            make_series([0, 5, 3])

    def test_negative_rejected(self):
        with pytest.raises(ValidationError):
            make_series([-1, 0, 2])

    def test_bad_bucket_length_rejected(self):
        with pytest.raises(ValidationError):
            make_series([1, 2], bucket_days=0.0)

    def test_negative_offset_rejected(self):
        with pytest.raises(ValidationError):
            make_series([1, 2], offset=-1.0)

    def test_naive_release_coerced_to_utc(self):
        s = AdoptionSeries("a/b", datetime(2024, 1, 1), 30.0, (1.0,))
        assert s.release_instant.tzinfo is timezone.utc


class TestResiduals:
    def test_exact_model_gives_zero(self):
        params = FitParams(4.0, 1.2, 2.0)
        s = synthetic_series(4.0, 1.2, 2.0, n=12)
        assert np.max(np.abs(residuals(params, s))) < 1e-12

    def test_single_zero_observation(self):
        # ln(1) - 1 * Phi((ln 1 - 0)/1) = -0.5
        r = residuals(FitParams(1.0, 0.0, 1.0), make_series([0]))
        assert r.shape == (1,)
        assert r[0] == pytest.approx(-0.5, abs=1e-15)

    def test_all_zero_series_against_evaluate(self):
        s = make_series([0, 0, 0, 0, 0])
        r = residuals(SENTINEL_PARAMS, s)
        expected = -np.log1p(evaluate(SENTINEL_PARAMS, s.times()))
        np.testing.assert_allclose(r, expected, rtol=1e-14)


class TestDefaultInitialization:
    def test_hand_arithmetic(self):
        s = make_series(np.linspace(5, 100, 16))
        init = default_initialization(s)
        assert init.lam == pytest.approx(math.log(101), rel=1e-12)
        assert init.mu == pytest.approx(math.log(8.5), rel=1e-12)
        assert init.sigma == 1.0
        assert init.m == 1.0

    def test_all_zero_rejected(self):
        with pytest.raises(InsufficientDataError):
            default_initialization(make_series([0, 0, 0]))


class TestFitSeries:
    def test_noiseless_round_trip(self):
        result = fit_series(synthetic_series(5.0, 1.0, 1.5))
        assert result.status == STATUS_CONVERGED
        assert result.params.lam == pytest.approx(5.0, rel=1e-2)
        assert result.params.mu == pytest.approx(1.0, rel=1e-2)
        assert result.params.sigma == pytest.approx(1.5, rel=1e-2)
        assert result.n_points == 36

    def test_step_series_never_reported_converged(self):
        step = make_series([0, 0, 0, 0, 0, 0, 500, 500, 500, 500, 500, 500])
        result = fit_series(step)
        assert result.status in (STATUS_FAILED_SENTINEL, STATUS_BOUND_DEGENERATE)

    def test_sentinel_params_are_exact(self):
        step = make_series([0, 0, 0, 0, 0, 0, 500, 500, 500, 500, 500, 500])
        result = fit_series(step)
        if result.status == STATUS_FAILED_SENTINEL:
            assert (result.params.lam, result.params.mu, result.params.sigma) == (
                0.5,
                2.0,
                0.5,
            )

    def test_early_jump_flat_series_converges_deterministically(self):
        flat = make_series([100.0] * 24)
        first = fit_series(flat)
        again = fit_series(flat, FitOptions(max_iterations=1000))
        assert first.status == STATUS_CONVERGED
        assert first.params.sigma < 1.0 and first.params.mu < 0.0
        assert again.params.lam == pytest.approx(first.params.lam, abs=1e-8)
        assert again.params.mu == pytest.approx(first.params.mu, abs=1e-8)
        assert again.params.sigma == pytest.approx(first.params.sigma, abs=1e-8)

    def test_too_few_points_rejected(self):
        with pytest.raises(InsufficientDataError):
            fit_series(make_series([0, 1, 2]))

    def test_all_zero_rejected(self):
        with pytest.raises(InsufficientDataError):
            fit_series(make_series([0, 0, 0, 0, 0]))

    def test_deterministic_bitwise(self):
        s = synthetic_series(3.0, 0.5, 2.0, n=24)
        opts = FitOptions(rng_seed=7)
        assert fit_series(s, opts) == fit_series(s, opts)

    def test_objective_not_worse_than_initialization(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            lam, mu, sigma = rng.uniform(2, 15), rng.uniform(0, 2), rng.uniform(1, 4)
            t = np.arange(30) + 1.0
            vals = evaluate(FitParams(lam, mu, sigma), t)
            noisy = np.maximum.accumulate(vals * np.exp(rng.normal(0, 0.1, 30)))
            s = make_series(noisy)
            result = fit_series(s)
            if result.status != STATUS_FAILED_SENTINEL:
                assert result.rmse_log <= rmse_log(default_initialization(s), s) + 1e-12

    def test_restart_budget_respected(self):
        s = synthetic_series(8.0, 1.5, 2.5)
        result = fit_series(s, FitOptions(n_restarts=3))
        assert 1 <= result.n_restarts_used <= 3

    def test_small_recovery_batch(self):
        rng = np.random.default_rng(99)
        hits = 0
        for _ in range(10):
            lam = rng.uniform(1, 25)
            mu = rng.uniform(0, 3)
            sigma = rng.uniform(0.5, 6)
            result = fit_series(synthetic_series(lam, mu, sigma))
            if result.status == STATUS_CONVERGED:
                errs = (
                    abs(result.params.lam - lam) / lam,
                    abs(result.params.mu - mu) / max(abs(mu), 1e-9),
                    abs(result.params.sigma - sigma) / sigma,
                )
                if max(errs) <= 1e-2:
                    hits += 1
        assert hits >= 9


class TestFitOptions:
    def test_bad_bounds_rejected(self):
        with pytest.raises(ValidationError):
            FitOptions(lam_bounds=(2.0, 1.0))

    def test_nonpositive_lower_bounds_rejected(self):
        with pytest.raises(ValidationError):
            FitOptions(sigma_bounds=(0.0, 1.0))

    def test_bad_tol_rejected(self):
        with pytest.raises(ValidationError):
            FitOptions(convergence_tol=0.0)
