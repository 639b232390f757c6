"""Tests for histograms, pairwise panels, Pareto concentration, KDE, forecasts."""

import math
from datetime import datetime, timezone

import numpy as np
import pytest

from adoptcurve.curve import FitParams, ceiling, evaluate
from adoptcurve.errors import (
    DomainError,
    EmptyInputError,
    NotConvergedError,
    ValidationError,
)
from adoptcurve.fitting import AdoptionSeries, FitResult
from adoptcurve.analytics import (
    DensityCurve,
    HistogramSpec,
    forecast_report,
    org_density,
    pairwise_points,
    parameter_histograms,
    pareto_concentration,
    silverman_bandwidth,
)

RELEASE = datetime(2024, 1, 1, tzinfo=timezone.utc)


def fit(subject, lam, mu=0.5, sigma=1.0, status="converged"):
    params = FitParams(0.5, 2.0, 0.5) if status == "failed_sentinel" else FitParams(lam, mu, sigma)
    return FitResult(subject, params, status, 0.01, 24, 3)


def series(subject, cumulative):
    return AdoptionSeries(subject, RELEASE, 30.0, tuple(cumulative), 0.0)


def brute_force_pareto(values, threshold):
    ordered = sorted(enumerate(values), key=lambda kv: (-kv[1], kv[0]))
    total = sum(values)
    acc = 0.0
    for count, (_, v) in enumerate(ordered, start=1):
        acc += v
        if acc >= threshold * total:
            return count / len(values), count
    return 1.0, len(values)


class TestParameterHistograms:
    def test_single_log_bin_holds_all(self):
        fits = [fit(f"o/m{i}", lam=10.0) for i in range(7)]
        hists = parameter_histograms(fits, HistogramSpec("log10", 2, (0.0, 2.0)))
        lam = hists["lambda"]
        # log10(10) = 1 falls in the second of two bins over [0, 2]
        assert lam.counts == (0, 7)
        assert lam.underflow == lam.overflow == 0

    def test_decade_binning(self):
        fits = [fit("o/a", 1.0), fit("o/b", 10.0), fit("o/c", 100.0)]
        lam = parameter_histograms(fits, HistogramSpec("log10", 3, (0.0, 2.0)))["lambda"]
        assert lam.counts == (1, 1, 1)

    def test_overflow_bin(self):
        fits = [fit("o/a", 10.0), fit("o/b", 1e7)]
        lam = parameter_histograms(fits, HistogramSpec("log10", 4, (0.0, 2.0)))["lambda"]
        assert lam.overflow == 1
        assert sum(lam.counts) == 1

    def test_conservation(self):
        rng = np.random.default_rng(3)
        fits = [fit(f"o/m{i}", lam=float(v)) for i, v in enumerate(rng.lognormal(1, 2, 50))]
        hists = parameter_histograms(fits, HistogramSpec("log10", 5, (0.0, 1.0)))
        for h in hists.values():
            assert h.total == 50

    def test_sentinels_excluded(self):
        fits = [fit("o/a", 10.0), fit("o/b", 1.0, status="failed_sentinel")]
        hists = parameter_histograms(fits, HistogramSpec("linear", 4))
        assert hists["lambda"].total == 1

    def test_no_converged_fits_rejected(self):
        with pytest.raises(EmptyInputError):
            parameter_histograms([fit("o/a", 1.0, status="failed_sentinel")])

    def test_nonpositive_values_underflow_on_log_scale(self):
        fits = [fit("o/a", 2.0, mu=-1.5), fit("o/b", 3.0, mu=0.5)]
        mu_hist = parameter_histograms(fits, HistogramSpec("log10", 3, (-2.0, 1.0)))["mu"]
        assert mu_hist.underflow == 1


class TestPairwisePoints:
    def test_three_panels_with_all_points(self):
        fits = [fit("o/a", 2.0, 0.1, 1.5), fit("o/b", 4.0, 0.2, 2.5)]
        panels = pairwise_points(fits)
        assert [(p.x_name, p.y_name) for p in panels] == [
            ("lambda", "mu"),
            ("lambda", "sigma"),
            ("sigma", "mu"),
        ]
        assert all(len(p.points) == 2 for p in panels)

    def test_coordinates_are_exact_projections(self):
        f = fit("o/a", 2.5, 0.125, 1.75)
        lam_mu, lam_sigma, sigma_mu = pairwise_points([f])
        assert lam_mu.points[0] == ("o/a", 2.5, 0.125)
        assert lam_sigma.points[0] == ("o/a", 2.5, 1.75)
        assert sigma_mu.points[0] == ("o/a", 1.75, 0.125)

    def test_sentinels_excluded(self):
        fits = [fit("o/a", 2.0), fit("o/b", 1.0, status="failed_sentinel")]
        for panel in pairwise_points(fits):
            assert {sid for sid, _, _ in panel.points} == {"o/a"}


class TestParetoConcentration:
    def test_hand_example(self):
        assert pareto_concentration([80, 10, 5, 3, 2], 0.8) == (0.20, 1)

    def test_uniform(self):
        assert pareto_concentration([1, 1, 1, 1, 1], 0.8) == (0.8, 4)

    def test_matches_brute_force_on_zipf(self):
        rng = np.random.default_rng(2024)
        for _ in range(10):
            values = rng.zipf(1.2, size=10_000).astype(float)
            assert pareto_concentration(values, 0.8) == brute_force_pareto(values, 0.8)

    def test_rescaling_invariance(self):
        values = [5.0, 1.0, 0.5, 0.25, 3.0, 9.0]
        base = pareto_concentration(values, 0.8)
        scaled = pareto_concentration([v * 1e6 for v in values], 0.8)
        assert base == scaled

    def test_all_zero_rejected(self):
        with pytest.raises(DomainError):
            pareto_concentration([0.0, 0.0])

    def test_negative_rejected(self):
        with pytest.raises(DomainError):
            pareto_concentration([1.0, -2.0])


class TestOrgDensity:
    def build(self, horizon=2, fitness_range=(1.0, 10.0)):
        fits = [
            fit("meta/a", 5.0),
            fit("meta/b", 6.0),
            fit("meta/c", 50.0),                      # fitness out of range
            fit("qwen/a", 2.0),
            fit("qwen/b", 3.0),
            fit("ibm/solo", 4.0),                     # only qualifying subject of its org
            fit("bad/x", 1.0, status="failed_sentinel"),
        ]
        series_map = {
            "meta/a": series("meta/a", [3, 10, 20]),
            "meta/b": series("meta/b", [1, 4, 9]),
            "meta/c": series("meta/c", [0, 1, 2]),
            "qwen/a": series("qwen/a", [2, 5]),
            "qwen/b": series("qwen/b", [0]),          # too short for horizon 2
            "ibm/solo": series("ibm/solo", [1, 2, 3]),
            "bad/x": series("bad/x", [1, 1, 1]),
        }
        return fits, series_map, org_density(fits, series_map, horizon, fitness_range)

    def test_exclusions(self):
        _, _, result = self.build()
        excluded = dict(result.excluded_subjects)
        assert "meta/c" in excluded and "fitness" in excluded["meta/c"]
        assert "qwen/b" in excluded and "shorter" in excluded["qwen/b"]
        assert "bad/x" in excluded and "status" in excluded["bad/x"]
        assert result.excluded_orgs == ("ibm", "qwen")

    def test_curves_only_for_orgs_with_two_subjects(self):
        _, _, result = self.build()
        assert [c.organization for c in result.curves] == ["meta"]

    def test_each_curve_integrates_to_one(self):
        _, _, result = self.build()
        for curve in result.curves:
            mass = np.trapezoid(np.asarray(curve.density), np.asarray(curve.grid))
            assert mass == pytest.approx(1.0, abs=1e-6)

    def test_degenerate_spread_peaks_at_value(self):
        fits = [fit("one/a", 2.0), fit("one/b", 2.0), fit("one/c", 2.0)]
        series_map = {s: series(s, [10, 10]) for s in ("one/a", "one/b", "one/c")}
        result = org_density(fits, series_map, 2)
        curve = result.curves[0]
        grid = np.asarray(curve.grid)
        density = np.asarray(curve.density)
        half_step = 0.5 * (grid[1] - grid[0])
        assert grid[np.argmax(density)] == pytest.approx(10.0, abs=half_step)

    def test_bimodal_symmetry(self):
        fits = [fit("two/a", 2.0), fit("two/b", 2.0)]
        series_map = {
            "two/a": series("two/a", [0, 0]),
            "two/b": series("two/b", [100, 100]),
        }
        curve = org_density(fits, series_map, 2).curves[0]
        density = np.asarray(curve.density)
        grid = np.asarray(curve.grid)
        assert grid[0] + grid[-1] == pytest.approx(100.0, abs=1e-9)
        np.testing.assert_allclose(density, density[::-1], atol=1e-12)

    def test_empty_result_not_error(self):
        result = org_density([], {}, 2)
        assert result.curves == ()

    def test_density_curve_invariant_enforced(self):
        with pytest.raises(ValidationError):
            DensityCurve("x", 2, (0.0, 1.0), (5.0, 5.0))  # integrates to 5

    def test_silverman_formula(self):
        values = np.array([0.0, 100.0])
        sd = np.std(values)
        iqr = np.percentile(values, 75) - np.percentile(values, 25)
        expected = 0.9 * min(sd, iqr / 1.34) * 2 ** (-0.2)
        assert silverman_bandwidth(values) == pytest.approx(expected, rel=1e-12)


class TestForecastReport:
    def test_round_trip_consistency(self):
        f = fit("o/a", 1.0, 0.0, 1.0)
        report = forecast_report(f, targets=[0.648721], horizons=[2, 6, 12])
        assert report.targets[0].time_buckets == pytest.approx(1.0, abs=1e-6)
        for row in report.horizons:
            assert row.expected_count == evaluate(f.params, row.horizon_buckets)

    def test_unreachable_target_marked(self):
        f = fit("o/a", 1.0, 0.0, 1.0)
        report = forecast_report(f, targets=[100.0])
        row = report.targets[0]
        assert row.unreachable
        assert row.ceiling == pytest.approx(ceiling(f.params))

    def test_non_converged_refused(self):
        with pytest.raises(NotConvergedError):
            forecast_report(fit("o/a", 1.0, status="failed_sentinel"), targets=[1.0])

    def test_mutual_consistency(self):
        f = fit("o/a", 4.0, 1.0, 2.0)
        cap = ceiling(f.params)
        targets = [0.1 * cap, 0.5 * cap, 0.9 * cap]
        report = forecast_report(f, targets=targets)
        for row in report.targets:
            assert evaluate(f.params, row.time_buckets) == pytest.approx(
                row.target, rel=1e-9
            )
