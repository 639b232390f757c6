"""Ecosystem analytics over fitted parameters and stored series.

Reproduces the aggregate views: per-parameter histograms, pairwise
parameter point sets, Pareto concentration of skewed count distributions,
per-organization density of cumulative adoption at fixed horizons, and
two-way forecast tables. Sentinel and bound-degenerate fits are excluded
everywhere; only converged parameter vectors describe real curves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .curve import FitParams, ceiling, evaluate, invert_time
from .errors import (
    DomainError,
    EmptyInputError,
    NotConvergedError,
    UnreachableTargetError,
    ValidationError,
)
from .fitting import STATUS_CONVERGED, AdoptionSeries, FitResult

__all__ = [
    "HistogramSpec",
    "Histogram",
    "PairwisePanel",
    "DensityCurve",
    "OrgDensityResult",
    "ForecastReport",
    "parameter_histograms",
    "pairwise_points",
    "pareto_concentration",
    "org_density",
    "forecast_report",
]


@dataclass(frozen=True)
class HistogramSpec:
    scale: str = "log10"
    bin_count: int = 40
    range: tuple[float, float] | None = None

    def __post_init__(self):
        if self.scale not in ("log10", "linear"):
            raise ValidationError(f"scale must be log10 or linear, got {self.scale!r}")
        if self.bin_count < 1:
            raise ValidationError("bin_count must be >= 1")
        if self.range is not None and not self.range[0] < self.range[1]:
            raise ValidationError(f"range low must be < high, got {self.range}")


@dataclass(frozen=True)
class Histogram:
    parameter: str
    scale: str
    edges: tuple[float, ...]
    counts: tuple[int, ...]
    underflow: int
    overflow: int

    @property
    def total(self) -> int:
        return sum(self.counts) + self.underflow + self.overflow


def _converged(fits: list[FitResult]) -> list[FitResult]:
    return [f for f in fits if f.status == STATUS_CONVERGED]


def _bin_values(values: np.ndarray, spec: HistogramSpec, parameter: str) -> Histogram:
    if spec.scale == "log10":
        positive = values > 0
        transformed = np.log10(values[positive])
        # log10 of a nonpositive value is below every bin
        forced_underflow = int(np.sum(~positive))
    else:
        transformed = values
        forced_underflow = 0

    if spec.range is not None:
        low, high = spec.range
    elif transformed.size:
        low, high = float(np.min(transformed)), float(np.max(transformed))
        if low == high:
            low, high = low - 0.5, high + 0.5
    else:
        low, high = 0.0, 1.0

    in_range = (transformed >= low) & (transformed <= high)
    counts, edges = np.histogram(transformed[in_range], bins=spec.bin_count, range=(low, high))
    underflow = forced_underflow + int(np.sum(transformed < low))
    overflow = int(np.sum(transformed > high))
    return Histogram(
        parameter=parameter,
        scale=spec.scale,
        edges=tuple(float(e) for e in edges),
        counts=tuple(int(c) for c in counts),
        underflow=underflow,
        overflow=overflow,
    )


def parameter_histograms(
    fits: list[FitResult], spec: HistogramSpec | None = None
) -> dict[str, Histogram]:
    """Histograms of lambda, mu, sigma over converged fits.

    Out-of-range values land in separately reported underflow/overflow bins,
    so bin counts + underflow + overflow always equals the number of
    converged fits.
    """
    spec = spec or HistogramSpec()
    converged = _converged(fits)
    if not converged:
        raise EmptyInputError("no converged fits to histogram")
    out = {}
    for parameter, getter in (
        ("lambda", lambda f: f.params.lam),
        ("mu", lambda f: f.params.mu),
        ("sigma", lambda f: f.params.sigma),
    ):
        values = np.array([getter(f) for f in converged], dtype=float)
        out[parameter] = _bin_values(values, spec, parameter)
    return out


@dataclass(frozen=True)
class PairwisePanel:
    x_name: str
    y_name: str
    points: tuple[tuple[str, float, float], ...]  # (subject_id, x, y)


def pairwise_points(fits: list[FitResult]) -> tuple[PairwisePanel, ...]:
    """(lambda, mu), (lambda, sigma), (sigma, mu) point sets, converged only."""
    converged = _converged(fits)
    panels = []
    for x_name, y_name, fx, fy in (
        ("lambda", "mu", lambda p: p.lam, lambda p: p.mu),
        ("lambda", "sigma", lambda p: p.lam, lambda p: p.sigma),
        ("sigma", "mu", lambda p: p.sigma, lambda p: p.mu),
    ):
        points = tuple(
            (f.subject_id, fx(f.params), fy(f.params)) for f in converged
        )
        panels.append(PairwisePanel(x_name, y_name, points))
    return tuple(panels)


def pareto_concentration(
    values, mass_threshold: float = 0.8
) -> tuple[float, int]:
    """Smallest top share of items carrying ``mass_threshold`` of the total.

    Returns (item_fraction, item_count). Sorting is descending with ties
    broken by original index, so the result is deterministic and invariant
    under positive rescaling.
    """
    arr = np.asarray(values, dtype=float)
    if arr.size == 0 or np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise DomainError("values must be a nonempty list of finite nonnegative reals")
    total = float(arr.sum())
    if total <= 0:
        raise DomainError("at least one value must be positive")
    if not 0 < mass_threshold <= 1:
        raise DomainError(f"mass_threshold must be in (0, 1], got {mass_threshold!r}")
    order = np.argsort(-arr, kind="stable")
    running = np.cumsum(arr[order])
    count = int(np.searchsorted(running, mass_threshold * total, side="left") + 1)
    count = min(count, arr.size)
    return count / arr.size, count


@dataclass(frozen=True)
class DensityCurve:
    """Normalized KDE of cumulative counts for one organization at a horizon."""

    organization: str
    horizon_buckets: int
    grid: tuple[float, ...]
    density: tuple[float, ...]

    def __post_init__(self):
        grid = np.asarray(self.grid)
        density = np.asarray(self.density)
        if grid.size != density.size or grid.size < 2:
            raise ValidationError("grid and density must share a length >= 2")
        if np.any(np.diff(grid) <= 0):
            raise ValidationError("grid must be strictly increasing")
        if np.any(density < 0):
            raise ValidationError("density must be nonnegative")
        mass = float(np.trapezoid(density, grid))
        if abs(mass - 1.0) > 1e-6:
            raise ValidationError(f"density integrates to {mass}, not 1 +- 1e-6")


def silverman_bandwidth(values: np.ndarray) -> float:
    """0.9 * min(sd, IQR/1.34) * n^(-1/5), floored when the spread is zero."""
    values = np.asarray(values, dtype=float)
    sd = float(np.std(values))
    q75, q25 = np.percentile(values, [75, 25])
    iqr = float(q75 - q25)
    h = 0.9 * min(sd, iqr / 1.34) * len(values) ** (-0.2)
    if h <= 0:
        h = 1e-3 * max(1.0, abs(float(np.mean(values))))
    return h


def _gaussian_kde_curve(
    organization: str, horizon: int, values: np.ndarray, grid_size: int
) -> DensityCurve:
    h = silverman_bandwidth(values)
    grid = np.linspace(values.min() - 3 * h, values.max() + 3 * h, grid_size)
    z = (grid[:, None] - values[None, :]) / h
    density = np.exp(-0.5 * z * z).sum(axis=1) / (len(values) * h * math.sqrt(2 * math.pi))
    # renormalize on the truncated grid so the trapezoid mass is exactly 1
    density = density / np.trapezoid(density, grid)
    return DensityCurve(
        organization=organization,
        horizon_buckets=horizon,
        grid=tuple(float(g) for g in grid),
        density=tuple(float(d) for d in density),
    )


@dataclass(frozen=True)
class OrgDensityResult:
    horizon_buckets: int
    curves: tuple[DensityCurve, ...]
    excluded_subjects: tuple[tuple[str, str], ...]  # (subject_id, reason)
    excluded_orgs: tuple[str, ...]                  # fewer than 2 qualifying subjects


def org_density(
    fits: list[FitResult],
    series_by_subject: dict[str, AdoptionSeries],
    horizon_buckets: int,
    fitness_range: tuple[float, float] = (1.0, 10.0),
    grid_size: int = 512,
) -> OrgDensityResult:
    """Per-organization KDE of observed cumulative counts at a horizon.

    A subject qualifies when its fit converged, lambda lies in
    ``fitness_range``, and its series reaches ``horizon_buckets``; shorter
    subjects and out-of-range fitness are listed as exclusions, as are
    organizations left with fewer than two qualifying subjects.
    """
    if horizon_buckets < 1:
        raise ValidationError("horizon_buckets must be >= 1")
    lo, hi = fitness_range
    if not lo <= hi:
        raise ValidationError(f"fitness_range low must be <= high, got {fitness_range}")
    if grid_size < 2:
        raise ValidationError("grid_size must be >= 2")

    qualifying: dict[str, list[tuple[str, float]]] = {}
    excluded: list[tuple[str, str]] = []
    for fit in fits:
        subject = fit.subject_id
        if fit.status != STATUS_CONVERGED:
            excluded.append((subject, f"status {fit.status}"))
            continue
        if not lo <= fit.params.lam <= hi:
            excluded.append((subject, "fitness outside range"))
            continue
        series = series_by_subject.get(subject)
        if series is None:
            excluded.append((subject, "no series"))
            continue
        if series.n_points < horizon_buckets:
            excluded.append((subject, f"series shorter than {horizon_buckets} buckets"))
            continue
        value = float(series.cumulative[horizon_buckets - 1])
        org = subject.split("/", 1)[0]
        qualifying.setdefault(org, []).append((subject, value))

    curves = []
    excluded_orgs = []
    for org in sorted(qualifying):
        members = qualifying[org]
        if len(members) < 2:
            excluded_orgs.append(org)
            continue
        values = np.array([v for _, v in members], dtype=float)
        curves.append(_gaussian_kde_curve(org, horizon_buckets, values, grid_size))

    return OrgDensityResult(
        horizon_buckets=horizon_buckets,
        curves=tuple(curves),
        excluded_subjects=tuple(excluded),
        excluded_orgs=tuple(excluded_orgs),
    )


@dataclass(frozen=True)
class TargetForecast:
    target: float
    time_buckets: float | None   # None when unreachable
    ceiling: float

    @property
    def unreachable(self) -> bool:
        return self.time_buckets is None


@dataclass(frozen=True)
class HorizonForecast:
    horizon_buckets: float
    expected_count: float


@dataclass(frozen=True)
class ForecastReport:
    subject_id: str
    params: FitParams
    targets: tuple[TargetForecast, ...]
    horizons: tuple[HorizonForecast, ...]


def forecast_report(
    fit: FitResult,
    targets: list[float] = (),
    horizons: list[float] = (),
) -> ForecastReport:
    """Two-way forecast table: time to reach each target, count at each horizon.

    Refuses non-converged fits; unreachable targets are marked with the
    curve's ceiling instead of raising.
    """
    if fit.status != STATUS_CONVERGED:
        raise NotConvergedError(
            f"cannot forecast from a fit with status {fit.status!r}"
        )
    params = fit.params
    cap = ceiling(params)
    target_rows = []
    for target in targets:
        try:
            t = invert_time(params, float(target))
        except UnreachableTargetError:
            t = None
        target_rows.append(TargetForecast(float(target), t, cap))
    horizon_rows = [
        HorizonForecast(float(h), float(evaluate(params, float(h)))) for h in horizons
    ]
    return ForecastReport(
        subject_id=fit.subject_id,
        params=params,
        targets=tuple(target_rows),
        horizons=tuple(horizon_rows),
    )
