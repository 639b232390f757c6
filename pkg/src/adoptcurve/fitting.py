"""Parameter estimation for adoption series.

The objective is least squares on ln(1 + count): the curve linearizes to
lam * Phi((ln t - mu) / sigma) there, so early and late buckets carry
comparable weight and the Jacobian never overflows. Optimization runs in
(ln lam, mu, ln sigma) space with box constraints, multistart, and a
Nelder-Mead rescue for stalled starts. t for bucket k is
observation_offset_buckets + k + 1 (first bucket is t=1 so ln t exists).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np
from scipy import optimize

from .curve import FitParams, std_normal_cdf, std_normal_pdf
from .errors import InsufficientDataError, ValidationError

__all__ = [
    "AdoptionSeries",
    "FitOptions",
    "FitResult",
    "SENTINEL_PARAMS",
    "STATUS_CONVERGED",
    "STATUS_FAILED_SENTINEL",
    "STATUS_BOUND_DEGENERATE",
    "residuals",
    "default_initialization",
    "fit_series",
]

STATUS_CONVERGED = "converged"
STATUS_FAILED_SENTINEL = "failed_sentinel"
STATUS_BOUND_DEGENERATE = "bound_degenerate"

# Emitted verbatim when estimation fails, so result tables stay comparable
# with the published convention for unfittable series.
SENTINEL_PARAMS = FitParams(lam=0.5, mu=2.0, sigma=0.5, m=1.0)

_BOUND_REL_TOL = 1e-6


def _utc(dt: datetime) -> datetime:
    if dt.tzinfo is None:
        return dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


@dataclass(frozen=True)
class AdoptionSeries:
    """Cumulative adoption counts per time bucket since a base model's release.

    cumulative[k] is the count at the end of bucket k. Download series
    recorded after release carry a nonzero observation offset (in buckets).
    """

    subject_id: str
    release_instant: datetime
    bucket_length_days: float
    cumulative: tuple[float, ...]
    observation_offset_buckets: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "cumulative", tuple(float(c) for c in self.cumulative))
        object.__setattr__(self, "release_instant", _utc(self.release_instant))
        self.validate()

    def validate(self) -> None:
        if len(self.cumulative) == 0:
            raise ValidationError("cumulative series must be nonempty")
        arr = np.asarray(self.cumulative, dtype=float)
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise ValidationError("cumulative counts must be finite and nonnegative")
        if np.any(np.diff(arr) < 0):
            raise ValidationError(
                f"cumulative series for {self.subject_id!r} is not monotone nondecreasing"
            )
        if not self.bucket_length_days > 0:
            raise ValidationError("bucket_length_days must be > 0")
        if self.observation_offset_buckets < 0:
            raise ValidationError("observation_offset_buckets must be >= 0")

    @property
    def n_points(self) -> int:
        return len(self.cumulative)

    def times(self) -> np.ndarray:
        """Observation times in buckets: offset + k + 1 for bucket index k."""
        return self.observation_offset_buckets + np.arange(len(self.cumulative)) + 1.0


@dataclass(frozen=True)
class FitOptions:
    lam_bounds: tuple[float, float] = (1e-6, 1e8)
    mu_bounds: tuple[float, float] = (-10.0, 200.0)
    sigma_bounds: tuple[float, float] = (1e-3, 1e9)
    max_iterations: int = 500
    n_restarts: int = 6
    convergence_tol: float = 1e-10
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("lam_bounds", "mu_bounds", "sigma_bounds"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValidationError(f"{name}: low must be < high, got {(lo, hi)}")
        if self.lam_bounds[0] <= 0 or self.sigma_bounds[0] <= 0:
            raise ValidationError("lam and sigma lower bounds must be positive")
        if self.max_iterations < 1 or self.n_restarts < 1:
            raise ValidationError("max_iterations and n_restarts must be >= 1")
        if not self.convergence_tol > 0:
            raise ValidationError("convergence_tol must be > 0")


@dataclass(frozen=True)
class FitResult:
    subject_id: str
    params: FitParams
    status: str
    rmse_log: float
    n_points: int
    n_restarts_used: int


def residuals(params: FitParams, series: AdoptionSeries) -> np.ndarray:
    """Log-space residuals ln(1 + c_k / m) - lam * Phi((ln t_k - mu) / sigma)."""
    series.validate()
    counts = np.asarray(series.cumulative, dtype=float)
    y = np.log1p(counts / params.m)
    z = (np.log(series.times()) - params.mu) / params.sigma
    return y - params.lam * std_normal_cdf(z)


def rmse_log(params: FitParams, series: AdoptionSeries) -> float:
    r = residuals(params, series)
    return float(np.sqrt(np.mean(r * r)))


def default_initialization(series: AdoptionSeries, m: float = 1.0) -> FitParams:
    """Start point: lam = ln(1 + final count), mu = ln(median t), sigma = 1."""
    series.validate()
    last = series.cumulative[-1]
    if last <= 0:
        raise InsufficientDataError("series has no nonzero count to initialize from")
    return FitParams(
        lam=math.log1p(last / m),
        mu=math.log(float(np.median(series.times()))),
        sigma=1.0,
        m=m,
    )


def _log_uniform_factors(rng: np.random.Generator, n: int) -> np.ndarray:
    return np.exp(rng.uniform(math.log(0.25), math.log(4.0), size=n))


def _starts(series: AdoptionSeries, options: FitOptions, m: float) -> list[np.ndarray]:
    init = default_initialization(series, m)
    base = np.array([init.lam, init.mu, init.sigma])
    rng = np.random.default_rng(options.rng_seed)
    starts = [base]
    for _ in range(options.n_restarts - 1):
        starts.append(base * _log_uniform_factors(rng, 3))
    return starts


def _pack(lam: float, mu: float, sigma: float) -> np.ndarray:
    return np.array([math.log(lam), mu, math.log(sigma)])

def _unpack(x: np.ndarray) -> tuple[float, float, float]:
    return math.exp(x[0]), float(x[1]), math.exp(x[2])


def _model_terms(x: np.ndarray, log_t: np.ndarray):
    lam, mu, sigma = math.exp(x[0]), x[1], math.exp(x[2])
    z = (log_t - mu) / sigma
    return lam, sigma, z, std_normal_cdf(z)


def _fit_residuals(x: np.ndarray, log_t: np.ndarray, y: np.ndarray) -> np.ndarray:
    lam, _, _, cdf = _model_terms(x, log_t)
    return y - lam * cdf

def _fit_jacobian(x: np.ndarray, log_t: np.ndarray, y: np.ndarray) -> np.ndarray:
    lam, sigma, z, cdf = _model_terms(x, log_t)
    pdf = std_normal_pdf(z)
    jac = np.empty((log_t.size, 3))
    jac[:, 0] = -lam * cdf            # d r / d ln(lam)
    jac[:, 1] = lam * pdf / sigma     # d r / d mu
    jac[:, 2] = lam * pdf * z         # d r / d ln(sigma)
    return jac


def _near_bound(value: float, bound: float) -> bool:
    tol = _BOUND_REL_TOL * max(abs(bound), abs(value), 1e-300)
    return abs(value - bound) <= tol


def _interior(params: FitParams, options: FitOptions) -> bool:
    for value, (lo, hi) in (
        (params.lam, options.lam_bounds),
        (params.mu, options.mu_bounds),
        (params.sigma, options.sigma_bounds),
    ):
        if _near_bound(value, lo) or _near_bound(value, hi):
            return False
    return True


def _transition_resolved(params: FitParams, series: AdoptionSeries) -> bool:
    """Whether the fitted rise overlaps the observation grid.

    If every observed ln t sits outside (mu - 2 sigma, mu + 2 sigma) while
    data exist on both sides, the whole transition fell between two adjacent
    buckets: any sufficiently small sigma reproduces the data exactly, so the
    returned parameters are an arbitrary point on a flat plateau.
    """
    log_t = np.log(series.times())
    lo = params.mu - 2.0 * params.sigma
    hi = params.mu + 2.0 * params.sigma
    below = np.any(log_t <= lo)
    above = np.any(log_t >= hi)
    inside = np.any((log_t > lo) & (log_t < hi))
    return not (below and above and not inside)


def _clip_start(start: np.ndarray, options: FitOptions) -> np.ndarray:
    out = []
    bounds = (options.lam_bounds, options.mu_bounds, options.sigma_bounds)
    for value, (lo, hi) in zip(start, bounds):
        pad_lo = 1e-9 * max(1.0, abs(lo))
        pad_hi = 1e-9 * max(1.0, abs(hi))
        out.append(min(max(value, lo + pad_lo), hi - pad_hi))
    return np.array(out)


@dataclass(frozen=True)
class _StartOutcome:
    index: int
    params: FitParams
    rmse: float
    success: bool
    interior: bool
    resolved: bool


def _optimize_one(
    x0: np.ndarray,
    log_t: np.ndarray,
    y: np.ndarray,
    x_lo: np.ndarray,
    x_hi: np.ndarray,
    options: FitOptions,
) -> tuple[np.ndarray, bool]:
    x0 = np.clip(x0, x_lo + 1e-12, x_hi - 1e-12)
    args = (log_t, y)
    res = optimize.least_squares(
        _fit_residuals,
        x0,
        jac=_fit_jacobian,
        bounds=(x_lo, x_hi),
        method="trf",
        args=args,
        xtol=options.convergence_tol,
        ftol=options.convergence_tol,
        gtol=options.convergence_tol,
        max_nfev=options.max_iterations,
    )
    if res.success:
        return res.x, True
    # LM stalled: Nelder-Mead restart on the same objective, then re-polish.
    nm = optimize.minimize(
        lambda x: 0.5 * np.sum(_fit_residuals(x, *args) ** 2),
        res.x,
        method="Nelder-Mead",
        bounds=optimize.Bounds(x_lo, x_hi),
        options={"maxiter": options.max_iterations, "xatol": 1e-10, "fatol": 1e-12},
    )
    polish = optimize.least_squares(
        _fit_residuals,
        np.clip(nm.x, x_lo + 1e-12, x_hi - 1e-12),
        jac=_fit_jacobian,
        bounds=(x_lo, x_hi),
        method="trf",
        args=args,
        xtol=options.convergence_tol,
        ftol=options.convergence_tol,
        gtol=options.convergence_tol,
        max_nfev=options.max_iterations,
    )
    return polish.x, bool(polish.success)


def fit_series(
    series: AdoptionSeries,
    options: FitOptions | None = None,
    m: float = 1.0,
) -> FitResult:
    """Estimate (lam, mu, sigma) for one series.

    Deterministic given (series, options): restarts run sequentially from a
    seeded perturbation sequence and ties are broken by restart index. Raises
    InsufficientDataError below 4 points or with an all-zero series; failure
    to converge is reported as a sentinel result, not an error.
    """
    options = options or FitOptions()
    series.validate()
    if series.n_points < 4:
        raise InsufficientDataError(
            f"need at least 4 observations to fit 3 parameters, got {series.n_points}"
        )
    if series.cumulative[-1] <= 0:
        raise InsufficientDataError("all-zero series carries no adoption signal")

    counts = np.asarray(series.cumulative, dtype=float)
    log_t = np.log(series.times())
    y = np.log1p(counts / m)
    x_lo = _pack(options.lam_bounds[0], options.mu_bounds[0], options.sigma_bounds[0])
    x_hi = _pack(options.lam_bounds[1], options.mu_bounds[1], options.sigma_bounds[1])

    outcomes: list[_StartOutcome] = []
    for index, start in enumerate(_starts(series, options, m)):
        x_opt, success = _optimize_one(
            _pack(*_clip_start(start, options)), log_t, y, x_lo, x_hi, options
        )
        lam, mu, sigma = _unpack(x_opt)
        params = FitParams(lam=lam, mu=mu, sigma=sigma, m=m)
        outcome = _StartOutcome(
            index=index,
            params=params,
            rmse=rmse_log(params, series),
            success=success,
            interior=_interior(params, options),
            resolved=_transition_resolved(params, series),
        )
        outcomes.append(outcome)
        if outcome.success and outcome.interior and outcome.resolved and outcome.rmse < 1e-12:
            break  # exact fit; further restarts cannot improve

    n_used = len(outcomes)
    best_rmse = min(o.rmse for o in outcomes)
    acceptable = [
        o for o in outcomes
        if o.success and o.interior and o.resolved and o.rmse <= 10.0 * best_rmse
    ]
    if acceptable:
        chosen = min(acceptable, key=lambda o: (o.rmse, o.index))
        return FitResult(
            subject_id=series.subject_id,
            params=chosen.params,
            status=STATUS_CONVERGED,
            rmse_log=chosen.rmse,
            n_points=series.n_points,
            n_restarts_used=n_used,
        )

    at_bound = [
        o for o in outcomes
        if o.success and not o.interior and o.rmse <= 10.0 * best_rmse
    ]
    if at_bound:
        chosen = min(at_bound, key=lambda o: (o.rmse, o.index))
        return FitResult(
            subject_id=series.subject_id,
            params=chosen.params,
            status=STATUS_BOUND_DEGENERATE,
            rmse_log=chosen.rmse,
            n_points=series.n_points,
            n_restarts_used=n_used,
        )

    sentinel = FitParams(
        SENTINEL_PARAMS.lam, SENTINEL_PARAMS.mu, SENTINEL_PARAMS.sigma, m
    )
    return FitResult(
        subject_id=series.subject_id,
        params=sentinel,
        status=STATUS_FAILED_SENTINEL,
        rmse_log=rmse_log(sentinel, series),
        n_points=series.n_points,
        n_restarts_used=n_used,
    )


