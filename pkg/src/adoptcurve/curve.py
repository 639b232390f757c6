"""Adoption-curve model: c(t) = m * (exp(lam * Phi((ln t - mu) / sigma)) - 1).

The curve maps time since release (in buckets, t > 0) to an expected
cumulative adoption count. ``lam`` scales total attainable adoption,
``mu`` shifts the rise in log-time, ``sigma`` stretches it. All functions
here are pure; array inputs broadcast elementwise.
"""

from __future__ import annotations

import math
import sys
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DomainError, UnreachableTargetError

__all__ = [
    "FitParams",
    "SaturationWarning",
    "EXP_CLAMP",
    "std_normal_cdf",
    "std_normal_pdf",
    "std_normal_quantile",
    "evaluate",
    "ceiling",
    "invert_time",
    "gradient",
]

# Largest x with exp(x) finite in double precision. Exponents above this are
# clamped and the computation is flagged with SaturationWarning instead of
# overflowing: fitted lam values in the wild reach ~5e5.
EXP_CLAMP = math.log(sys.float_info.max)

_SQRT2 = math.sqrt(2.0)
_SQRT_2PI = math.sqrt(2.0 * math.pi)


class SaturationWarning(RuntimeWarning):
    """Raised (as a warning) when a result was clamped at the float ceiling."""


@dataclass(frozen=True)
class FitParams:
    """Parameter vector of the adoption curve.

    lam   -- relative fitness, > 0 (dimensionless)
    mu    -- immediacy, finite (log-time, time counted in buckets)
    sigma -- longevity, > 0 (log-time)
    m     -- count scale, > 0; 1 by convention so c(t) is an absolute count
    """

    lam: float
    mu: float
    sigma: float
    m: float = 1.0

    def __post_init__(self):
        for name in ("lam", "mu", "sigma", "m"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite, got {value!r}")
        if self.lam <= 0:
            raise DomainError(f"lam must be > 0, got {self.lam!r}")
        if self.sigma <= 0:
            raise DomainError(f"sigma must be > 0, got {self.sigma!r}")
        if self.m <= 0:
            raise DomainError(f"m must be > 0, got {self.m!r}")


def _as_finite_array(x, name: str) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite, got {x!r}")
    return arr, arr.ndim == 0


def std_normal_cdf(x):
    """Standard normal CDF Phi(x); accepts scalars or arrays."""
    arr, scalar = _as_finite_array(x, "x")
    # erfc form stays relatively accurate deep in the left tail.
    out = 0.5 * special.erfc(-arr / _SQRT2)
    return float(out) if scalar else out


def std_normal_pdf(x):
    """Standard normal density phi(x)."""
    arr, scalar = _as_finite_array(x, "x")
    out = np.exp(-0.5 * arr * arr) / _SQRT_2PI
    return float(out) if scalar else out


# Rational approximations for the normal quantile (Acklam 2003, max relative
# error ~1.15e-9), refined below by one Halley step against std_normal_cdf.
_ACKLAM_A = (
    -3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
    1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00,
)
_ACKLAM_B = (
    -5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
    6.680131188771972e01, -1.328068155288572e01,
)
_ACKLAM_C = (
    -7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
    -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00,
)
_ACKLAM_D = (
    7.784695709041462e-03, 3.224671290700398e-01,
    2.445134137142996e00, 3.754408661907416e00,
)
_ACKLAM_SPLIT = 0.02425


def _acklam_estimate(p: np.ndarray) -> np.ndarray:
    a, b, c, d = _ACKLAM_A, _ACKLAM_B, _ACKLAM_C, _ACKLAM_D
    x = np.empty_like(p)

    low = p < _ACKLAM_SPLIT
    high = p > 1.0 - _ACKLAM_SPLIT
    mid = ~(low | high)

    if np.any(low):
        q = np.sqrt(-2.0 * np.log(p[low]))
        x[low] = (
            ((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]
        ) / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    if np.any(high):
        q = np.sqrt(-2.0 * np.log(1.0 - p[high]))
        x[high] = -(
            ((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]
        ) / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    if np.any(mid):
        q = p[mid] - 0.5
        r = q * q
        x[mid] = (
            ((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]
        ) * q / (
            ((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0
        )
    return x


def std_normal_quantile(p):
    """Inverse of std_normal_cdf on (0, 1).

    Rational initial estimate plus one Halley refinement step against
    std_normal_cdf, so the round-trip |Phi(Phi^-1(p)) - p| sits at
    machine precision.
    """
    arr, scalar = _as_finite_array(p, "p")
    if np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise DomainError(f"p must lie strictly inside (0, 1), got {p!r}")

    x = _acklam_estimate(np.atleast_1d(arr).astype(float))
    # Refine where exp(x^2/2) is representable; in the far sub-1e-310 tails
    # the rational estimate is already exact to within the density's scale.
    safe = 0.5 * x * x < EXP_CLAMP
    if np.any(safe):
        xs = x[safe]
        err = 0.5 * special.erfc(-xs / _SQRT2) - np.atleast_1d(arr)[safe]
        u = err * _SQRT_2PI * np.exp(0.5 * xs * xs)
        x[safe] = xs - u / (1.0 + 0.5 * xs * u)

    return float(x[0]) if scalar else x.reshape(arr.shape)


def _validate_t(t):
    arr, scalar = _as_finite_array(t, "t")
    if np.any(arr <= 0.0):
        raise DomainError(f"t must be > 0 (ln t undefined otherwise), got {t!r}")
    return arr, scalar


def _exponent(params: FitParams, t_arr: np.ndarray) -> np.ndarray:
    """lam * Phi((ln t - mu) / sigma), clamped at EXP_CLAMP with a warning."""
    z = (np.log(t_arr) - params.mu) / params.sigma
    g = params.lam * (0.5 * special.erfc(-z / _SQRT2))
    if np.any(g > EXP_CLAMP):
        warnings.warn(
            f"exponent clamped at {EXP_CLAMP:.3f}; result saturated at the "
            "largest finite value",
            SaturationWarning,
            stacklevel=3,
        )
        g = np.minimum(g, EXP_CLAMP)
    return g


def evaluate(params: FitParams, t):
    """Expected cumulative count at time t (buckets since release)."""
    t_arr, scalar = _validate_t(t)
    out = params.m * np.expm1(_exponent(params, t_arr))
    return float(out) if scalar else out


def ceiling(params: FitParams) -> float:
    """Asymptotic count m * (exp(lam) - 1); inf when that overflows."""
    if params.lam + math.log(params.m) >= EXP_CLAMP:
        return math.inf
    return params.m * math.expm1(params.lam)


def invert_time(params: FitParams, target: float) -> float:
    """Closed-form time at which the curve reaches ``target``.

    t = exp(mu + sigma * Phi^-1(ln(target/m + 1) / lam)). Raises
    UnreachableTargetError when target is at/above the ceiling (or so close
    that the inversion is indistinguishable from it in double precision).
    """
    arr, scalar = _as_finite_array(target, "target")
    if not scalar:
        raise DomainError("target must be a scalar")
    tgt = float(arr)
    if tgt <= 0.0:
        raise DomainError(f"target must be > 0, got {target!r}")
    cap = ceiling(params)
    if tgt >= cap:
        raise UnreachableTargetError(tgt, cap)
    q = math.log1p(tgt / params.m) / params.lam
    if q >= 1.0:
        raise UnreachableTargetError(tgt, cap)
    return math.exp(params.mu + params.sigma * std_normal_quantile(q))


def gradient(params: FitParams, t):
    """Partials (dc/dlam, dc/dmu, dc/dsigma) of the curve at time t.

    With z = (ln t - mu)/sigma and E = m * exp(lam * Phi(z)):
    dc/dlam = E * Phi(z); dc/dmu = -E * lam * phi(z) / sigma;
    dc/dsigma = -E * lam * phi(z) * z / sigma.
    """
    t_arr, scalar = _validate_t(t)
    z = (np.log(t_arr) - params.mu) / params.sigma
    big_phi = 0.5 * special.erfc(-z / _SQRT2)
    small_phi = np.exp(-0.5 * z * z) / _SQRT_2PI
    e_factor = params.m * np.exp(np.minimum(params.lam * big_phi, EXP_CLAMP))
    if np.any(params.lam * big_phi > EXP_CLAMP):
        warnings.warn(
            "gradient saturated at the largest finite exponential",
            SaturationWarning,
            stacklevel=2,
        )
    d_lam = e_factor * big_phi
    d_mu = -e_factor * params.lam * small_phi / params.sigma
    d_sigma = -e_factor * params.lam * small_phi * z / params.sigma
    if scalar:
        return float(d_lam), float(d_mu), float(d_sigma)
    return d_lam, d_mu, d_sigma
