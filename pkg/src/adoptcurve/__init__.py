"""adoptcurve: fit, forecast, and analyze open-weight model adoption curves.

The model is c(t) = m * (exp(lam * Phi((ln t - mu) / sigma)) - 1): a
lognormal-CDF exponential curve mapping time since release to expected
cumulative adoption (fine-tune counts or downloads). This package covers
the whole pipeline: registry ingestion, JSONL persistence, least-squares
fitting with failure classification, closed-form forecasting, and
ecosystem analytics.
"""

from .curve import (
    EXP_CLAMP,
    FitParams,
    SaturationWarning,
    ceiling,
    evaluate,
    gradient,
    invert_time,
    std_normal_cdf,
    std_normal_pdf,
    std_normal_quantile,
)
from .errors import (
    AdoptCurveError,
    DomainError,
    EmptyInputError,
    InsufficientDataError,
    NotConvergedError,
    NotFoundError,
    PermanentRegistryError,
    TransientRegistryError,
    UnreachableTargetError,
    ValidationError,
)
from .fitting import (
    SENTINEL_PARAMS,
    STATUS_BOUND_DEGENERATE,
    STATUS_CONVERGED,
    STATUS_FAILED_SENTINEL,
    AdoptionSeries,
    FitOptions,
    FitResult,
    default_initialization,
    fit_series,
    residuals,
)
from .registry import (
    DownloadSnapshot,
    FineTuneEdge,
    IngestDiagnostics,
    ModelMeta,
    RegistryClient,
    RegistryConfig,
    build_adoption_series,
    build_download_series,
    record_download_snapshot,
    resolve_fine_tunes,
)
from .analytics import (
    DensityCurve,
    ForecastReport,
    Histogram,
    HistogramSpec,
    OrgDensityResult,
    PairwisePanel,
    forecast_report,
    org_density,
    pairwise_points,
    parameter_histograms,
    pareto_concentration,
)
from .store import Dataset, append_snapshot, load_records, save_records

__version__ = "0.1.0"
