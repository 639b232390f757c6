"""Registry ingestion: model metadata, fine-tune edges, and download snapshots.

Talks to a HuggingFace-style HTTP API (GET {base_url}/api/models with
author/id/cursor/limit query params, JSON-array responses, pagination via
the X-Next-Cursor response header). Everything downstream of the HTTP
client is pure and deterministic.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone

import requests

from .errors import (
    InsufficientDataError,
    NotFoundError,
    PermanentRegistryError,
    TransientRegistryError,
    ValidationError,
)
from .fitting import AdoptionSeries

__all__ = [
    "ModelMeta",
    "FineTuneEdge",
    "DownloadSnapshot",
    "RegistryConfig",
    "RegistryClient",
    "IngestDiagnostics",
    "resolve_fine_tunes",
    "build_adoption_series",
    "build_download_series",
    "record_download_snapshot",
    "parse_rfc3339",
]

logger = logging.getLogger(__name__)

DETECTED_VIA_TAG = "tag_exact"
DETECTED_VIA_NAME = "name_substring"

NEXT_CURSOR_HEADER = "X-Next-Cursor"


def parse_rfc3339(text: str) -> datetime:
    dt = datetime.fromisoformat(str(text).replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def _utc(dt: datetime) -> datetime:
    if dt.tzinfo is None:
        return dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


@dataclass(frozen=True)
class ModelMeta:
    """Registry metadata for one model; organization is the id's "/" prefix."""

    model_id: str
    created_at: datetime
    downloads_total: int = 0
    tags: tuple[str, ...] = ()

    def __post_init__(self):
        if self.model_id.count("/") != 1:
            raise ValidationError(
                f"model_id must be 'org/name' with exactly one '/', got {self.model_id!r}"
            )
        if self.downloads_total < 0:
            raise ValidationError("downloads_total must be >= 0")
        object.__setattr__(self, "created_at", _utc(self.created_at))
        object.__setattr__(self, "tags", tuple(self.tags))

    @property
    def organization(self) -> str:
        return self.model_id.split("/", 1)[0]

    @property
    def bare_name(self) -> str:
        return self.model_id.split("/", 1)[1]

    @classmethod
    def from_registry_record(cls, obj: dict) -> "ModelMeta":
        return cls(
            model_id=str(obj["id"]),
            created_at=parse_rfc3339(obj["createdAt"]),
            downloads_total=int(obj.get("downloads", 0) or 0),
            tags=tuple(str(t) for t in obj.get("tags", ())),
        )


@dataclass(frozen=True)
class FineTuneEdge:
    base_id: str
    child_id: str
    detected_via: str
    child_created_at: datetime

    def __post_init__(self):
        if self.base_id == self.child_id:
            raise ValidationError(f"self-edge on {self.base_id!r}")
        if self.detected_via not in (DETECTED_VIA_TAG, DETECTED_VIA_NAME):
            raise ValidationError(f"unknown detected_via {self.detected_via!r}")
        object.__setattr__(self, "child_created_at", _utc(self.child_created_at))


@dataclass(frozen=True)
class DownloadSnapshot:
    """Dated reading of a model's running total-download counter (UTC date)."""

    model_id: str
    snapshot_date: date
    downloads_total: int

    def __post_init__(self):
        if self.downloads_total < 0:
            raise ValidationError("downloads_total must be >= 0")


@dataclass
class IngestDiagnostics:
    """Tallies of the non-fatal events an ingestion run encountered."""

    fetch_attempts: int = 0
    skipped_records: int = 0
    pre_release_edges: int = 0
    clamped_snapshots: int = 0
    failed_ids: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class RegistryConfig:
    base_url: str = "https://huggingface.co"
    auth_token: str | None = None
    page_size: int = 100
    max_parallel_fetches: int = 4
    early_cutoff_date: date = date(2022, 3, 2)
    name_match_min_length: int = 5
    retry_base_delay_s: float = 1.0
    retry_max_attempts: int = 5
    request_timeout_s: float = 10.0

    @classmethod
    def from_mapping(cls, obj: dict) -> "RegistryConfig":
        kwargs = dict(obj)
        if "early_cutoff_date" in kwargs and isinstance(kwargs["early_cutoff_date"], str):
            kwargs["early_cutoff_date"] = date.fromisoformat(kwargs["early_cutoff_date"])
        known = {f for f in cls.__dataclass_fields__}  # type: ignore[attr-defined]
        unknown = set(kwargs) - known
        if unknown:
            raise ValidationError(f"unknown registry config keys: {sorted(unknown)}")
        return cls(**kwargs)


class RegistryClient:
    """Thin HTTP client with exponential-backoff retries on 429/5xx."""

    def __init__(self, config: RegistryConfig, session=None, sleep=time.sleep):
        self.config = config
        self.session = session or requests.Session()
        self._sleep = sleep

    def _request(self, params: dict, diagnostics: IngestDiagnostics | None):
        url = self.config.base_url.rstrip("/") + "/api/models"
        headers = {}
        if self.config.auth_token:
            headers["Authorization"] = f"Bearer {self.config.auth_token}"
        last_status = None
        for attempt in range(1, self.config.retry_max_attempts + 1):
            if diagnostics is not None:
                diagnostics.fetch_attempts += 1
            try:
                response = self.session.get(
                    url, params=params, headers=headers,
                    timeout=self.config.request_timeout_s,
                )
            except requests.RequestException as exc:
                last_status = f"network error: {exc}"
                response = None
            if response is not None:
                if response.status_code == 200:
                    return response
                if response.status_code == 429 or response.status_code >= 500:
                    last_status = f"HTTP {response.status_code}"
                else:
                    raise PermanentRegistryError(
                        f"registry rejected request: HTTP {response.status_code}"
                    )
            if attempt < self.config.retry_max_attempts:
                self._sleep(self.config.retry_base_delay_s * 2 ** (attempt - 1))
        raise TransientRegistryError(
            f"registry unavailable after {self.config.retry_max_attempts} attempts "
            f"({last_status})"
        )

    def fetch_models(
        self,
        author: str | None = None,
        ids: list[str] | None = None,
        cursor: str | None = None,
        diagnostics: IngestDiagnostics | None = None,
    ) -> tuple[list[ModelMeta], str | None]:
        """One page of parsed metadata plus the next pagination cursor.

        Unparseable records are skipped (and tallied in diagnostics), never fatal.
        """
        params: dict = {"limit": self.config.page_size}
        if author is not None:
            params["author"] = author
        if ids is not None:
            params["id"] = list(ids)
        if cursor is not None:
            params["cursor"] = cursor
        response = self._request(params, diagnostics)
        try:
            body = response.json()
        except ValueError as exc:
            raise PermanentRegistryError(f"response body is not JSON: {exc}") from exc
        if not isinstance(body, list):
            raise PermanentRegistryError("response body is not a JSON array")
        models: list[ModelMeta] = []
        for record in body:
            try:
                models.append(ModelMeta.from_registry_record(record))
            except (ValidationError, ValueError, KeyError, TypeError) as exc:
                logger.warning("skipping unparseable registry record: %s", exc)
                if diagnostics is not None:
                    diagnostics.skipped_records += 1
        return models, response.headers.get(NEXT_CURSOR_HEADER) or None

    def fetch_all(
        self,
        author: str | None = None,
        ids: list[str] | None = None,
        diagnostics: IngestDiagnostics | None = None,
    ) -> list[ModelMeta]:
        """All pages for one filter, duplicate-free in first-seen order."""
        seen: set[str] = set()
        out: list[ModelMeta] = []
        cursor: str | None = None
        while True:
            page, cursor = self.fetch_models(author, ids, cursor, diagnostics)
            for model in page:
                if model.model_id not in seen:
                    seen.add(model.model_id)
                    out.append(model)
            if cursor is None:
                return out


def resolve_fine_tunes(
    base_id: str,
    catalog: list[ModelMeta],
    name_match_min_length: int = 5,
) -> list[FineTuneEdge]:
    """Fine-tune edges of ``base_id`` within ``catalog``.

    A child matches if a tag equals base_model:{base_id} or
    base_model:finetune:{base_id}; failing that, if the base's bare name is a
    case-insensitive substring of the child's bare name and the child is not
    older than the base. Name matching needs at least
    ``name_match_min_length`` characters ("opt" would match thousands).
    """
    base = next((m for m in catalog if m.model_id == base_id), None)
    if base is None:
        raise NotFoundError(f"base model {base_id!r} not in catalog")
    tag_plain = f"base_model:{base_id}"
    tag_finetune = f"base_model:finetune:{base_id}"
    bare = base.bare_name.lower()
    name_rule_enabled = len(bare) >= name_match_min_length

    edges: list[FineTuneEdge] = []
    for child in catalog:
        if child.model_id == base_id:
            continue
        if tag_plain in child.tags or tag_finetune in child.tags:
            via = DETECTED_VIA_TAG
        elif (
            name_rule_enabled
            and bare in child.bare_name.lower()
            and child.created_at >= base.created_at
        ):
            via = DETECTED_VIA_NAME
        else:
            continue
        edges.append(
            FineTuneEdge(
                base_id=base_id,
                child_id=child.model_id,
                detected_via=via,
                child_created_at=child.created_at,
            )
        )
    return edges


def build_adoption_series(
    base: ModelMeta,
    edges: list[FineTuneEdge],
    bucket_length_days: float = 30.0,
    diagnostics: IngestDiagnostics | None = None,
) -> AdoptionSeries:
    """Bucket fine-tune creation dates into a cumulative series.

    Bucket k holds children created within [k, k+1) bucket lengths of the
    base release; edges dated before the release are excluded and tallied
    (usually a mislabeled tag).
    """
    if bucket_length_days <= 0:
        raise ValidationError("bucket_length_days must be > 0")
    for edge in edges:
        if edge.base_id != base.model_id:
            raise ValidationError(
                f"edge base {edge.base_id!r} does not match series base {base.model_id!r}"
            )
    buckets: list[int] = []
    for edge in edges:
        delta_days = (edge.child_created_at - base.created_at).total_seconds() / 86400.0
        if delta_days < 0:
            logger.warning(
                "excluding pre-release edge %s -> %s", edge.base_id, edge.child_id
            )
            if diagnostics is not None:
                diagnostics.pre_release_edges += 1
            continue
        buckets.append(int(math.floor(delta_days / bucket_length_days)))
    n_buckets = max(buckets) + 1 if buckets else 1
    counts = [0] * n_buckets
    for b in buckets:
        counts[b] += 1
    cumulative = []
    running = 0
    for c in counts:
        running += c
        cumulative.append(float(running))
    return AdoptionSeries(
        subject_id=base.model_id,
        release_instant=base.created_at,
        bucket_length_days=float(bucket_length_days),
        cumulative=tuple(cumulative),
        observation_offset_buckets=0.0,
    )


def build_download_series(
    snapshots: list[DownloadSnapshot],
    release: datetime,
    diagnostics: IngestDiagnostics | None = None,
) -> AdoptionSeries:
    """Daily cumulative download series from a snapshot log slice.

    Gaps are forward-filled with the previous value; a decreasing counter is
    clamped to the previous value and tallied (registry counters occasionally
    reset). The observation offset records how late snapshotting started.
    """
    if len(snapshots) < 2:
        raise InsufficientDataError("need at least 2 snapshots to build a series")
    model_ids = {s.model_id for s in snapshots}
    if len(model_ids) != 1:
        raise ValidationError(f"snapshots mix model ids: {sorted(model_ids)}")
    dates = [s.snapshot_date for s in snapshots]
    if any(b <= a for a, b in zip(dates, dates[1:])):
        raise ValidationError("snapshots must be sorted by date without duplicates")
    release = _utc(release)
    offset_days = (dates[0] - release.date()).days
    if offset_days < 0:
        raise ValidationError("first snapshot predates the release")

    by_date = {s.snapshot_date: s.downloads_total for s in snapshots}
    values: list[float] = []
    previous: float | None = None
    day = dates[0]
    while day <= dates[-1]:
        if day in by_date:
            value = float(by_date[day])
            if previous is not None and value < previous:
                logger.warning(
                    "download counter for %s decreased on %s (%s -> %s); clamping",
                    snapshots[0].model_id, day, previous, value,
                )
                if diagnostics is not None:
                    diagnostics.clamped_snapshots += 1
                value = previous
        else:
            value = previous if previous is not None else 0.0
        values.append(value)
        previous = value
        day = day + timedelta(days=1)

    return AdoptionSeries(
        subject_id=snapshots[0].model_id,
        release_instant=release,
        bucket_length_days=1.0,
        cumulative=tuple(values),
        observation_offset_buckets=float(offset_days),
    )


def record_download_snapshot(
    client: RegistryClient,
    log,
    ids: list[str],
    snapshot_date: date,
    diagnostics: IngestDiagnostics | None = None,
) -> int:
    """Append today's download counter for each id; idempotent per (id, date).

    ``log`` is a store.SnapshotLog (anything with __contains__ and append).
    A failed fetch skips that id and is reported; partial success is success.
    """
    appended = 0
    for model_id in ids:
        if (model_id, snapshot_date) in log:
            continue
        try:
            models, _ = client.fetch_models(ids=[model_id], diagnostics=diagnostics)
        except (TransientRegistryError, PermanentRegistryError) as exc:
            logger.warning("snapshot fetch failed for %s: %s", model_id, exc)
            if diagnostics is not None:
                diagnostics.failed_ids.append(model_id)
            continue
        match = next((m for m in models if m.model_id == model_id), None)
        if match is None:
            logger.warning("snapshot fetch for %s returned no record", model_id)
            if diagnostics is not None:
                diagnostics.failed_ids.append(model_id)
            continue
        if log.append(
            DownloadSnapshot(
                model_id=model_id,
                snapshot_date=snapshot_date,
                downloads_total=match.downloads_total,
            )
        ):
            appended += 1
    return appended
