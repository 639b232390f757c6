"""Line-oriented JSONL persistence for catalogs, edges, series, snapshots, fits.

One JSON object per line, UTF-8, LF endings, keys in a fixed documented
order, and a versioned "schema" field per line. Rewrites go through a
temp file + rename so a crash never truncates the primary file. Dates are
RFC 3339 UTC strings; floats use Python's shortest round-trip repr (exact
for doubles).
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Any, Callable, Iterable

from .curve import FitParams
from .errors import CorruptStoreError, NotFoundError, StoreIOError, ValidationError
from .fitting import AdoptionSeries, FitResult
from .registry import DownloadSnapshot, FineTuneEdge, ModelMeta

__all__ = [
    "CATALOG_FILE",
    "EDGES_FILE",
    "SNAPSHOTS_FILE",
    "FITS_FILE",
    "SERIES_DIR",
    "save_records",
    "load_records",
    "append_snapshot",
    "SnapshotLog",
    "Dataset",
    "series_file_name",
]

CATALOG_FILE = "catalog.jsonl"
EDGES_FILE = "edges.jsonl"
SNAPSHOTS_FILE = "snapshots.jsonl"
FITS_FILE = "fits.jsonl"
SERIES_DIR = "series"

_INVALID_LINE_HARD_LIMIT = 0.10


def _rfc3339(dt: datetime) -> str:
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _parse_rfc3339(text: str) -> datetime:
    dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def _encode_model_meta(m: ModelMeta) -> dict:
    return {
        "schema": "model_meta.v1",
        "model_id": m.model_id,
        "organization": m.organization,
        "created_at": _rfc3339(m.created_at),
        "downloads_total": m.downloads_total,
        "tags": list(m.tags),
    }


def _decode_model_meta(obj: dict) -> ModelMeta:
    return ModelMeta(
        model_id=obj["model_id"],
        created_at=_parse_rfc3339(obj["created_at"]),
        downloads_total=int(obj["downloads_total"]),
        tags=tuple(obj["tags"]),
    )


def _encode_edge(e: FineTuneEdge) -> dict:
    return {
        "schema": "fine_tune_edge.v1",
        "base_id": e.base_id,
        "child_id": e.child_id,
        "detected_via": e.detected_via,
        "child_created_at": _rfc3339(e.child_created_at),
    }


def _decode_edge(obj: dict) -> FineTuneEdge:
    return FineTuneEdge(
        base_id=obj["base_id"],
        child_id=obj["child_id"],
        detected_via=obj["detected_via"],
        child_created_at=_parse_rfc3339(obj["child_created_at"]),
    )


def _encode_snapshot(s: DownloadSnapshot) -> dict:
    return {
        "schema": "download_snapshot.v1",
        "model_id": s.model_id,
        "snapshot_date": s.snapshot_date.isoformat(),
        "downloads_total": s.downloads_total,
    }


def _decode_snapshot(obj: dict) -> DownloadSnapshot:
    return DownloadSnapshot(
        model_id=obj["model_id"],
        snapshot_date=date.fromisoformat(obj["snapshot_date"]),
        downloads_total=int(obj["downloads_total"]),
    )


def _encode_series(s: AdoptionSeries) -> dict:
    return {
        "schema": "adoption_series.v1",
        "subject_id": s.subject_id,
        "release_instant": _rfc3339(s.release_instant),
        "bucket_length_days": s.bucket_length_days,
        "observation_offset_buckets": s.observation_offset_buckets,
        "cumulative": list(s.cumulative),
    }


def _decode_series(obj: dict) -> AdoptionSeries:
    return AdoptionSeries(
        subject_id=obj["subject_id"],
        release_instant=_parse_rfc3339(obj["release_instant"]),
        bucket_length_days=float(obj["bucket_length_days"]),
        cumulative=tuple(float(c) for c in obj["cumulative"]),
        observation_offset_buckets=float(obj["observation_offset_buckets"]),
    )


def _encode_fit(f: FitResult) -> dict:
    return {
        "schema": "fit_result.v1",
        "subject_id": f.subject_id,
        "status": f.status,
        "lambda": f.params.lam,
        "mu": f.params.mu,
        "sigma": f.params.sigma,
        "m": f.params.m,
        "rmse_log": f.rmse_log,
        "n_points": f.n_points,
        "n_restarts_used": f.n_restarts_used,
    }


def _decode_fit(obj: dict) -> FitResult:
    return FitResult(
        subject_id=obj["subject_id"],
        params=FitParams(
            lam=float(obj["lambda"]),
            mu=float(obj["mu"]),
            sigma=float(obj["sigma"]),
            m=float(obj["m"]),
        ),
        status=obj["status"],
        rmse_log=float(obj["rmse_log"]),
        n_points=int(obj["n_points"]),
        n_restarts_used=int(obj["n_restarts_used"]),
    )


@dataclass(frozen=True)
class _Codec:
    schema: str
    record_type: type
    encode: Callable[[Any], dict]
    decode: Callable[[dict], Any]


_CODECS = {
    "model_meta": _Codec("model_meta.v1", ModelMeta, _encode_model_meta, _decode_model_meta),
    "fine_tune_edge": _Codec("fine_tune_edge.v1", FineTuneEdge, _encode_edge, _decode_edge),
    "download_snapshot": _Codec(
        "download_snapshot.v1", DownloadSnapshot, _encode_snapshot, _decode_snapshot
    ),
    "adoption_series": _Codec(
        "adoption_series.v1", AdoptionSeries, _encode_series, _decode_series
    ),
    "fit_result": _Codec("fit_result.v1", FitResult, _encode_fit, _decode_fit),
}


def _codec_for(kind: str) -> _Codec:
    try:
        return _CODECS[kind]
    except KeyError:
        raise ValidationError(f"unknown record kind {kind!r}") from None


def _codec_for_instance(record: Any) -> _Codec:
    for codec in _CODECS.values():
        if isinstance(record, codec.record_type):
            return codec
    raise ValidationError(f"no schema for record of type {type(record).__name__}")


def _dump_line(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(", ", ": "))


def save_records(path: str | Path, records: Iterable[Any]) -> int:
    """Atomically (re)write ``path`` with one record per line; returns count."""
    path = Path(path)
    records = list(records)
    lines = []
    codec = None
    for record in records:
        c = _codec_for_instance(record)
        if codec is None:
            codec = c
        elif c is not codec:
            raise ValidationError(
                f"mixed record types: {codec.record_type.__name__} and "
                f"{c.record_type.__name__}"
            )
        lines.append(_dump_line(codec.encode(record)))
    payload = "".join(line + "\n" for line in lines)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
                handle.write(payload)
                handle.flush()
                os.fsync(handle.fileno())
            os.replace(tmp_name, path)
        except BaseException:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise
    except OSError as exc:
        raise StoreIOError(f"cannot write {path}: {exc}") from exc
    return len(records)


@dataclass
class LineError:
    line_number: int
    message: str


def load_records(path: str | Path, kind: str) -> tuple[list, list[LineError]]:
    """Parse every line of ``path`` as ``kind``.

    Returns (records, errors); error entries carry 1-based line numbers.
    Raises NotFoundError for a missing file and CorruptStoreError when more
    than 10% of lines fail (usually a file of the wrong kind).
    """
    codec = _codec_for(kind)
    path = Path(path)
    if not path.exists():
        raise NotFoundError(f"no such file: {path}")
    records: list = []
    errors: list[LineError] = []
    n_lines = 0
    with open(path, encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            n_lines += 1
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise ValueError("line is not a JSON object")
                if obj.get("schema") != codec.schema:
                    raise ValueError(
                        f"schema {obj.get('schema')!r}, expected {codec.schema!r}"
                    )
                records.append(codec.decode(obj))
            except (ValueError, KeyError, TypeError) as exc:
                errors.append(LineError(line_number, str(exc)))
    if n_lines and len(errors) / n_lines > _INVALID_LINE_HARD_LIMIT:
        raise CorruptStoreError(
            f"{len(errors)}/{n_lines} lines of {path} invalid as {kind!r}; "
            "likely the wrong record kind"
        )
    return records, errors


class SnapshotLog:
    """Append-only download-snapshot log, idempotent per (model_id, date).

    Single-writer: one SnapshotLog instance owns the file while appending.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._seen: set[tuple[str, str]] = set()
        if self.path.exists():
            records, _ = load_records(self.path, "download_snapshot")
            for snap in records:
                self._seen.add((snap.model_id, snap.snapshot_date.isoformat()))

    def __contains__(self, key: tuple[str, date]) -> bool:
        model_id, snapshot_date = key
        return (model_id, snapshot_date.isoformat()) in self._seen

    def append(self, snapshot: DownloadSnapshot) -> bool:
        key = (snapshot.model_id, snapshot.snapshot_date.isoformat())
        if key in self._seen:
            return False
        line = _dump_line(_encode_snapshot(snapshot)) + "\n"
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8", newline="\n") as handle:
                handle.write(line)
                handle.flush()
                os.fsync(handle.fileno())
        except OSError as exc:
            raise StoreIOError(f"cannot append to {self.path}: {exc}") from exc
        self._seen.add(key)
        return True


def append_snapshot(path: str | Path, snapshot: DownloadSnapshot) -> bool:
    """One-shot append; returns whether a line was written."""
    return SnapshotLog(path).append(snapshot)


def series_file_name(subject_id: str) -> str:
    return subject_id.replace("/", "__") + ".jsonl"


class Dataset:
    """File layout of one dataset root; see module docstring for schemas."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    @property
    def catalog_path(self) -> Path:
        return self.root / CATALOG_FILE

    @property
    def edges_path(self) -> Path:
        return self.root / EDGES_FILE

    @property
    def snapshots_path(self) -> Path:
        return self.root / SNAPSHOTS_FILE

    @property
    def fits_path(self) -> Path:
        return self.root / FITS_FILE

    @property
    def series_dir(self) -> Path:
        return self.root / SERIES_DIR

    def series_path(self, subject_id: str) -> Path:
        return self.series_dir / series_file_name(subject_id)

    def save_catalog(self, models) -> int:
        return save_records(self.catalog_path, models)

    def load_catalog(self) -> list[ModelMeta]:
        return load_records(self.catalog_path, "model_meta")[0]

    def save_edges(self, edges) -> int:
        return save_records(self.edges_path, edges)

    def load_edges(self) -> list[FineTuneEdge]:
        return load_records(self.edges_path, "fine_tune_edge")[0]

    def save_series(self, series: AdoptionSeries) -> None:
        save_records(self.series_path(series.subject_id), [series])

    def load_series(self, subject_id: str) -> AdoptionSeries:
        records, _ = load_records(self.series_path(subject_id), "adoption_series")
        if not records:
            raise NotFoundError(f"series file for {subject_id!r} is empty")
        return records[0]

    def list_series_subjects(self) -> list[str]:
        if not self.series_dir.is_dir():
            return []
        subjects = []
        for entry in sorted(self.series_dir.glob("*.jsonl")):
            subjects.append(entry.stem.replace("__", "/"))
        return subjects

    def load_fits(self) -> list[FitResult]:
        return load_records(self.fits_path, "fit_result")[0]

    def upsert_fit(self, fit: FitResult) -> None:
        """Replace-or-append the fit for fit.subject_id, keyed by subject."""
        existing: list[FitResult] = []
        if self.fits_path.exists():
            existing = self.load_fits()
        merged = [f for f in existing if f.subject_id != fit.subject_id]
        merged.append(fit)
        merged.sort(key=lambda f: f.subject_id)
        save_records(self.fits_path, merged)

    def snapshot_log(self) -> SnapshotLog:
        return SnapshotLog(self.snapshots_path)

    def load_snapshots(self) -> list[DownloadSnapshot]:
        return load_records(self.snapshots_path, "download_snapshot")[0]

    def dangling_edges(self) -> list[FineTuneEdge]:
        """Edges whose base or child is missing from the catalog (flag, not error)."""
        catalog_ids = {m.model_id for m in self.load_catalog()}
        return [
            e
            for e in self.load_edges()
            if e.base_id not in catalog_ids or e.child_id not in catalog_ids
        ]
