"""Command-line pipeline: ingest -> store -> fit -> analyze/forecast.

One subcommand per invocation; configuration precedence is flags > env
vars (REGISTRY_URL, REGISTRY_TOKEN, DATASET_ROOT) > --config file. Errors
print a single machine-parsable line ``error[kind]: message``. Exit codes:
0 success, 1 validation/usage, 2 transient registry failure after retries.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from datetime import date
from pathlib import Path

from . import analytics
from .errors import (
    AdoptCurveError,
    CliUsageError,
    InsufficientDataError,
    NotFoundError,
    TransientRegistryError,
    ValidationError,
)
from .fitting import FitOptions, fit_series
from .fixture_server import FixtureRegistryServer
from .plots import render_plot
from .registry import (
    IngestDiagnostics,
    RegistryClient,
    RegistryConfig,
    build_adoption_series,
    build_download_series,
    record_download_snapshot,
    resolve_fine_tunes,
)
from .store import Dataset

logger = logging.getLogger(__name__)

_REGISTRY_KEYS = (
    "base_url",
    "auth_token",
    "page_size",
    "max_parallel_fetches",
    "early_cutoff_date",
    "name_match_min_length",
    "retry_base_delay_s",
    "retry_max_attempts",
    "request_timeout_s",
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); 2 is reserved
        raise CliUsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="adoptcurve", description=__doc__)
    parser.add_argument("--dataset", help="dataset root directory")
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--registry-url", help="registry base URL")
    parser.add_argument("--registry-token", help="registry bearer token")
    parser.add_argument(
        "--fixture",
        help="serve this directory as a local fixture registry instead of the live one",
    )
    parser.add_argument(
        "--format", choices=("csv", "jsonl", "svg"), default="csv",
        help="output format for analyze/forecast files",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)

    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="fetch catalog and fine-tune edges")
    p_ingest.add_argument("--org", action="append", default=[],
                          help="organization to fetch (repeatable)")
    p_ingest.add_argument("--ids", help="comma-separated model ids to fetch")

    p_snapshot = sub.add_parser("snapshot", help="record daily download counters")
    p_snapshot.add_argument("--ids", help="comma-separated model ids (default: catalog)")
    p_snapshot.add_argument("--date", help="snapshot date YYYY-MM-DD (default: today)")

    p_series = sub.add_parser("series", help="build adoption series from the store")
    p_series.add_argument("--subject", action="append", default=[],
                          help="base model id (repeatable; default: every base with edges)")
    p_series.add_argument("--bucket-days", type=float, default=30.0)
    p_series.add_argument("--downloads", action="store_true",
                          help="build daily download series from the snapshot log")

    p_fit = sub.add_parser("fit", help="fit stored series, write fits.jsonl")
    p_fit.add_argument("--subject", action="append", default=[],
                       help="series to fit (repeatable; default: all stored series)")
    p_fit.add_argument("--seed", type=int, default=0)
    p_fit.add_argument("--restarts", type=int, default=None)
    p_fit.add_argument("--max-iter", type=int, default=None)

    p_forecast = sub.add_parser("forecast", help="invert/evaluate a converged fit")
    p_forecast.add_argument("--subject", required=True)
    p_forecast.add_argument("--target", action="append", type=float, default=[])
    p_forecast.add_argument("--horizon", action="append", type=float, default=[])
    p_forecast.add_argument("--out", help="write the report table here")

    p_analyze = sub.add_parser("analyze", help="ecosystem analytics over stored fits")
    analyze_sub = p_analyze.add_subparsers(dest="analysis", required=True)

    p_pareto = analyze_sub.add_parser("pareto")
    p_pareto.add_argument("--kind", choices=("downloads", "finetunes"), required=True)
    p_pareto.add_argument("--threshold", type=float, default=0.8)
    p_pareto.add_argument("--out")

    p_params = analyze_sub.add_parser("params")
    p_params.add_argument("--scale", choices=("log10", "linear"), default="log10")
    p_params.add_argument("--bins", type=int, default=40)
    p_params.add_argument("--range", nargs=2, type=float, default=None,
                          metavar=("LOW", "HIGH"))
    p_params.add_argument("--out")

    p_pairwise = analyze_sub.add_parser("pairwise")
    p_pairwise.add_argument("--out")

    p_org = analyze_sub.add_parser("org-density")
    p_org.add_argument("--horizon", action="append", type=int, default=[])
    p_org.add_argument("--fitness", nargs=2, type=float, default=(1.0, 10.0),
                       metavar=("LOW", "HIGH"))
    p_org.add_argument("--grid-size", type=int, default=512)
    p_org.add_argument("--out")

    return parser


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"config file not found: {path}")
    try:
        obj = json.loads(p.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise ValidationError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ValidationError("config file must hold a JSON object")
    return obj


def _resolve(ns) -> tuple[Dataset, RegistryConfig]:
    file_cfg = _load_config_file(ns.config)

    root = ns.dataset or os.environ.get("DATASET_ROOT") or file_cfg.get("dataset_root")
    if not root:
        root = "dataset"
    dataset = Dataset(root)

    registry_kwargs = {k: file_cfg[k] for k in _REGISTRY_KEYS if k in file_cfg}
    env_url = os.environ.get("REGISTRY_URL")
    env_token = os.environ.get("REGISTRY_TOKEN")
    if env_url:
        registry_kwargs["base_url"] = env_url
    if env_token:
        registry_kwargs["auth_token"] = env_token
    if ns.registry_url:
        registry_kwargs["base_url"] = ns.registry_url
    if ns.registry_token:
        registry_kwargs["auth_token"] = ns.registry_token
    return dataset, RegistryConfig.from_mapping(registry_kwargs)


def _write_csv(path: str | Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _split_ids(text: str | None) -> list[str]:
    if not text:
        return []
    return [part.strip() for part in text.split(",") if part.strip()]


def cmd_ingest(ns, dataset: Dataset, registry_config: RegistryConfig) -> int:
    client = RegistryClient(registry_config)
    diag = IngestDiagnostics()
    models = []
    ids = _split_ids(ns.ids)
    if not ns.org and not ids:
        raise ValidationError("ingest needs --org or --ids")
    for org in ns.org:
        models.extend(client.fetch_all(author=org, diagnostics=diag))
    if ids:
        models.extend(client.fetch_all(ids=ids, diagnostics=diag))
    unique = {}
    for model in models:
        unique.setdefault(model.model_id, model)
    catalog = sorted(unique.values(), key=lambda m: m.model_id)
    dataset.save_catalog(catalog)

    edges = []
    for base in catalog:
        edges.extend(
            resolve_fine_tunes(
                base.model_id, catalog, registry_config.name_match_min_length
            )
        )
    dataset.save_edges(edges)
    print(
        f"ingested {len(catalog)} models, {len(edges)} fine-tune edges "
        f"({diag.skipped_records} records skipped)"
    )
    return 0


def cmd_snapshot(ns, dataset: Dataset, registry_config: RegistryConfig) -> int:
    client = RegistryClient(registry_config)
    ids = _split_ids(ns.ids) or [m.model_id for m in dataset.load_catalog()]
    snapshot_date = date.fromisoformat(ns.date) if ns.date else date.today()
    diag = IngestDiagnostics()
    appended = record_download_snapshot(
        client, dataset.snapshot_log(), ids, snapshot_date, diag
    )
    print(
        f"appended {appended} snapshots for {snapshot_date} "
        f"({len(diag.failed_ids)} failed: {','.join(diag.failed_ids) or '-'})"
    )
    return 0


def cmd_series(ns, dataset: Dataset, registry_config: RegistryConfig) -> int:
    catalog = {m.model_id: m for m in dataset.load_catalog()}
    diag = IngestDiagnostics()
    built = 0
    if ns.downloads:
        subjects = ns.subject
        if not subjects:
            raise ValidationError("series --downloads needs --subject")
        snapshots = dataset.load_snapshots()
        for subject in subjects:
            meta = catalog.get(subject)
            if meta is None:
                raise NotFoundError(f"{subject!r} not in catalog")
            mine = sorted(
                (s for s in snapshots if s.model_id == subject),
                key=lambda s: s.snapshot_date,
            )
            series = build_download_series(mine, meta.created_at, diag)
            dataset.save_series(series)
            built += 1
    else:
        edges = dataset.load_edges()
        by_base: dict[str, list] = {}
        for edge in edges:
            by_base.setdefault(edge.base_id, []).append(edge)
        subjects = ns.subject or sorted(by_base)
        for subject in subjects:
            meta = catalog.get(subject)
            if meta is None:
                raise NotFoundError(f"{subject!r} not in catalog")
            series = build_adoption_series(
                meta, by_base.get(subject, []), ns.bucket_days, diag
            )
            dataset.save_series(series)
            built += 1
    print(
        f"built {built} series ({diag.pre_release_edges} pre-release edges excluded, "
        f"{diag.clamped_snapshots} snapshots clamped)"
    )
    return 0


def cmd_fit(ns, dataset: Dataset, registry_config: RegistryConfig) -> int:
    kwargs = {"rng_seed": ns.seed}
    if ns.restarts is not None:
        kwargs["n_restarts"] = ns.restarts
    if ns.max_iter is not None:
        kwargs["max_iterations"] = ns.max_iter
    options = FitOptions(**kwargs)

    subjects = ns.subject or dataset.list_series_subjects()
    if not subjects:
        raise ValidationError("no stored series to fit")
    fitted = 0
    skipped = []
    for subject in subjects:
        series = dataset.load_series(subject)
        try:
            result = fit_series(series, options)
        except InsufficientDataError as exc:
            if ns.subject:
                raise
            skipped.append(subject)
            logger.warning("skipping %s: %s", subject, exc)
            continue
        dataset.upsert_fit(result)
        fitted += 1
        print(
            f"{subject}: status={result.status} lambda={result.params.lam:.6g} "
            f"mu={result.params.mu:.6g} sigma={result.params.sigma:.6g} "
            f"rmse_log={result.rmse_log:.3g}"
        )
    if skipped:
        print(f"skipped {len(skipped)} series with insufficient data")
    return 0


def _fit_for(dataset: Dataset, subject: str):
    for fit in dataset.load_fits():
        if fit.subject_id == subject:
            return fit
    raise NotFoundError(f"no stored fit for {subject!r}")


def cmd_forecast(ns, dataset: Dataset, registry_config: RegistryConfig) -> int:
    fit = _fit_for(dataset, ns.subject)
    report = analytics.forecast_report(fit, ns.target, ns.horizon)
    try:
        bucket_days = dataset.load_series(ns.subject).bucket_length_days
    except (NotFoundError, AdoptCurveError):
        bucket_days = None

    rows = []
    for row in report.targets:
        if row.unreachable:
            print(f"target {row.target:g}: unreachable (ceiling={row.ceiling:g})")
            rows.append(["target", row.target, "", row.ceiling])
        else:
            days = f" ({row.time_buckets * bucket_days:.1f} days)" if bucket_days else ""
            print(f"target {row.target:g}: reached at t={row.time_buckets:.4g} buckets{days}")
            rows.append(["target", row.target, row.time_buckets, row.ceiling])
    for row in report.horizons:
        print(f"horizon t={row.horizon_buckets:g}: expected count {row.expected_count:.6g}")
        rows.append(["horizon", row.horizon_buckets, row.expected_count, ""])
    if ns.out:
        _write_csv(ns.out, ["direction", "key", "value", "ceiling"], rows)
    return 0


def _analyze_pareto(ns, dataset: Dataset) -> int:
    if ns.kind == "downloads":
        values = [float(m.downloads_total) for m in dataset.load_catalog()]
    else:
        counts: dict[str, int] = {}
        for edge in dataset.load_edges():
            counts[edge.base_id] = counts.get(edge.base_id, 0) + 1
        values = [float(counts[k]) for k in sorted(counts)]
    fraction, count = analytics.pareto_concentration(values, ns.threshold)
    print(
        f"{count} of {len(values)} items ({fraction:.2%}) hold "
        f"{ns.threshold:.0%} of total {ns.kind}"
    )
    if ns.out:
        _write_csv(
            ns.out,
            ["kind", "mass_threshold", "item_count", "item_fraction", "total_items"],
            [[ns.kind, ns.threshold, count, fraction, len(values)]],
        )
    return 0


def _analyze_params(ns, dataset: Dataset, out_format: str) -> int:
    spec = analytics.HistogramSpec(
        scale=ns.scale,
        bin_count=ns.bins,
        range=tuple(ns.range) if ns.range else None,
    )
    hists = analytics.parameter_histograms(dataset.load_fits(), spec)
    for name, hist in hists.items():
        print(
            f"{name}: {sum(hist.counts)} in range, underflow={hist.underflow}, "
            f"overflow={hist.overflow}"
        )
    if not ns.out:
        return 0
    if out_format == "svg":
        stem = Path(ns.out)
        for name, hist in hists.items():
            centers = [
                0.5 * (hist.edges[i] + hist.edges[i + 1])
                for i in range(len(hist.counts))
            ]
            render_plot(
                stem.with_name(f"{stem.stem}_{name}.svg"),
                [(name, centers, [float(c) for c in hist.counts])],
                title=f"{name} distribution ({hist.scale} scale)",
                x_label=f"{name} ({hist.scale})",
                y_label="count",
            )
        return 0
    rows = []
    for name, hist in hists.items():
        rows.append([name, "underflow", "", "", hist.underflow])
        for i, count in enumerate(hist.counts):
            rows.append([name, i, hist.edges[i], hist.edges[i + 1], count])
        rows.append([name, "overflow", "", "", hist.overflow])
    _write_csv(ns.out, ["parameter", "bin", "low", "high", "count"], rows)
    return 0


def _analyze_pairwise(ns, dataset: Dataset, out_format: str) -> int:
    panels = analytics.pairwise_points(dataset.load_fits())
    for panel in panels:
        print(f"({panel.x_name}, {panel.y_name}): {len(panel.points)} points")
    if not ns.out:
        return 0
    if out_format == "svg":
        stem = Path(ns.out)
        for panel in panels:
            render_plot(
                stem.with_name(f"{stem.stem}_{panel.x_name}_{panel.y_name}.svg"),
                [
                    (
                        f"{panel.x_name} vs {panel.y_name}",
                        [p[1] for p in panel.points],
                        [p[2] for p in panel.points],
                    )
                ],
                title=f"{panel.x_name} vs {panel.y_name}",
                x_label=panel.x_name,
                y_label=panel.y_name,
                kind="scatter",
            )
        return 0
    rows = [
        [panel.x_name, panel.y_name, sid, x, y]
        for panel in panels
        for sid, x, y in panel.points
    ]
    _write_csv(ns.out, ["x_name", "y_name", "subject_id", "x", "y"], rows)
    return 0


def _analyze_org_density(ns, dataset: Dataset, out_format: str) -> int:
    horizons = ns.horizon or [2, 6, 12]
    fits = dataset.load_fits()
    series_map = {s: dataset.load_series(s) for s in dataset.list_series_subjects()}
    rows = []
    exclusion_rows = []
    for horizon in horizons:
        result = analytics.org_density(
            fits, series_map, horizon, tuple(ns.fitness), ns.grid_size
        )
        print(
            f"horizon {horizon}: {len(result.curves)} org curves, "
            f"{len(result.excluded_subjects)} subjects excluded, "
            f"orgs excluded: {','.join(result.excluded_orgs) or '-'}"
        )
        for curve in result.curves:
            for g, d in zip(curve.grid, curve.density):
                rows.append([curve.organization, horizon, g, d])
        for subject, reason in result.excluded_subjects:
            exclusion_rows.append([horizon, "subject", subject, reason])
        for org in result.excluded_orgs:
            exclusion_rows.append([horizon, "organization", org, "fewer than 2 subjects"])
        if ns.out and out_format == "svg":
            stem = Path(ns.out)
            render_plot(
                stem.with_name(f"{stem.stem}_h{horizon}.svg"),
                [
                    (c.organization, list(c.grid), list(c.density))
                    for c in result.curves
                ],
                title=f"cumulative-count density at {horizon} buckets",
                x_label="cumulative count",
                y_label="density",
            )
    if ns.out and out_format != "svg":
        _write_csv(
            ns.out,
            ["organization", "horizon_buckets", "c_value", "density"],
            rows,
        )
        exclusions_path = Path(ns.out).with_suffix(".exclusions.csv")
        _write_csv(
            exclusions_path, ["horizon_buckets", "kind", "name", "reason"], exclusion_rows
        )
    return 0


def cmd_analyze(ns, dataset: Dataset, registry_config: RegistryConfig) -> int:
    if ns.analysis == "pareto":
        return _analyze_pareto(ns, dataset)
    if ns.analysis == "params":
        return _analyze_params(ns, dataset, ns.format)
    if ns.analysis == "pairwise":
        return _analyze_pairwise(ns, dataset, ns.format)
    return _analyze_org_density(ns, dataset, ns.format)


_COMMANDS = {
    "ingest": cmd_ingest,
    "snapshot": cmd_snapshot,
    "series": cmd_series,
    "fit": cmd_fit,
    "forecast": cmd_forecast,
    "analyze": cmd_analyze,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.DEBUG if ns.verbose > 1 else
            logging.INFO if ns.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
        )
        dataset, registry_config = _resolve(ns)
        handler = _COMMANDS[ns.command]
        if ns.fixture and ns.command in ("ingest", "snapshot"):
            with FixtureRegistryServer(directory=ns.fixture) as server:
                registry_config = RegistryConfig.from_mapping(
                    {
                        **{
                            k: getattr(registry_config, k)
                            for k in _REGISTRY_KEYS
                            if k != "base_url"
                        },
                        "base_url": server.base_url,
                    }
                )
                return handler(ns, dataset, registry_config)
        return handler(ns, dataset, registry_config)
    except TransientRegistryError as exc:
        print(f"error[{exc.kind}]: {exc}", file=sys.stderr)
        return 2
    except AdoptCurveError as exc:
        print(f"error[{exc.kind}]: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error[validation]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
