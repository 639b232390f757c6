"""End-to-end CLI tests against the bundled fixture registry."""

import json
import subprocess
import sys
from pathlib import Path

import pytest

from adoptcurve.cli import main
from adoptcurve.fixture_server import FixtureRegistryServer

ALL_ORGS = ["meta", "qwen", "stability", "ibm", "community", "tuner", "random"]


def run_ingest(dataset: Path, fixture_dir: Path) -> int:
    argv = ["--dataset", str(dataset), "--fixture", str(fixture_dir), "ingest"]
    for org in ALL_ORGS:
        argv += ["--org", org]
    return main(argv)


def run_pipeline(dataset: Path, fixture_dir: Path) -> None:
    assert run_ingest(dataset, fixture_dir) == 0
    assert main(["--dataset", str(dataset), "series"]) == 0
    assert main(["--dataset", str(dataset), "fit", "--seed", "0"]) == 0


class TestHelp:
    @pytest.mark.parametrize(
        "argv",
        [
            ["--help"],
            ["ingest", "--help"],
            ["snapshot", "--help"],
            ["series", "--help"],
            ["fit", "--help"],
            ["forecast", "--help"],
            ["analyze", "--help"],
            ["analyze", "pareto", "--help"],
            ["analyze", "org-density", "--help"],
        ],
    )
    def test_help_exits_zero(self, argv, capsys):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 0
        assert "usage" in capsys.readouterr().out

    def test_unknown_flag_rejected(self, capsys):
        assert main(["fit", "--no-such-flag"]) == 1
        assert "error[usage]:" in capsys.readouterr().err

    def test_missing_subcommand_rejected(self, capsys):
        assert main([]) == 1
        assert "error[usage]:" in capsys.readouterr().err


class TestPipeline:
    def test_ingest_series_fit(self, tmp_path, fixture_registry_dir, capsys):
        run_pipeline(tmp_path / "ds", fixture_registry_dir)
        out = capsys.readouterr().out
        assert "ingested 159 models" in out
        assert "failed_sentinel" in out  # the burst-adopted base
        fits = (tmp_path / "ds" / "fits.jsonl").read_text().splitlines()
        assert len(fits) == 8

    def test_fit_single_subject_appends_one_line(
        self, tmp_path, fixture_registry_dir
    ):
        ds = tmp_path / "ds"
        assert run_ingest(ds, fixture_registry_dir) == 0
        assert main(["--dataset", str(ds), "series"]) == 0
        assert (
            main(["--dataset", str(ds), "fit", "--subject", "meta/llama-mini"]) == 0
        )
        lines = (ds / "fits.jsonl").read_text().splitlines()
        assert len(lines) == 1
        assert json.loads(lines[0])["subject_id"] == "meta/llama-mini"

    def test_rerun_is_byte_identical(self, tmp_path, fixture_registry_dir):
        ds_a, ds_b = tmp_path / "a", tmp_path / "b"
        for ds in (ds_a, ds_b):
            run_pipeline(ds, fixture_registry_dir)
            assert main(
                ["--dataset", str(ds), "analyze", "pareto", "--kind", "downloads",
                 "--out", str(ds / "pareto.csv")]
            ) == 0
            assert main(
                ["--dataset", str(ds), "analyze", "org-density",
                 "--out", str(ds / "density.csv")]
            ) == 0
        for rel in ["catalog.jsonl", "edges.jsonl", "fits.jsonl",
                    "pareto.csv", "density.csv", "density.exclusions.csv"]:
            assert (ds_a / rel).read_bytes() == (ds_b / rel).read_bytes(), rel
        series_a = sorted(p.name for p in (ds_a / "series").iterdir())
        series_b = sorted(p.name for p in (ds_b / "series").iterdir())
        assert series_a == series_b
        for name in series_a:
            assert (ds_a / "series" / name).read_bytes() == (
                ds_b / "series" / name
            ).read_bytes()

    def test_snapshot_idempotent_and_download_series(
        self, tmp_path, fixture_registry_dir, capsys
    ):
        ds = tmp_path / "ds"
        assert run_ingest(ds, fixture_registry_dir) == 0
        base_args = ["--dataset", str(ds), "--fixture", str(fixture_registry_dir)]
        assert main(base_args + ["snapshot", "--ids", "meta/llama-mini",
                                 "--date", "2025-01-20"]) == 0
        assert main(base_args + ["snapshot", "--ids", "meta/llama-mini",
                                 "--date", "2025-01-21"]) == 0
        capsys.readouterr()
        assert main(base_args + ["snapshot", "--ids", "meta/llama-mini",
                                 "--date", "2025-01-21"]) == 0
        assert "appended 0 snapshots" in capsys.readouterr().out
        snapshots = (ds / "snapshots.jsonl").read_text().splitlines()
        assert len(snapshots) == 2
        assert main(["--dataset", str(ds), "series", "--downloads",
                     "--subject", "meta/llama-mini"]) == 0
        series_line = json.loads(
            (ds / "series" / "meta__llama-mini.jsonl").read_text()
        )
        assert series_line["bucket_length_days"] == 1.0
        assert series_line["observation_offset_buckets"] > 0

    def test_svg_output_deterministic(self, tmp_path, fixture_registry_dir):
        ds = tmp_path / "ds"
        run_pipeline(ds, fixture_registry_dir)
        out_a, out_b = tmp_path / "a.svg", tmp_path / "b.svg"
        for out in (out_a, out_b):
            assert main(["--dataset", str(ds), "--format", "svg", "analyze",
                         "org-density", "--horizon", "6", "--out", str(out)]) == 0
        file_a = out_a.with_name("a_h6.svg")
        file_b = out_b.with_name("b_h6.svg")
        assert file_a.read_bytes() == file_b.read_bytes()
        assert file_a.read_text().startswith("<svg")


class TestForecast:
    def test_forecast_and_unreachable(self, tmp_path, fixture_registry_dir, capsys):
        ds = tmp_path / "ds"
        run_pipeline(ds, fixture_registry_dir)
        capsys.readouterr()
        assert main(["--dataset", str(ds), "forecast", "--subject", "meta/llama-mini",
                     "--target", "25", "--target", "1e9",
                     "--horizon", "6", "--out", str(ds / "forecast.csv")]) == 0
        out = capsys.readouterr().out
        assert "reached at t=" in out and "days" in out
        assert "unreachable (ceiling=" in out
        assert (ds / "forecast.csv").exists()

    def test_non_converged_fit_refused(self, tmp_path, fixture_registry_dir, capsys):
        ds = tmp_path / "ds"
        run_pipeline(ds, fixture_registry_dir)
        capsys.readouterr()
        code = main(["--dataset", str(ds), "forecast",
                     "--subject", "qwen/qwen-burst", "--target", "10"])
        assert code == 1
        assert "error[not-converged]:" in capsys.readouterr().err


class TestErrors:
    def test_fit_without_series_is_validation_error(self, tmp_path, capsys):
        assert main(["--dataset", str(tmp_path / "empty"), "fit"]) == 1
        assert "error[validation]:" in capsys.readouterr().err

    def test_transient_failure_exits_2(self, tmp_path, capsys):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"retry_base_delay_s": 0.0}))
        with FixtureRegistryServer(records=[], statuses=[500] * 5) as server:
            code = main(["--dataset", str(tmp_path / "ds"), "--config", str(config),
                         "--registry-url", server.base_url, "ingest", "--org", "x"])
        assert code == 2
        assert "error[transient]:" in capsys.readouterr().err

    def test_unknown_subject_not_found(self, tmp_path, fixture_registry_dir, capsys):
        ds = tmp_path / "ds"
        run_pipeline(ds, fixture_registry_dir)
        capsys.readouterr()
        assert main(["--dataset", str(ds), "forecast", "--subject", "no/body",
                     "--target", "1"]) == 1
        assert "error[not-found]:" in capsys.readouterr().err

    def test_dataset_root_env_fallback(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("DATASET_ROOT", str(tmp_path / "envds"))
        assert main(["fit"]) == 1  # no series there, but the root resolved via env
        assert "error[validation]:" in capsys.readouterr().err


class TestConsoleEntry:
    def test_module_invocation(self, tmp_path, fixture_registry_dir):
        ds = tmp_path / "ds"
        argv = [sys.executable, "-m", "adoptcurve", "--dataset", str(ds),
                "--fixture", str(fixture_registry_dir), "ingest", "--org", "meta",
                "--org", "community"]
        proc = subprocess.run(argv, capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert "ingested" in proc.stdout
