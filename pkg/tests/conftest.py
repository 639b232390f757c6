from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parent.parent
FIXTURE_REGISTRY = REPO_ROOT / "demos" / "fixture_registry"


@pytest.fixture()
def fixture_registry_dir() -> Path:
    return FIXTURE_REGISTRY


@pytest.fixture(autouse=True)
def _isolate_env(monkeypatch):
    for name in ("REGISTRY_URL", "REGISTRY_TOKEN", "DATASET_ROOT"):
        monkeypatch.delenv(name, raising=False)
