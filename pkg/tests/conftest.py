from pathlib import Path

import pytest

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture()
def clean_env(monkeypatch):
    """Без переменных окружения FORGE_*"""
    for name in ("FORGE_WORKERS", "FORGE_SEED"):
        monkeypatch.delenv(name, raising=False)
