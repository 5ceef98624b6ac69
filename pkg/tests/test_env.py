import pytest

from asrforge.pipeline import PipelineRunner


def test_env_warning(monkeypatch, clean_env):
    monkeypatch.setenv("FORGE_WORKERS", "3")
    with pytest.warns(UserWarning, match="FORGE_WORKERS"):
        runner = PipelineRunner(workers=2)
    assert runner.workers == 3


def test_env_without_argument(monkeypatch, clean_env):
    monkeypatch.setenv("FORGE_SEED", "42")
    assert PipelineRunner(workers=1).seed == 42


def test_env_ignored_without_trust(monkeypatch, clean_env):
    monkeypatch.setenv("FORGE_WORKERS", "3")
    monkeypatch.setenv("FORGE_SEED", "42")
    runner = PipelineRunner(workers=2, trust_env=False)
    assert (runner.workers, runner.seed) == (2, 0)


def test_defaults(clean_env):
    runner = PipelineRunner()
    assert runner.workers >= 1
    assert runner.seed == 0
