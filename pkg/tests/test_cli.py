import json
import shutil
from pathlib import Path

import pytest
from typer.testing import CliRunner

from asrforge import __version__
from asrforge.cli import app
from asrforge.manifest import read_manifest, write_manifest
from asrforge.map_types.enums import ModelSize, Source, Stage
from tests.helpers import make_segment, planted_corpus

runner = CliRunner()


@pytest.fixture()
def manifest(tmp_path: Path) -> Path:
    segments, _ = planted_corpus(20, seed=6)
    path = tmp_path / "manifest.jsonl"
    write_manifest(path, segments)
    return path


def test_version():
    result = runner.invoke(app, ["-v"])
    assert result.exit_code == 0
    assert __version__ in result.stdout


def test_ingest(tmp_path, data_dir):
    output = tmp_path / "nrk.jsonl"
    result = runner.invoke(
        app,
        [
            "ingest",
            "-o",
            str(output),
            "--durations",
            str(data_dir / "durations.json"),
            str(data_dir / "nrk_sample.srt"),
        ],
    )
    assert result.exit_code == 0
    segments = list(read_manifest(output))
    assert len(segments) == 7
    assert sum(s.source is Source.NRK_NO_CAPTION for s in segments) == 5


def test_ingest_directory_vtt(tmp_path, data_dir):
    shutil.copy(data_dir / "nrk_sample.vtt", tmp_path / "episode.vtt")
    output = tmp_path / "out" / "vtt.jsonl"
    result = runner.invoke(
        app, ["ingest", "-f", "vtt", "--no-no-speech", "-o", str(output), str(tmp_path)]
    )
    assert result.exit_code == 0
    assert [s.text for s in read_manifest(output)] == ["Hei på deg Ha det bra"]


def test_ingest_broken_file(tmp_path, data_dir):
    result = runner.invoke(
        app, ["ingest", "-o", str(tmp_path / "x.jsonl"), str(data_dir / "broken.srt")]
    )
    assert result.exit_code == 2
    assert not (tmp_path / "x.jsonl").exists()


@pytest.mark.parametrize("options, exit_code", [([], 2), (["--encoding", "latin-1"], 0)])
def test_ingest_encoding(tmp_path, options: list[str], exit_code: int):
    srt = tmp_path / "latin.srt"
    srt.write_bytes("1\n00:00:01,000 --> 00:00:03,000\nHei på deg\n".encode("latin-1"))
    output = tmp_path / "out.jsonl"
    result = runner.invoke(
        app, ["ingest", "--no-no-speech", *options, "-o", str(output), str(srt)]
    )
    assert result.exit_code == exit_code
    if exit_code == 0:
        assert [s.text for s in read_manifest(output)] == ["Hei på deg"]
    else:
        assert not output.exists()


def test_ingest_without_files(tmp_path):
    result = runner.invoke(app, ["ingest", "-o", str(tmp_path / "x.jsonl"), str(tmp_path)])
    assert result.exit_code == 1


def test_align(tmp_path, data_dir):
    output = tmp_path / "book.jsonl"
    result = runner.invoke(
        app,
        [
            "align",
            "--ref",
            str(data_dir / "book.txt"),
            "--hyp",
            str(data_dir / "book_words.jsonl"),
            "--lexicon",
            str(data_dir / "lexicon.tsv"),
            "--target-duration",
            "6000",
            "-o",
            str(output),
        ],
    )
    assert result.exit_code == 0
    segments = list(read_manifest(output))
    assert len(segments) == 4
    assert segments[0].source is Source.AUDIO_BOOKS


def test_filter(tmp_path, manifest):
    output = tmp_path / "kept.jsonl"
    rejects = tmp_path / "rejects.jsonl"
    report = tmp_path / "report.json"
    result = runner.invoke(
        app,
        [
            "filter",
            "-i",
            str(manifest),
            "-o",
            str(output),
            "--rejects",
            str(rejects),
            "--report",
            str(report),
            "--mark-stage",
            "stage2",
            "-w",
            "1",
        ],
    )
    assert result.exit_code == 0
    kept = list(read_manifest(output))
    assert kept and all(s.stage is Stage.STAGE2 for s in kept)
    summary = json.loads(report.read_text(encoding="utf-8"))
    assert summary["rejected"] == 6
    assert summary["hours_removed"] == pytest.approx(6 * 5000 / 3_600_000)
    assert len(rejects.read_text(encoding="utf-8").splitlines()) == 6


def test_eval_and_report(tmp_path, manifest):
    reports = []
    for system, size in (("NB-Whisper", ModelSize.LARGE), ("OpenAI", ModelSize.LARGE)):
        out = tmp_path / f"{system}.json"
        result = runner.invoke(
            app,
            [
                "eval",
                "-i",
                str(manifest),
                "--model",
                "m0",
                "--system",
                system,
                "--size",
                size.value,
                "-o",
                str(out),
            ],
        )
        assert result.exit_code == 0
        reports += ["-i", str(out)]

    table = tmp_path / "tables" / "table.csv"
    result = runner.invoke(app, ["report", *reports, "-o", str(table)])
    assert result.exit_code == 0
    assert [p.name for p in table.parent.iterdir()] == ["table.csv"]
    lines = table.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "model,NB-Whisper,OpenAI"
    assert lines[1].startswith("Large,")


def test_stats_and_diff(tmp_path, manifest):
    before = tmp_path / "before.json"
    after = tmp_path / "after.json"
    kept = tmp_path / "kept.jsonl"
    assert runner.invoke(app, ["stats", "-i", str(manifest), "-o", str(before)]).exit_code == 0
    runner.invoke(app, ["filter", "-i", str(manifest), "-o", str(kept), "-w", "1"])
    assert runner.invoke(app, ["stats", "-i", str(kept), "-o", str(after)]).exit_code == 0
    result = runner.invoke(app, ["stats-diff", str(before), str(after)])
    assert result.exit_code == 0
    assert "NRK - Subtitles" in result.stdout


def test_train_config(tmp_path):
    output = tmp_path / "config.json"
    result = runner.invoke(
        app,
        ["train-config", "--size", "large", "--profile", "openai-whisper-large-v3", "-o", str(output)],
    )
    assert result.exit_code == 0
    data = json.loads(output.read_text(encoding="utf-8"))
    assert data["batch_size"] == 1024
    assert "provenance" in data


def test_validate(tmp_path, manifest):
    assert runner.invoke(app, ["validate", str(manifest)]).exit_code == 0

    broken = tmp_path / "broken.jsonl"
    write_manifest(broken, [make_segment("a", "hei", start_ms=5000, end_ms=4000)])
    with open(broken, "a", encoding="utf-8") as file:
        file.write("{}\n")
    result = runner.invoke(app, ["validate", str(broken)])
    assert result.exit_code == 2


def test_run(tmp_path, data_dir, clean_env):
    for path in data_dir.iterdir():
        if path.is_file():
            shutil.copy(path, tmp_path / path.name)
    report = tmp_path / "run.json"
    result = runner.invoke(app, ["run", str(tmp_path / "pipeline.toml"), "--report", str(report)])
    assert result.exit_code == 0
    assert json.loads(report.read_text(encoding="utf-8"))["failed_stage"] is None


def test_run_invalid_spec(tmp_path):
    spec = tmp_path / "pipeline.toml"
    spec.write_text(
        "[[stages]]\nstage = 'stats'\ninputs = ['missing.jsonl']\noutputs = ['s.json']\n",
        encoding="utf-8",
    )
    result = runner.invoke(app, ["run", str(spec)])
    assert result.exit_code == 2


def test_run_failed_stage(tmp_path):
    (tmp_path / "words.jsonl").write_text("not json\n", encoding="utf-8")
    (tmp_path / "book.txt").write_text("hei\n", encoding="utf-8")
    spec = tmp_path / "pipeline.toml"
    spec.write_text(
        "[[stages]]\nstage = 'align'\ninputs = ['book.txt', 'words.jsonl']\noutputs = ['b.jsonl']\n",
        encoding="utf-8",
    )
    result = runner.invoke(app, ["run", str(spec), "-w", "1"])
    assert result.exit_code == 1
