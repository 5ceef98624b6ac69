import json
import shutil
from pathlib import Path

import pytest

from asrforge.errors import PipelineSpecError
from asrforge.manifest import read_manifest, write_manifest
from asrforge.map_types.enums import Stage, StageKind
from asrforge.pipeline import (
    PipelineRunner,
    execution_order,
    load_pipeline_spec,
    run_pipeline,
)
from asrforge.schemas.pipeline import PipelineSpec
from asrforge.schemas.stats import CorpusStats
from tests.helpers import planted_corpus


def spec(*stages: dict) -> PipelineSpec:
    return PipelineSpec.model_validate({"stages": list(stages)})


@pytest.fixture()
def workspace(tmp_path: Path, data_dir: Path) -> Path:
    for name in (
        "nrk_sample.srt",
        "book.txt",
        "book_words.jsonl",
        "lexicon.tsv",
        "rules.toml",
        "durations.json",
        "pipeline.toml",
    ):
        shutil.copy(data_dir / name, tmp_path / name)
    return tmp_path


def test_load_bundled_spec(data_dir):
    pipeline = load_pipeline_spec(data_dir / "pipeline.toml")
    assert pipeline.settings.seed == 7
    ingest = pipeline.stages[0]
    assert ingest.inputs == [data_dir / "nrk_sample.srt"]
    assert ingest.options["rules"] == str(data_dir / "rules.toml")
    assert [s.name for s in execution_order(pipeline)] == [
        "ingest-nrk",
        "align-book",
        "nb-large",
        "stats",
    ]


def test_stage_names_default_to_position():
    pipeline = spec(
        {"stage": "train-config", "outputs": ["a.json"], "options": {"size": "tiny", "profile": "nb-whisper"}}
    )
    assert pipeline.stages[0].name == "01-train-config"


def test_order_follows_dependencies(tmp_path):
    manifest = tmp_path / "m.jsonl"
    pipeline = spec(
        {"name": "stats", "stage": "stats", "inputs": [str(manifest)], "outputs": [str(tmp_path / "s.json")]},
        {"name": "config", "stage": "train-config", "outputs": [str(tmp_path / "c.json")],
         "options": {"size": "tiny", "profile": "nb-whisper"}},
        {"name": "ingest", "stage": "ingest", "inputs": [str(tmp_path)], "outputs": [str(manifest)]},
    )
    assert [s.name for s in execution_order(pipeline)] == ["config", "ingest", "stats"]


def test_cycle_is_rejected(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    pipeline = spec(
        {"name": "first", "stage": "filter", "inputs": [str(a)], "outputs": [str(b)]},
        {"name": "second", "stage": "filter", "inputs": [str(b)], "outputs": [str(a)]},
    )
    with pytest.raises(PipelineSpecError, match="Цикл"):
        execution_order(pipeline)


def test_missing_input_is_rejected(tmp_path):
    pipeline = spec(
        {"stage": "stats", "inputs": [str(tmp_path / "nowhere.jsonl")], "outputs": [str(tmp_path / "s.json")]}
    )
    with pytest.raises(PipelineSpecError, match="не существует"):
        execution_order(pipeline)


def test_duplicate_output_is_rejected(tmp_path):
    out = str(tmp_path / "c.json")
    options = {"size": "tiny", "profile": "nb-whisper"}
    pipeline = spec(
        {"stage": "train-config", "outputs": [out], "options": options},
        {"stage": "train-config", "outputs": [out], "options": options},
    )
    with pytest.raises(PipelineSpecError, match="записывают"):
        execution_order(pipeline)


@pytest.mark.parametrize(
    "stage",
    [
        {"stage": "train-config", "outputs": ["c.json"], "options": {"size": "huge", "profile": "nb-whisper"}},
        {"stage": "train-config", "outputs": ["c.json"], "options": {"size": "tiny", "profile": "nb-whisper", "extra": 1}},
        {"stage": "train-config", "outputs": [], "options": {"size": "tiny", "profile": "nb-whisper"}},
        {"stage": "align", "inputs": ["book.txt"], "outputs": ["b.jsonl"]},
    ],
)
def test_invalid_stage_is_rejected(stage: dict):
    with pytest.raises(PipelineSpecError):
        execution_order(spec(stage))


def test_unreadable_spec(tmp_path):
    path = tmp_path / "pipeline.toml"
    path.write_text("[[stages]]\nstage = 'unknown'\n", encoding="utf-8")
    with pytest.raises(PipelineSpecError):
        load_pipeline_spec(path)


def test_run_bundled_pipeline(workspace, clean_env):
    report = run_pipeline(load_pipeline_spec(workspace / "pipeline.toml"))
    assert report.ok
    assert [s.stage for s in report.stages] == [
        StageKind.INGEST,
        StageKind.ALIGN,
        StageKind.TRAIN_CONFIG,
        StageKind.STATS,
    ]

    ingest = report.stages[0]
    assert (ingest.records_in, ingest.records_out) == (1, 7)
    assert set(ingest.outputs) == {str(workspace / "build" / "nrk.jsonl")}

    book = list(read_manifest(workspace / "build" / "book.jsonl"))
    assert len(book) == 4

    stats = CorpusStats.model_validate_json(
        (workspace / "build" / "stats.json").read_text(encoding="utf-8")
    )
    assert stats.sources == ["audio_books", "nrk_no_caption", "nrk_subtitles"]
    assert stats.errors == 0

    config = json.loads((workspace / "build" / "nb-large.json").read_text(encoding="utf-8"))
    assert config["learning_rate"] == 7e-5


def test_run_is_reproducible(workspace, tmp_path_factory, clean_env):
    other = tmp_path_factory.mktemp("again")
    for path in workspace.iterdir():
        if path.is_file():
            shutil.copy(path, other / path.name)
    first = run_pipeline(load_pipeline_spec(workspace / "pipeline.toml"))
    second = run_pipeline(load_pipeline_spec(other / "pipeline.toml"))
    digests = [sorted(s.outputs.values()) for s in first.stages]
    assert digests == [sorted(s.outputs.values()) for s in second.stages]


def test_filter_stage_outputs(tmp_path, clean_env):
    segments, planted = planted_corpus(20, seed=4)
    manifest = tmp_path / "manifest.jsonl"
    write_manifest(manifest, segments)
    outputs = [tmp_path / name for name in ("kept.jsonl", "rejects.jsonl", "report.json", "sample.jsonl")]
    pipeline = spec(
        {
            "stage": "filter",
            "inputs": [str(manifest)],
            "outputs": [str(p) for p in outputs],
            "options": {"mark_stage": "stage2", "sample": 2},
        }
    )
    report = PipelineRunner(workers=1, seed=3).run(pipeline)
    assert report.ok
    assert report.stages[0].records_in == len(segments)

    kept = list(read_manifest(outputs[0]))
    assert len(kept) == len(segments) - len(planted)
    assert all(s.stage is Stage.STAGE2 for s in kept)

    rejects = [json.loads(line) for line in outputs[1].read_text(encoding="utf-8").splitlines()]
    assert {r["id"] for r in rejects} == set(planted)
    assert all(r["violations"] for r in rejects)

    summary = json.loads(outputs[2].read_text(encoding="utf-8"))
    assert summary["rejected"] == len(planted)
    assert summary["hours_removed"] == pytest.approx(len(planted) * 5000 / 3_600_000)
    assert len(outputs[3].read_text(encoding="utf-8").splitlines()) == 2


def test_eval_stage_with_predictions(tmp_path, clean_env):
    segments, _ = planted_corpus(10, seed=5)
    manifest = tmp_path / "manifest.jsonl"
    write_manifest(manifest, [s.model_copy(update={"predictions": None}) for s in segments])
    predictions = tmp_path / "predictions.jsonl"
    predictions.write_text(
        "\n".join(
            json.dumps({"id": s.id, "model_id": "nb-large", "text": s.text}) for s in segments
        ),
        encoding="utf-8",
    )
    out = tmp_path / "eval.json"
    pipeline = spec(
        {
            "stage": "eval",
            "inputs": [str(manifest), str(predictions)],
            "outputs": [str(out)],
            "options": {"model": "nb-large", "system": "NB-Whisper", "size": "large"},
        }
    )
    report = PipelineRunner(workers=1).run(pipeline)
    assert report.ok
    data = json.loads(out.read_text(encoding="utf-8"))
    assert data["size"] == "large"
    assert [g["wer"] for g in data["groups"]] == [0.0]
    assert "S" in data["groups"][0]


def test_failed_stage_stops_the_run(tmp_path, data_dir, clean_env):
    broken = tmp_path / "words.jsonl"
    broken.write_text("not json\n", encoding="utf-8")
    config = tmp_path / "config.json"
    pipeline = spec(
        {"name": "config", "stage": "train-config", "outputs": [str(config)],
         "options": {"size": "tiny", "profile": "nb-whisper"}},
        {"name": "align", "stage": "align", "inputs": [str(data_dir / "book.txt"), str(broken)],
         "outputs": [str(tmp_path / "book.jsonl")]},
        {"name": "stats", "stage": "stats", "inputs": [str(tmp_path / "book.jsonl")],
         "outputs": [str(tmp_path / "stats.json")]},
    )
    report = PipelineRunner(workers=1).run(pipeline)
    assert not report.ok
    assert report.failed_stage == "align"
    assert report.error is not None and report.error.startswith("ValidationError")
    assert [s.name for s in report.stages] == ["config"]
    assert config.exists()
    assert not (tmp_path / "book.jsonl").exists()
    assert not (tmp_path / "stats.json").exists()
