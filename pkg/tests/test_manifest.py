import json

import pytest

from asrforge.errors import ManifestError
from asrforge.manifest import (
    atomic_write,
    attach_predictions,
    file_digest,
    load_predictions,
    parse_record,
    read_manifest,
    serialize_record,
    validate_annotation,
    validate_prediction,
    validate_segment,
    write_manifest,
)
from asrforge.map_types.enums import EntityLabel, Source
from asrforge.schemas.segment import NerAnnotation, Prediction, TimedWord
from tests.helpers import make_segment


def test_valid_segment():
    assert validate_segment(make_segment("a", "hei")) == []


@pytest.mark.parametrize(
    "update, message",
    [
        ({"start_ms": -1}, "non-negative"),
        ({"start_ms": 5000, "end_ms": 5000}, "exceed start_ms"),
        ({"end_ms": 30_001}, "cap"),
        ({"source": Source.NRK_NO_CAPTION}, "empty text"),
    ],
)
def test_segment_violations(update: dict, message: str):
    seg = make_segment("a", "hei").model_copy(update=update)
    (violation,) = validate_segment(seg)
    assert message in violation


def test_segment_at_cap_is_valid():
    assert validate_segment(make_segment("a", "hei", end_ms=30_000)) == []


def test_prediction_words():
    words = (
        TimedWord(word="hei", start_ms=0, end_ms=300),
        TimedWord(word="du", start_ms=300, end_ms=500),
    )
    assert validate_prediction(Prediction(model_id="m", text="hei  du", words=words)) == []
    assert validate_prediction(Prediction(model_id="m", text="hei deg", words=words)) == [
        "words do not concatenate to the prediction text"
    ]
    backwards = (words[1], words[0])
    assert "word 1 timestamps decrease" in validate_prediction(
        Prediction(model_id="m", text="du hei", words=backwards)
    )


def test_annotation_span():
    ann = NerAnnotation(entity_text="Oslo", label=EntityLabel.LOCATION, char_start=3, char_end=7)
    assert validate_annotation(ann, "Fra Oslo") == []
    assert validate_annotation(ann, "Fra") == ["entity span lies outside the annotated text"]


def test_unknown_fields_survive(tmp_path):
    line = json.dumps(
        {
            "id": "a",
            "audio_ref": "a.mp3",
            "start_ms": 0,
            "end_ms": 1000,
            "text": "hei",
            "source": "nst",
            "speaker_id": "s-17",
        }
    )
    seg = parse_record(line)
    assert seg.model_extra == {"speaker_id": "s-17"}
    path = tmp_path / "m.jsonl"
    write_manifest(path, [seg])
    (restored,) = read_manifest(path)
    assert restored.model_extra == {"speaker_id": "s-17"}
    assert json.loads(serialize_record(restored)) == json.loads(serialize_record(seg))


def test_unknown_null_fields_survive(tmp_path):
    record = {
        "id": "a",
        "audio_ref": "a.mp3",
        "start_ms": 0,
        "end_ms": 1000,
        "text": "hei",
        "source": "nst",
        "reviewer": None,
        "tags": [],
        "predictions": [{"model_id": "m", "text": "hei", "score": None}],
    }
    path = tmp_path / "m.jsonl"
    write_manifest(path, [parse_record(json.dumps(record))])
    written = json.loads(path.read_text(encoding="utf-8"))
    assert written["reviewer"] is None
    assert written["tags"] == []
    assert written["predictions"] == [{"model_id": "m", "text": "hei", "score": None}]
    assert "ner" not in written
    assert "source_name" not in written


def test_bad_record_location(tmp_path):
    path = tmp_path / "m.jsonl"
    write_manifest(path, [make_segment("a", "hei")])
    with open(path, "a", encoding="utf-8") as file:
        file.write("\n{\"id\": \"b\"}\n")
    with pytest.raises(ManifestError) as exc:
        list(read_manifest(path))
    assert exc.value.line_no == 3


def test_atomic_write_leaves_no_partial_file(tmp_path):
    path = tmp_path / "out.jsonl"
    with pytest.raises(RuntimeError):
        with atomic_write(path) as file:
            file.write("half")
            raise RuntimeError("interrupted")
    assert list(tmp_path.iterdir()) == []


def test_file_digest_is_stable(tmp_path):
    first, second = tmp_path / "1.jsonl", tmp_path / "2.jsonl"
    segments = [make_segment(str(i), f"tekst {i}") for i in range(5)]
    write_manifest(first, segments)
    write_manifest(second, segments)
    assert file_digest(first) == file_digest(second)


def test_attach_predictions(tmp_path):
    path = tmp_path / "predictions.jsonl"
    path.write_text(
        "\n".join(
            [
                json.dumps({"id": "a", "model_id": "m0", "text": "ny"}),
                json.dumps({"id": "a", "model_id": "m9", "text": "annen"}),
                json.dumps({"id": "x", "model_id": "m0", "text": "ukjent"}),
            ]
        ),
        encoding="utf-8",
    )
    predictions = load_predictions(path)
    assert sorted(predictions) == ["a", "x"]
    seg = make_segment("a", "hei", ["gammel", "beholdt"])
    (merged,) = attach_predictions([seg], predictions)
    assert [(p.model_id, p.text) for p in merged.predictions] == [
        ("m1", "beholdt"),
        ("m0", "ny"),
        ("m9", "annen"),
    ]


def test_bad_prediction_record(tmp_path):
    path = tmp_path / "predictions.jsonl"
    path.write_text(json.dumps({"model_id": "m0", "text": "uten id"}), encoding="utf-8")
    with pytest.raises(ManifestError):
        load_predictions(path)
