import hashlib
import os
import tempfile
from collections import defaultdict
from contextlib import contextmanager
from pathlib import Path
from typing import IO, Generator, Iterable, Iterator, Optional, Union

from pydantic import BaseModel, ValidationError

from asrforge.errors import ManifestError
from asrforge.logger import logger
from asrforge.map_types.enums import Source
from asrforge.schemas.segment import (
    MAX_SEGMENT_MS,
    NerAnnotation,
    Prediction,
    Segment,
)

PathLike = Union[str, Path]


def validate_segment(seg: Segment) -> list[str]:
    """Проверка инвариантов примера

    Никогда не бросает исключений: каждое нарушение возвращается строкой.

    Args:
        seg: Проверяемый пример

    Returns:
        Пустой список, если все инварианты соблюдены
    """
    violations = []
    if seg.start_ms < 0:
        violations.append("start_ms must be non-negative")
    if seg.end_ms <= seg.start_ms:
        violations.append("end_ms must exceed start_ms")
    elif seg.duration_ms > MAX_SEGMENT_MS:
        violations.append(
            f"duration {seg.duration_ms} ms exceeds the {MAX_SEGMENT_MS} ms cap"
        )
    if seg.source is Source.NRK_NO_CAPTION and seg.text != "":
        violations.append("no-speech segment (nrk_no_caption) must have empty text")
    return violations


def validate_prediction(pred: Prediction) -> list[str]:
    """Проверка согласованности текста гипотезы и ее слов с метками"""
    if pred.words is None:
        return []
    violations = []
    joined = " ".join(w.word for w in pred.words)
    if " ".join(joined.split()) != " ".join(pred.text.split()):
        violations.append("words do not concatenate to the prediction text")
    prev_start: Optional[int] = None
    for i, w in enumerate(pred.words):
        if w.end_ms < w.start_ms:
            violations.append(f"word {i} ends before it starts")
        if prev_start is not None and w.start_ms < prev_start:
            violations.append(f"word {i} timestamps decrease")
        prev_start = w.start_ms
    return violations


def validate_annotation(ann: NerAnnotation, text: str) -> list[str]:
    """Проверка, что сущность лежит внутри размеченного текста"""
    violations = []
    if ann.char_end <= ann.char_start:
        violations.append("char_end must exceed char_start")
    if ann.char_start < 0 or ann.char_end > len(text):
        violations.append("entity span lies outside the annotated text")
    return violations


def parse_record(
    line: str, *, path: Optional[PathLike] = None, line_no: int = 0
) -> Segment:
    """Разбор одной строки манифеста"""
    try:
        return Segment.model_validate_json(line)
    except ValidationError as e:
        raise ManifestError(path, line_no, str(e)) from e


def _unset_optionals(model: BaseModel) -> set[str]:
    """Объявленные необязательные поля со значением None"""
    return {
        name
        for name, field in type(model).model_fields.items()
        if field.default is None and getattr(model, name) is None
    }


def serialize_record(seg: Segment) -> str:
    """Одна строка JSONL без перевода строки

    Пропускаются только пустые объявленные поля; неизвестные поля
    пишутся как есть, в том числе со значением null.
    """
    exclude: dict = {name: True for name in _unset_optionals(seg)}
    if seg.predictions:
        per_prediction = {
            i: _unset_optionals(pred) for i, pred in enumerate(seg.predictions)
        }
        exclude["predictions"] = {i: names for i, names in per_prediction.items() if names}
    return seg.model_dump_json(exclude=exclude)


def read_manifest(path: PathLike) -> Generator[Segment, None, None]:
    """Потоковое чтение манифеста; пустые строки пропускаются"""
    with open(path, encoding="utf-8") as file:
        for line_no, line in enumerate(file, start=1):
            if not line.strip():
                continue
            yield parse_record(line, path=path, line_no=line_no)


@contextmanager
def atomic_write(path: PathLike) -> Iterator[IO[str]]:
    """Запись во временный файл рядом с целевым и переименование в конце

    Под итоговым именем никогда не появляется частично записанный файл.
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(
        dir=target.parent, prefix=f".{target.name}.", suffix=".tmp"
    )
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as file:
            yield file
            file.flush()
            os.fsync(file.fileno())
        os.replace(tmp_name, target)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise
    logger.debug("Written %s", target)


def write_manifest(path: PathLike, segments: Iterable[Segment]) -> int:
    """Атомарная запись манифеста

    Returns:
        Количество записанных примеров
    """
    count = 0
    with atomic_write(path) as file:
        for seg in segments:
            file.write(serialize_record(seg))
            file.write("\n")
            count += 1
    return count


def write_model(path: PathLike, model: BaseModel, **dump_kwargs) -> None:
    """Атомарная запись pydantic-модели в JSON"""
    with atomic_write(path) as file:
        file.write(model.model_dump_json(indent=2, **dump_kwargs))
        file.write("\n")


def file_digest(path: PathLike) -> str:
    """sha256 содержимого файла"""
    digest = hashlib.sha256()
    with open(path, "rb") as file:
        for block in iter(lambda: file.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


class _PredictionRecord(Prediction):
    id: str


def load_predictions(path: PathLike) -> dict[str, list[Prediction]]:
    """Чтение гипотез внешнего прогона распознавания

    Каждая строка - гипотеза с полем `id` примера.
    """
    by_segment: dict[str, list[Prediction]] = defaultdict(list)
    with open(path, encoding="utf-8") as file:
        for line_no, line in enumerate(file, start=1):
            if not line.strip():
                continue
            try:
                record = _PredictionRecord.model_validate_json(line)
            except ValidationError as e:
                raise ManifestError(path, line_no, str(e)) from e
            data = record.model_dump(exclude={"id"}, exclude_none=True)
            by_segment[record.id].append(Prediction.model_validate(data))
    return dict(by_segment)


def attach_predictions(
    segments: Iterable[Segment], predictions: dict[str, list[Prediction]]
) -> Generator[Segment, None, None]:
    """Добавление гипотез к примерам

    Гипотеза модели, уже присутствующей в примере, заменяет старую.
    """
    for seg in segments:
        new = predictions.get(seg.id)
        if not new:
            yield seg
            continue
        new_ids = {p.model_id for p in new}
        kept = [p for p in seg.predictions or () if p.model_id not in new_ids]
        yield seg.model_copy(update={"predictions": tuple(kept + new)})


def write_lines(path: PathLike, lines: Iterable[str]) -> None:
    """Атомарная запись готовых строк JSONL"""
    with atomic_write(path) as file:
        for line in lines:
            file.write(line)
            file.write("\n")
