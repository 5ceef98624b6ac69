import json
import random
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence, TypeVar, Union

from pydantic import ValidationError
from rapidfuzz.distance import Levenshtein

from asrforge.errors import InvalidConfig
from asrforge.logger import logger
from asrforge.map_types.enums import FilterCriterion, Source, Stage
from asrforge.normalization import tokenize
from asrforge.schemas.filters import (
    FilterConfig,
    FilterReport,
    FilterVerdict,
    NerBundle,
    Violation,
)
from asrforge.schemas.segment import NerAnnotation, Prediction, Segment

try:
    import tomllib
except ImportError:  # python < 3.11
    import tomli as tomllib  # type: ignore[no-redef]

T = TypeVar("T")


def load_filter_config(path: Union[str, Path]) -> FilterConfig:
    """Чтение порогов очистки из TOML"""
    try:
        with open(path, "rb") as file:
            return FilterConfig.model_validate(tomllib.load(file))
    except (OSError, tomllib.TOMLDecodeError, ValidationError) as e:
        raise InvalidConfig(path, str(e)) from e


def similarity(a: str, b: str) -> float:
    """Сходство строк: 1 - расстояние Левенштейна / длина большей строки

    Регистр не учитывается; две пустые строки полностью совпадают.
    """
    a, b = a.casefold(), b.casefold()
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1 - Levenshtein.distance(a, b) / longest


def ngrams(tokens: Sequence[str], n: int) -> list[tuple[str, ...]]:
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


def fuzzy_boundary_filter(
    target: str, predictions: Sequence[Prediction], cfg: FilterConfig
) -> Optional[Violation]:
    """Проверка первого и последнего слова

    Пример проходит, если хотя бы одна гипотеза похожа на эталон
    и первым, и последним словом. Иначе в нарушении описана гипотеза
    с наименьшим числом несовпавших концов.
    """
    target_tokens = tokenize(target)
    if not target_tokens:
        return Violation(criterion=FilterCriterion.FUZZY_BOUNDARY, detail="target has no words")

    best: Optional[list[str]] = None
    for pred in predictions:
        tokens = tokenize(pred.text)
        if not tokens:
            failures = [f"first and last word: prediction {pred.model_id} is empty"]
        else:
            failures = []
            for side, ours, theirs in (
                ("first", target_tokens[0], tokens[0]),
                ("last", target_tokens[-1], tokens[-1]),
            ):
                score = similarity(ours, theirs)
                if score < cfg.fuzzy_threshold:
                    failures.append(
                        f"{side} word {ours!r} vs {theirs!r} ({pred.model_id}): "
                        f"similarity {score:.2f} below {cfg.fuzzy_threshold}"
                    )
        if not failures:
            return None
        if best is None or len(failures) < len(best):
            best = failures
    return Violation(
        criterion=FilterCriterion.FUZZY_BOUNDARY,
        detail="; ".join(best or ["no predictions"]),
    )


def insertion_filter(
    target: str, predictions: Sequence[Prediction], cfg: FilterConfig
) -> Optional[Violation]:
    """n-грамма эталона, которой нет ни в одной гипотезе: текст, который не произносили"""
    n = cfg.ngram_min_len
    seen: set[tuple[str, ...]] = set()
    for pred in predictions:
        seen.update(ngrams(tokenize(pred.text), n))
    for gram in ngrams(tokenize(target), n):
        if gram not in seen:
            return Violation(
                criterion=FilterCriterion.INSERTION,
                detail=f"n-gram {' '.join(gram)!r} not found in any prediction",
            )
    return None


def omission_filter(
    target: str, predictions: Sequence[Prediction], cfg: FilterConfig
) -> Optional[Violation]:
    """n-грамма, общая для всех гипотез, но отсутствующая в эталоне"""
    if not predictions:
        return None
    n = cfg.ngram_min_len
    ordered = ngrams(tokenize(predictions[0].text), n)
    common = set(ordered)
    for pred in predictions[1:]:
        common &= set(ngrams(tokenize(pred.text), n))
    if not common:
        return None
    target_grams = set(ngrams(tokenize(target), n))
    for gram in ordered:
        if gram in common and gram not in target_grams:
            return Violation(
                criterion=FilterCriterion.OMISSION,
                detail=f"n-gram {' '.join(gram)!r} present in every prediction "
                "but missing from the target",
            )
    return None


def ner_count_filter(
    target_ner: Sequence[NerAnnotation],
    prediction_ner: Sequence[Sequence[NerAnnotation]],
    cfg: FilterConfig,
) -> Optional[Violation]:
    """Правила по числу именованных сущностей; оба включаются настройками

    Правило разницы пропускается, если разметки гипотез нет.
    """
    failures = []
    count = len(target_ner)
    if cfg.ner_max_count is not None and count > cfg.ner_max_count:
        failures.append(f"{count} entities in the target, limit {cfg.ner_max_count}")
    if cfg.ner_max_delta is not None and prediction_ner:
        delta = min(abs(count - len(p)) for p in prediction_ner)
        if delta > cfg.ner_max_delta:
            failures.append(
                f"entity count differs from the closest prediction by {delta}, "
                f"limit {cfg.ner_max_delta}"
            )
    if not failures:
        return None
    return Violation(criterion=FilterCriterion.NER_COUNT, detail="; ".join(failures))


def _ner_from_manifest(segment: Segment, predictions: Sequence[Prediction]) -> NerBundle:
    return NerBundle(
        target=segment.ner or (),
        predictions=tuple(p.ner for p in predictions if p.ner is not None),
    )


def apply_filters(
    segment: Segment,
    predictions: Optional[Sequence[Prediction]] = None,
    ner: Optional[NerBundle] = None,
    cfg: Optional[FilterConfig] = None,
) -> FilterVerdict:
    """Все критерии очистки для одного примера

    Нарушения собираются по всем критериям, пример не изменяется.
    Фрагменты без речи (`NRK_NO_CAPTION`) текстовыми критериями не
    проверяются. Без гипотез пример удаляется.

    Args:
        segment: Пример
        predictions: Гипотезы моделей. По умолчанию из `segment.predictions`
        ner: Сущности эталона и гипотез. По умолчанию из разметки манифеста
        cfg: Пороги. По умолчанию `FilterConfig()`

    Returns:
        Решение с перечнем нарушений
    """
    cfg = cfg or FilterConfig()
    if segment.source is Source.NRK_NO_CAPTION:
        return FilterVerdict(keep=True)
    preds = list(segment.predictions or () if predictions is None else predictions)
    if cfg.models is not None:
        preds = [p for p in preds if p.model_id in cfg.models]
    if not preds:
        return FilterVerdict.from_violations(
            [
                Violation(
                    criterion=FilterCriterion.MISSING_PREDICTIONS,
                    detail="no predictions available",
                )
            ]
        )
    if ner is None:
        ner = _ner_from_manifest(segment, preds)

    found = [
        fuzzy_boundary_filter(segment.text, preds, cfg),
        insertion_filter(segment.text, preds, cfg),
        omission_filter(segment.text, preds, cfg),
        ner_count_filter(ner.target, ner.predictions, cfg),
    ]
    return FilterVerdict.from_violations([v for v in found if v is not None])


def iter_verdicts(
    segments: Iterable[Segment], cfg: FilterConfig, *, workers: int = 1
) -> Iterator[tuple[Segment, FilterVerdict]]:
    """Решения по примерам в исходном порядке

    При `workers > 1` примеры проверяются в пуле процессов.
    """
    check = partial(apply_filters, cfg=cfg)
    if workers <= 1:
        for seg in segments:
            yield seg, check(seg)
        return
    batch = list(segments)
    with ProcessPoolExecutor(max_workers=workers) as executor:
        yield from zip(batch, executor.map(check, batch, chunksize=64))


def filter_manifest(
    segments: Iterable[Segment],
    cfg: Optional[FilterConfig] = None,
    *,
    workers: int = 1,
    mark_stage: Optional[Stage] = None,
) -> tuple[list[Segment], list[tuple[Segment, FilterVerdict]], FilterReport]:
    """Очистка манифеста

    Args:
        segments: Примеры с гипотезами
        cfg: Пороги. По умолчанию `FilterConfig()`
        workers: Число процессов
        mark_stage: Этап, который проставляется оставшимся примерам

    Returns:
        Оставленные примеры, удаленные вместе с решениями и сводка
    """
    cfg = cfg or FilterConfig()
    report = FilterReport()
    kept: list[Segment] = []
    rejected: list[tuple[Segment, FilterVerdict]] = []
    for seg, verdict in iter_verdicts(segments, cfg, workers=workers):
        report.record(seg.duration_ms, verdict)
        if verdict.keep:
            if mark_stage is not None:
                seg = seg.model_copy(update={"stage": mark_stage})
            kept.append(seg)
        else:
            rejected.append((seg, verdict))
    logger.debug("Filtered %s segments: %s kept", report.total, report.kept)
    return kept, rejected, report


def reject_record(segment: Segment, verdict: FilterVerdict) -> str:
    """Строка JSONL удаленного примера с перечнем нарушений"""
    data = segment.model_dump(mode="json", exclude_none=True)
    data["violations"] = [v.model_dump(mode="json") for v in verdict.violations]
    return json.dumps(data, ensure_ascii=False)


def sample_verdicts(records: Sequence[T], k: int, seed: int) -> list[T]:
    """Воспроизводимая выборка для ручной проверки, в исходном порядке"""
    if k >= len(records):
        return list(records)
    rng = random.Random(seed)
    return [records[i] for i in sorted(rng.sample(range(len(records)), k))]
