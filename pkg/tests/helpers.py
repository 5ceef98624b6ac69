import random
from functools import lru_cache
from typing import Optional, Sequence

from asrforge.map_types.enums import (
    EntityLabel,
    FilterCriterion,
    Language,
    OpKind,
    Source,
    Stage,
)
from asrforge.schemas.alignment import WordAlignment
from asrforge.schemas.segment import NerAnnotation, Prediction, Segment

VOCAB = (
    "jeg du han hun vi de det er var har skal kan vil ikke også bare "
    "hjem skole jobb bil båt hus fjell sjø by land dag natt morgen kveld "
    "spise drikke lese skrive snakke høre se gå løpe svømme"
).split()


def edit_distance(ref: Sequence[str], hyp: Sequence[str]) -> int:
    """Рекурсивное определение расстояния; только для коротких последовательностей

    Кэш общий для всех вызовов.
    """
    return _distance(tuple(ref), tuple(hyp))


@lru_cache(maxsize=None)
def _distance(ref: tuple, hyp: tuple) -> int:
    if not ref:
        return len(hyp)
    if not hyp:
        return len(ref)
    return min(
        _distance(ref[:-1], hyp) + 1,
        _distance(ref, hyp[:-1]) + 1,
        _distance(ref[:-1], hyp[:-1]) + (ref[-1] != hyp[-1]),
    )


def dp_distance(ref: Sequence[str], hyp: Sequence[str]) -> int:
    """Полная таблица, по строкам"""
    prev = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, start=1):
        row = [i]
        for j, h in enumerate(hyp, start=1):
            row.append(min(prev[j] + 1, row[j - 1] + 1, prev[j - 1] + (r != h)))
        prev = row
    return prev[-1]


def check_ops(
    alignment: WordAlignment,
    ref: Sequence[str],
    hyp: Sequence[str],
    same=lambda a, b: a == b,
) -> None:
    """Операции покрывают обе последовательности по порядку и согласованы со словами"""
    ref_seen, hyp_seen = [], []
    for op in alignment.ops:
        if op.ref_idx is not None:
            ref_seen.append(op.ref_idx)
        if op.hyp_idx is not None:
            hyp_seen.append(op.hyp_idx)
        if op.kind is OpKind.MATCH:
            assert same(ref[op.ref_idx], hyp[op.hyp_idx])
        elif op.kind is OpKind.SUBSTITUTE:
            assert not same(ref[op.ref_idx], hyp[op.hyp_idx])
        elif op.kind is OpKind.DELETE:
            assert op.hyp_idx is None
        else:
            assert op.ref_idx is None
    assert ref_seen == list(range(len(ref)))
    assert hyp_seen == list(range(len(hyp)))


def mutate(tokens: Sequence[str], rate: float, rng: random.Random) -> list[str]:
    """Случайные замены, удаления и вставки"""
    out = []
    for token in tokens:
        roll = rng.random()
        if roll < rate / 3:
            out.append(rng.choice(VOCAB))
        elif roll < 2 * rate / 3:
            continue
        elif roll < rate:
            out.extend([token, rng.choice(VOCAB)])
        else:
            out.append(token)
    return out


def tag_capitalized(text: str) -> tuple[NerAnnotation, ...]:
    """Игрушечная разметка: слово с заглавной буквы не в начале текста - персона"""
    found = []
    pos = 0
    for i, word in enumerate(text.split()):
        start = text.index(word, pos)
        pos = start + len(word)
        if i > 0 and word[:1].isupper():
            found.append(
                NerAnnotation(
                    entity_text=word,
                    label=EntityLabel.PERSON,
                    char_start=start,
                    char_end=pos,
                )
            )
    return tuple(found)


def make_segment(
    id: str,
    text: str,
    predictions: Sequence[str] = (),
    *,
    start_ms: int = 0,
    end_ms: int = 5000,
    source: Source = Source.NRK_SUBTITLES,
    language: Language = Language.BOKMAAL,
    stage: Stage = Stage.STAGE1,
    models: Optional[Sequence[str]] = None,
) -> Segment:
    models = models or [f"m{i}" for i in range(len(predictions))]
    preds = tuple(
        Prediction(model_id=model, text=pred) for model, pred in zip(models, predictions)
    )
    return Segment(
        id=id,
        audio_ref=f"{id}.mp3",
        start_ms=start_ms,
        end_ms=end_ms,
        text=text,
        source=source,
        language=language,
        stage=stage,
        predictions=preds or None,
    )


def planted_corpus(
    n_clean: int, seed: int = 0, n_each: Optional[int] = None
) -> tuple[list[Segment], dict[str, FilterCriterion]]:
    """Корпус с заранее внесенными дефектами

    Вставка и пропуск добавляются в конец предложения перед повтором
    последнего слова, поэтому границы совпадают и каждый дефект нарушает
    ровно один критерий. Испорченное начало ставится в предложение из
    трех слов, где нет ни одной 4-граммы.

    Args:
        n_clean: Число чистых примеров
        seed: Зерно генератора
        n_each: Число дефектов каждого вида. По умолчанию десятая часть чистых

    Returns:
        Примеры и ожидаемый критерий для каждого испорченного примера
    """
    rng = random.Random(seed)
    n_each = max(1, n_clean // 10) if n_each is None else n_each

    def sentence(low: int = 8, high: int = 14) -> list[str]:
        return [rng.choice(VOCAB) for _ in range(rng.randint(low, high))]

    def written(words: Sequence[str]) -> str:
        return " ".join(words).capitalize() + "."

    segments: list[Segment] = []
    planted: dict[str, FilterCriterion] = {}
    for i in range(n_clean):
        words = sentence()
        segments.append(make_segment(f"clean-{i}", written(words), [" ".join(words)] * 2))

    for i in range(n_each):
        words = sentence(3, 3)
        bad_start = written(["xylofonkvartett", *words[1:]])
        segments.append(make_segment(f"boundary-{i}", bad_start, [" ".join(words)] * 2))
        planted[f"boundary-{i}"] = FilterCriterion.FUZZY_BOUNDARY

        words = sentence()
        inserted = written([*words, "plutselig", "kom", "en", words[-1]])
        segments.append(make_segment(f"insertion-{i}", inserted, [" ".join(words)] * 2))
        planted[f"insertion-{i}"] = FilterCriterion.INSERTION

        words = sentence()
        heard = " ".join([*words, "og", "så", "var", words[-1]])
        segments.append(make_segment(f"omission-{i}", written(words), [heard] * 2))
        planted[f"omission-{i}"] = FilterCriterion.OMISSION

    rng.shuffle(segments)
    return segments, planted
