from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Iterable, Sequence, Union

import pandas as pd

from asrforge.errors import ManifestError
from asrforge.logger import logger
from asrforge.manifest import parse_record, validate_segment
from asrforge.map_types.enums import Source, Stage
from asrforge.schemas.segment import Segment
from asrforge.schemas.stats import MS_PER_HOUR, CorpusStats, Retention, StatRow


def compute_stats(segments: Iterable[Segment]) -> CorpusStats:
    """Статистика корпуса за один проход

    Длительность копится в целых миллисекундах. Примеры, нарушающие
    инварианты, попадают в `errors` и в суммы не входят.

    Args:
        segments: Поток примеров в любом порядке

    Returns:
        Счетчики по парам (источник, этап)
    """
    acc: dict[tuple[str, Stage], StatRow] = {}
    errors = 0
    for seg in segments:
        problems = validate_segment(seg)
        if problems:
            logger.debug("Segment %s excluded from stats: %s", seg.id, "; ".join(problems))
            errors += 1
            continue
        key = (seg.source_label, seg.stage)
        row = acc.get(key)
        if row is None:
            row = acc[key] = StatRow(source=key[0], stage=key[1])
        row.segment_count += 1
        row.total_ms += seg.duration_ms
        row.total_words += len(seg.text.split())
    return CorpusStats(errors=errors).merge(CorpusStats(rows=list(acc.values())))


def compute_stats_file(path: Union[str, Path]) -> CorpusStats:
    """Статистика файла манифеста; нечитаемые строки считаются ошибками"""

    def records():
        nonlocal unreadable
        with open(path, encoding="utf-8") as file:
            for line_no, line in enumerate(file, start=1):
                if not line.strip():
                    continue
                try:
                    yield parse_record(line, path=path, line_no=line_no)
                except ManifestError as e:
                    logger.warning("%s", e)
                    unreadable += 1

    unreadable = 0
    stats = compute_stats(records())
    return stats.model_copy(update={"errors": stats.errors + unreadable})


def stage_diff(before: CorpusStats, after: CorpusStats) -> list[Retention]:
    """Доля часов каждого источника, оставшаяся после очистки

    Рост (доля больше 1) помечается, но ошибкой не считается. Источник,
    которого до очистки не было, помечается как новый.
    """
    result = []
    for source in sorted({*before.sources, *after.sources}):
        before_ms = before.source_ms(source)
        after_ms = after.source_ms(source)
        if before_ms == 0:
            retention = None if after_ms else 1.0
        else:
            retention = after_ms / before_ms
        result.append(
            Retention(
                source=source,
                before_ms=before_ms,
                after_ms=after_ms,
                retention=retention,
                growth=retention is not None and retention > 1,
                new_source=before_ms == 0 and after_ms > 0,
            )
        )
    return result


def hours(total_ms: int, decimals: int = 0) -> Decimal:
    """Точный перевод миллисекунд в часы с округлением половины вверх"""
    exact = Decimal(total_ms) / Decimal(MS_PER_HOUR)
    return exact.quantize(Decimal(1).scaleb(-decimals), rounding=ROUND_HALF_UP)


def source_title(label: str) -> str:
    try:
        return Source(label).title
    except ValueError:
        return label


def render_stage_table(stats: CorpusStats, decimals: int = 0) -> pd.DataFrame:
    """Часы по источникам (строки) и этапам (колонки) с итоговой строкой"""
    stages = [s for s in Stage if any(r.stage is s for r in stats.rows)]
    data: dict[str, list[str]] = {}
    for stage in stages:
        column = []
        for source in stats.sources:
            row = stats.row(source, stage)
            column.append(f"{hours(row.total_ms, decimals):,}" if row else "—")
        column.append(f"{hours(stats.stage_total(stage).total_ms, decimals):,}")
        data[stage.value] = column
    index = pd.Index([*map(source_title, stats.sources), "Total"], name="source")
    return pd.DataFrame(data, index=index)


def render_retention(
    retentions: Sequence[Retention], decimals: int = 3
) -> pd.DataFrame:
    rows = []
    for r in retentions:
        if r.new_source:
            flag = "new source"
        elif r.growth:
            flag = "growth"
        else:
            flag = ""
        rows.append(
            {
                "source": source_title(r.source),
                "before_h": f"{hours(r.before_ms, 2):,}",
                "after_h": f"{hours(r.after_ms, 2):,}",
                "retention": "—" if r.retention is None else f"{r.retention:.{decimals}f}",
                "flag": flag,
            }
        )
    return pd.DataFrame(
        rows, columns=["source", "before_h", "after_h", "retention", "flag"]
    ).set_index("source")
