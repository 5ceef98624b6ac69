from collections import Counter, defaultdict
from typing import Iterable, Optional, Sequence

import pandas as pd

from asrforge.alignment import edit_ops
from asrforge.errors import UndefinedWerError
from asrforge.logger import logger
from asrforge.map_types.enums import ModelSize, NormPreset, OpKind, ReportLayout
from asrforge.normalization import normalize, tokenize
from asrforge.schemas.evaluation import (
    EvalReport,
    GroupResult,
    NormalizationConfig,
    WerBreakdown,
)
from asrforge.schemas.segment import Segment

__all__ = [
    "normalize",
    "norm_config",
    "word_breakdown",
    "wer",
    "evaluate_manifest",
    "format_wer",
    "comparison_frame",
    "comparison_report",
]

MISSING = "—"


def norm_config(preset: NormPreset) -> NormalizationConfig:
    if preset is NormPreset.NONE:
        return NormalizationConfig.disabled()
    return NormalizationConfig()


def word_breakdown(
    ref_tokens: Sequence[str], hyp_tokens: Sequence[str]
) -> WerBreakdown:
    """Счетчики правок по оптимальному пословному выравниванию"""
    counts = Counter(kind for kind, _, _ in edit_ops(ref_tokens, hyp_tokens))
    return WerBreakdown(
        substitutions=counts[OpKind.SUBSTITUTE],
        deletions=counts[OpKind.DELETE],
        insertions=counts[OpKind.INSERT],
        ref_len=len(ref_tokens),
    )


def wer(
    ref: str, hyp: str, cfg: Optional[NormalizationConfig] = None
) -> WerBreakdown:
    """Пословная ошибка распознавания

    Тексты нормализуются, затем выравниваются по словам с той же моделью
    стоимости, что и `align_words`.

    Args:
        ref: Эталон
        hyp: Гипотеза
        cfg: Нормализация. По умолчанию легкая

    Raises:
        UndefinedWerError: Эталон пуст после нормализации

    Returns:
        Счетчики замен, удалений, вставок и длина эталона
    """
    ref_tokens = tokenize(ref, cfg)
    if not ref_tokens:
        raise UndefinedWerError(ref)
    return word_breakdown(ref_tokens, tokenize(hyp, cfg))


def evaluate_manifest(
    segments: Iterable[Segment],
    model_id: str,
    cfg: Optional[NormalizationConfig] = None,
    *,
    system: Optional[str] = None,
    size: Optional[ModelSize] = None,
) -> EvalReport:
    """Оценка гипотез одной модели по манифесту

    WER группы (источник, язык) считается по суммарным счетчикам,
    а не как среднее по примерам. Примеры без гипотезы модели или с
    пустым эталоном не входят ни в числитель, ни в знаменатель и
    учитываются в `skipped`.
    """
    totals: dict[tuple[str, str], WerBreakdown] = defaultdict(WerBreakdown.zero)
    skipped: dict[tuple[str, str], int] = defaultdict(int)
    for seg in segments:
        key = (seg.source_label, seg.language.value)
        pred = seg.prediction_for(model_id)
        if pred is None:
            skipped[key] += 1
            continue
        try:
            totals[key] = totals[key] + wer(seg.text, pred.text, cfg)
        except UndefinedWerError:
            logger.debug("Segment %s has an empty reference, skipped", seg.id)
            skipped[key] += 1

    groups = [
        GroupResult(
            source=source,
            language=language,
            skipped=skipped.get((source, language), 0),
            **totals.get((source, language), WerBreakdown.zero()).model_dump(
                exclude={"wer"}
            ),
        )
        for source, language in sorted({*totals, *skipped})
    ]
    report = EvalReport(model_id=model_id, system=system, size=size, groups=groups)
    if report.skipped:
        logger.warning("Model %s: %s segments skipped", model_id, report.skipped)
    return report


def format_wer(value: Optional[float]) -> str:
    """WER в процентах с одним знаком; больше 100% выводится как `>100`"""
    if value is None:
        return MISSING
    if value > 1:
        return ">100"
    return f"{value * 100:.1f}"


def _group_label(group: GroupResult) -> str:
    return f"{group.source}/{group.language}"


def _dataset_wer(report: EvalReport, dataset: Optional[str]) -> Optional[float]:
    if dataset is None:
        return report.pooled().wer
    total = WerBreakdown.zero()
    found = False
    for group in report.groups:
        if dataset in (group.source, _group_label(group)):
            total = total + group.breakdown
            found = True
    return total.wer if found else None


def _model_label(report: EvalReport) -> str:
    if report.system and report.size:
        return f"{report.system} {report.size.title}"
    return report.model_id


def comparison_frame(
    reports: Sequence[EvalReport],
    layout: ReportLayout,
    dataset: Optional[str] = None,
) -> pd.DataFrame:
    """Таблица сравнения моделей с отформатированными значениями WER

    Args:
        reports: Отчеты `evaluate_manifest`
        layout: `BY_SIZE` - строки по размеру модели, колонки по семействам
            моделей; `BY_DATASET` - строки по моделям, колонки по наборам
        dataset: Для `BY_SIZE`: источник (`nst`) или группа (`nst/nb`);
            по умолчанию все группы вместе

    Returns:
        Таблица строк; отсутствующие значения заменены на `—`
    """
    if layout is ReportLayout.BY_SIZE:
        sizes = list(ModelSize)
        cells: dict[str, dict[str, Optional[float]]] = defaultdict(dict)
        for report in reports:
            column = report.system or report.model_id
            row = report.size.title if report.size else report.model_id
            cells[column][row] = _dataset_wer(report, dataset)
        rows = [s.title for s in sizes if any(s.title in c for c in cells.values())]
        rows += sorted(
            {r for c in cells.values() for r in c} - {s.title for s in sizes}
        )
        frame = pd.DataFrame(
            {col: [format_wer(cells[col].get(r)) for r in rows] for col in cells},
            index=pd.Index(rows, name="model"),
        )
    else:
        labels = sorted({_group_label(g) for r in reports for g in r.groups})
        data = {}
        for report in reports:
            by_label = {_group_label(g): g.wer for g in report.groups}
            data[_model_label(report)] = [
                format_wer(by_label.get(label)) for label in labels
            ]
        frame = pd.DataFrame.from_dict(data, orient="index", columns=labels)
        frame.index.name = "model"
    return frame.fillna(MISSING)


def comparison_report(
    reports: Sequence[EvalReport],
    layout: ReportLayout,
    dataset: Optional[str] = None,
) -> tuple[str, str]:
    """Таблица сравнения в виде текста и CSV"""
    frame = comparison_frame(reports, layout, dataset)
    return frame.to_string(), frame.to_csv()
