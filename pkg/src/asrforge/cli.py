import json
import logging
from pathlib import Path
from typing import Annotated, Any, Generator, Optional, Sequence, TypeVar

import typer
from pydantic import ValidationError
from rich import print
from rich.logging import RichHandler
from rich.progress import (
    BarColumn,
    Progress,
    SpinnerColumn,
    TaskProgressColumn,
    TextColumn,
    TimeRemainingColumn,
)

from asrforge import SCHEMA_VERSION, __version__
from asrforge.alignment import (
    align_document,
    chunks_to_segments,
    load_lexicon,
    read_timed_words,
)
from asrforge.errors import (
    InvalidConfig,
    ManifestError,
    PipelineSpecError,
    SubtitleParseError,
)
from asrforge.evaluation import (
    comparison_report,
    evaluate_manifest,
    format_wer,
    norm_config,
)
from asrforge.filters import (
    filter_manifest,
    load_filter_config,
    reject_record,
    sample_verdicts,
)
from asrforge.logger import logger
from asrforge.manifest import (
    atomic_write,
    attach_predictions,
    load_predictions,
    parse_record,
    read_manifest,
    validate_annotation,
    validate_prediction,
    validate_segment,
    write_lines,
    write_manifest,
    write_model,
)
from asrforge.map_types.enums import (
    Language,
    ModelSize,
    NormPreset,
    Profile,
    ReportLayout,
    Source,
    Stage,
    SubtitleFormat,
)
from asrforge.pipeline import PipelineRunner, load_pipeline_spec, subtitle_files
from asrforge.schemas.evaluation import EvalReport
from asrforge.schemas.filters import FilterConfig
from asrforge.schemas.segment import MAX_SEGMENT_MS, Segment
from asrforge.schemas.stats import CorpusStats
from asrforge.stats import (
    compute_stats_file,
    render_retention,
    render_stage_table,
    stage_diff,
)
from asrforge.subtitles import DEFAULT_MIN_GAP_MS, ingest_document, load_rules
from asrforge.train_config import emit_config, write_config

app = typer.Typer(
    pretty_exceptions_show_locals=False,
    no_args_is_help=True,
    help="Сборка, очистка и оценка корпусов для обучения распознавания речи",
)

T = TypeVar("T")


OutputOption = Annotated[
    Path,
    typer.Option(
        "--output",
        "-o",
        help="Файл, в который будет сохранен результат",
        rich_help_panel="General Options",
    ),
]

InputOption = Annotated[
    Path,
    typer.Option(
        "--input",
        "-i",
        help="Манифест (JSONL)",
        exists=True,
        dir_okay=False,
        rich_help_panel="General Options",
    ),
]

PredictionsOption = Annotated[
    Optional[Path],
    typer.Option(
        "--predictions",
        help="Гипотезы моделей (JSONL с полем id), добавляются к манифесту",
        exists=True,
        dir_okay=False,
        rich_help_panel="General Options",
    ),
]

WorkersOption = Annotated[
    Optional[int],
    typer.Option(
        "--workers",
        "-w",
        help="Число процессов. По умолчанию - число ядер",
        min=1,
        rich_help_panel="General Options",
    ),
]


def _progress_iter(items: Sequence[T], description: str) -> Generator[T, None, None]:
    cols = [
        SpinnerColumn(),
        TextColumn("{task.description}"),
    ]
    if len(items) > 1:
        cols += [
            BarColumn(),
            TaskProgressColumn(),
            TimeRemainingColumn(),
        ]
    with Progress(
        *cols,
        transient=True,
    ) as progress:
        task = progress.add_task(description=description, total=len(items))
        for item in items:
            yield item
            progress.update(task, advance=1)


def _load_segments(path: Path, predictions: Optional[Path]) -> list[Segment]:
    """Манифест с гипотезами; ошибки чтения - ошибки параметров"""
    try:
        segments = list(read_manifest(path))
        if predictions is not None:
            segments = list(attach_predictions(segments, load_predictions(predictions)))
    except ManifestError as e:
        raise typer.BadParameter(str(e)) from e
    return segments


def version_callback(version: bool = False) -> None:
    if version:
        print(f"forge {__version__} (schema {SCHEMA_VERSION})")
        raise typer.Exit()


def debug_callback(debug: bool = False) -> None:
    if debug:
        logger.setLevel(logging.DEBUG)
        logger.addHandler(RichHandler(show_path=False))


@app.callback()
def common(
    version: Annotated[
        bool,
        typer.Option(
            "-v",
            "--version",
            help="Show current version",
            is_eager=True,
            callback=version_callback,
        ),
    ] = False,
    debug: Annotated[
        bool,
        typer.Option(
            "--debug",
            help="Show library debug logs",
            is_eager=True,
            callback=debug_callback,
        ),
    ] = False,
):
    pass


@app.command(no_args_is_help=True)
def ingest(
    inputs: Annotated[
        list[Path],
        typer.Argument(
            help="Файлы субтитров или каталоги с ними", exists=True, show_default=False
        ),
    ],
    output: OutputOption,
    format: Annotated[
        SubtitleFormat, typer.Option("--format", "-f", help="Формат субтитров")
    ] = SubtitleFormat.SRT,
    rules: Annotated[
        Optional[Path],
        typer.Option(help="Правила разметки вещателя (TOML)", exists=True),
    ] = None,
    max_duration: Annotated[
        int,
        typer.Option("--max-dur", help="Наибольшая длительность сегмента, мс", min=1),
    ] = MAX_SEGMENT_MS,
    min_gap: Annotated[
        int, typer.Option(help="Наименьший промежуток без речи, мс", min=1)
    ] = DEFAULT_MIN_GAP_MS,
    no_speech: Annotated[
        bool, typer.Option(help="Извлекать фрагменты без речи")
    ] = True,
    durations: Annotated[
        Optional[Path],
        typer.Option(help="JSON: имя файла без расширения -> длительность записи, мс"),
    ] = None,
    audio_suffix: Annotated[str, typer.Option(help="Расширение аудиофайлов")] = ".mp3",
    source: Annotated[Source, typer.Option(help="Источник")] = Source.NRK_SUBTITLES,
    language: Annotated[Language, typer.Option(help="Язык текста")] = Language.BOKMAAL,
    encoding: Annotated[str, typer.Option(help="Кодировка файлов субтитров")] = "utf-8",
) -> None:
    """Разбор субтитров в сегменты манифеста

    Субтитры очищаются от служебной разметки и склеиваются в сегменты
    не длиннее 30 секунд; промежутки без субтитров становятся фрагментами
    без речи.
    """
    try:
        notation = load_rules(rules) if rules else None
        lengths = json.loads(durations.read_text(encoding="utf-8")) if durations else {}
    except (InvalidConfig, OSError, json.JSONDecodeError) as e:
        raise typer.BadParameter(str(e)) from e
    files = subtitle_files(inputs, f".{format.value}")
    if not files:
        print("[red]Не найдены файлы субтитров")
        raise typer.Abort()
    segments: list[Segment] = []
    for path in _progress_iter(files, "Разбор субтитров..."):
        try:
            segments += ingest_document(
                path.read_bytes(),
                format,
                doc_id=path.stem,
                audio_ref=path.stem + audio_suffix,
                rules=notation,
                max_duration_ms=max_duration,
                min_gap_ms=min_gap,
                recording_duration_ms=lengths.get(path.stem),
                no_speech=no_speech,
                source=source,
                language=language,
                encoding=encoding,
            )
        except SubtitleParseError as e:
            raise typer.BadParameter(f"{path}: {e}") from e
        except (UnicodeDecodeError, LookupError) as e:
            raise typer.BadParameter(
                f"{path}: не удалось прочитать в кодировке {encoding}: {e}"
            ) from e
    count = write_manifest(output, segments)
    print(f"[green]Из {len(files)} файлов получено {count} сегментов, сохранено в файл {output.resolve()}[/]")


@app.command(no_args_is_help=True)
def align(
    ref: Annotated[
        Path, typer.Option(help="Эталонный текст (книга, стенограмма)", exists=True)
    ],
    hyp: Annotated[
        Path,
        typer.Option(help="Слова гипотезы с метками времени (JSONL)", exists=True),
    ],
    output: OutputOption,
    lexicon: Annotated[
        Optional[Path],
        typer.Option(help="Варианты написания (TSV)", exists=True),
    ] = None,
    min_quality: Annotated[
        float, typer.Option(help="Наименьшая доля совпадений во фрагменте", min=0, max=1)
    ] = 0.8,
    target_duration: Annotated[
        int, typer.Option(help="Наибольшая длительность фрагмента, мс", min=1)
    ] = MAX_SEGMENT_MS,
    fast: Annotated[
        bool,
        typer.Option(help="Доверять цепочке якорей без проверки оптимальности"),
    ] = False,
    source: Annotated[Source, typer.Option(help="Источник")] = Source.AUDIO_BOOKS,
    language: Annotated[Language, typer.Option(help="Язык текста")] = Language.BOKMAAL,
) -> None:
    """Выравнивание длинного текста по гипотезе распознавания

    Из участков, где текст и гипотеза совпадают, нарезаются фрагменты
    с текстом эталона и метками времени гипотезы.
    """
    try:
        words = read_timed_words(hyp)
    except ValidationError as e:
        raise typer.BadParameter(f"{hyp}: {e}") from e
    chunks = align_document(
        ref.read_text(encoding="utf-8"),
        words,
        lexicon=load_lexicon(lexicon) if lexicon else None,
        target_dur_ms=target_duration,
        min_anchor_quality=min_quality,
        exact=not fast,
    )
    if not chunks:
        print("[red]Не найдено ни одного совпадения, документ не выравнивается")
        raise typer.Abort()
    segments = chunks_to_segments(
        chunks,
        audio_ref=hyp.stem,
        id_prefix=ref.stem,
        source=source,
        language=language,
    )
    count = write_manifest(output, segments)
    print(f"[green]Получено {count} фрагментов, сохранено в файл {output.resolve()}[/]")


@app.command("filter", no_args_is_help=True)
def filter_(
    input: InputOption,
    output: OutputOption,
    config: Annotated[
        Optional[Path],
        typer.Option(help="Пороги очистки (TOML)", exists=True),
    ] = None,
    predictions: PredictionsOption = None,
    rejects: Annotated[
        Optional[Path], typer.Option(help="Файл для удаленных примеров")
    ] = None,
    report: Annotated[
        Optional[Path], typer.Option(help="Файл для сводки по критериям")
    ] = None,
    mark_stage: Annotated[
        Optional[Stage], typer.Option(help="Проставить этап оставшимся примерам")
    ] = None,
    sample: Annotated[
        int, typer.Option(help="Размер выборки удаленных примеров", min=0)
    ] = 0,
    sample_output: Annotated[
        Optional[Path], typer.Option(help="Файл для выборки удаленных примеров")
    ] = None,
    seed: Annotated[int, typer.Option(help="Зерно выборки")] = 0,
    workers: WorkersOption = None,
) -> None:
    """Удаление примеров, нарушающих хотя бы один критерий очистки"""
    try:
        cfg = load_filter_config(config) if config else FilterConfig()
    except InvalidConfig as e:
        raise typer.BadParameter(str(e)) from e
    segments = _load_segments(input, predictions)
    runner = PipelineRunner(workers=workers, seed=seed)
    kept, rejected, summary = filter_manifest(
        segments, cfg, workers=runner.workers, mark_stage=mark_stage
    )
    write_manifest(output, kept)
    if rejects is not None:
        write_lines(rejects, [reject_record(s, v) for s, v in rejected])
    if report is not None:
        write_model(report, summary)
    if sample and sample_output is not None:
        chosen = sample_verdicts(rejected, sample, runner.seed)
        write_lines(sample_output, [reject_record(s, v) for s, v in chosen])
    print(
        f"[green]Оставлено {summary.kept} из {summary.total} примеров, "
        f"удалено {summary.hours_removed:.2f} ч[/]"
    )
    for criterion, count in summary.violations.items():
        if count:
            print(f"[orange3]   - {criterion}: {count}")


@app.command("eval", no_args_is_help=True)
def eval_(
    input: InputOption,
    model: Annotated[str, typer.Option(help="Идентификатор модели")],
    output: OutputOption,
    predictions: PredictionsOption = None,
    norm: Annotated[
        NormPreset, typer.Option(help="Нормализация перед подсчетом WER")
    ] = NormPreset.LIGHT,
    system: Annotated[
        Optional[str], typer.Option(help="Семейство моделей для сводных таблиц")
    ] = None,
    size: Annotated[Optional[ModelSize], typer.Option(help="Размер модели")] = None,
) -> None:
    """Подсчет WER модели по группам (источник, язык)"""
    segments = _load_segments(input, predictions)
    result = evaluate_manifest(
        segments, model, norm_config(norm), system=system, size=size
    )
    write_model(output, result, by_alias=True)
    if result.skipped:
        print(f":warning-emoji: [orange3] Пропущено примеров: {result.skipped}")
    for group in result.groups:
        print(f"{group.source}/{group.language}: WER {format_wer(group.wer)}")
    print(f"[green]Отчет сохранен в файл {output.resolve()}[/]")


@app.command(no_args_is_help=True)
def report(
    inputs: Annotated[
        list[Path],
        typer.Option("--input", "-i", help="Отчеты eval (JSON)", exists=True),
    ],
    layout: Annotated[
        ReportLayout, typer.Option(help="Раскладка таблицы")
    ] = ReportLayout.BY_SIZE,
    dataset: Annotated[
        Optional[str],
        typer.Option(help="Источник или группа (nst/nb) для раскладки by-size"),
    ] = None,
    output: Annotated[
        Optional[Path],
        typer.Option("--output", "-o", help="CSV-файл", rich_help_panel="General Options"),
    ] = None,
) -> None:
    """Сводная таблица WER нескольких моделей"""
    try:
        reports = [
            EvalReport.model_validate_json(path.read_text(encoding="utf-8"))
            for path in inputs
        ]
    except ValidationError as e:
        raise typer.BadParameter(str(e)) from e
    text, csv = comparison_report(reports, layout, dataset)
    print(text)
    if output is not None:
        with atomic_write(output) as file:
            file.write(csv)
        print(f"[green]Таблица сохранена в файл {output.resolve()}[/]")


@app.command(no_args_is_help=True)
def stats(
    input: InputOption,
    output: Annotated[
        Optional[Path],
        typer.Option("--output", "-o", help="JSON-файл", rich_help_panel="General Options"),
    ] = None,
    decimals: Annotated[int, typer.Option(help="Знаков после запятой", min=0)] = 0,
) -> None:
    """Часы по источникам и этапам"""
    result = compute_stats_file(input)
    print(render_stage_table(result, decimals))
    if result.errors:
        print(f":warning-emoji: [orange3] Невалидных примеров: {result.errors}")
    if output is not None:
        write_model(output, result)
        print(f"[green]Статистика сохранена в файл {output.resolve()}[/]")


@app.command("stats-diff", no_args_is_help=True)
def stats_diff(
    before: Annotated[Path, typer.Argument(help="Статистика до очистки", exists=True)],
    after: Annotated[Path, typer.Argument(help="Статистика после очистки", exists=True)],
) -> None:
    """Доля часов каждого источника, оставшаяся после очистки"""
    try:
        old, new = (
            CorpusStats.model_validate_json(p.read_text(encoding="utf-8"))
            for p in (before, after)
        )
    except ValidationError as e:
        raise typer.BadParameter(str(e)) from e
    print(render_retention(stage_diff(old, new)))


@app.command("train-config", no_args_is_help=True)
def train_config(
    size: Annotated[ModelSize, typer.Option(help="Размер модели")],
    profile: Annotated[Profile, typer.Option(help="Профиль обучения")],
    output: OutputOption,
) -> None:
    """Конфигурация обучения с источником каждого значения"""
    cfg = emit_config(size, profile)
    write_config(output, cfg)
    for note in cfg.notes:
        print(f"[orange3]   - {note}")
    print(f"[green]Конфигурация сохранена в файл {output.resolve()}[/]")


@app.command(no_args_is_help=True)
def run(
    spec: Annotated[
        Path, typer.Argument(help="Описание конвейера (TOML)", exists=True, show_default=False)
    ],
    report: Annotated[
        Optional[Path], typer.Option(help="Файл для отчета о выполнении")
    ] = None,
    workers: WorkersOption = None,
    seed: Annotated[
        Optional[int], typer.Option(help="Зерно выборок. По умолчанию из описания")
    ] = None,
) -> None:
    """Выполнение конвейера из описания

    Код выхода 1, если этап завершился с ошибкой; 2, если описание
    не прошло проверку.
    """
    try:
        pipeline = load_pipeline_spec(spec)
        runner = PipelineRunner(
            workers=workers if workers is not None else pipeline.settings.workers,
            seed=seed if seed is not None else pipeline.settings.seed,
        )
        result = runner.run(pipeline)
    except PipelineSpecError as e:
        raise typer.BadParameter(str(e)) from e
    for stage in result.stages:
        print(
            f"[green]{stage.name}[/]: {stage.records_in} -> {stage.records_out} "
            f"({stage.seconds:.2f} s)"
        )
    if report is not None:
        write_model(report, result)
    if not result.ok:
        print(f"[red]Этап {result.failed_stage} завершился с ошибкой: {result.error}")
        raise typer.Exit(1)


@app.command(no_args_is_help=True)
def validate(
    manifest: Annotated[
        Path, typer.Argument(help="Манифест (JSONL)", exists=True, show_default=False)
    ],
) -> None:
    """Проверка инвариантов всех примеров манифеста

    Код выхода 2, если найдено хотя бы одно нарушение.
    """
    problems: list[str] = []
    total = 0
    with open(manifest, encoding="utf-8") as file:
        for line_no, line in enumerate(file, start=1):
            if not line.strip():
                continue
            total += 1
            try:
                seg = parse_record(line, path=manifest, line_no=line_no)
            except ManifestError as e:
                problems.append(str(e))
                continue
            problems += [f"{seg.id}: {v}" for v in validate_segment(seg)]
            for ann in seg.ner or ():
                problems += [
                    f"{seg.id} ({ann.entity_text}): {v}"
                    for v in validate_annotation(ann, seg.text)
                ]
            for pred in seg.predictions or ():
                problems += [
                    f"{seg.id} ({pred.model_id}): {v}" for v in validate_prediction(pred)
                ]
    if problems:
        print(f"[red]Нарушений: {len(problems)}")
        for problem in problems:
            print(f"[red]   - {problem}")
        raise typer.Exit(2)
    print(f"[green]Проверено {total} примеров, нарушений нет[/]")


def main() -> Any:
    return app()
