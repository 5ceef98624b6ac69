import json
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from graphlib import CycleError, TopologicalSorter
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence, TypeVar, Union

from pydantic import BaseModel, ValidationError

from asrforge.alignment import (
    align_document,
    chunks_to_segments,
    load_lexicon,
    read_timed_words,
)
from asrforge.errors import PipelineSpecError, StageFailed
from asrforge.evaluation import evaluate_manifest, norm_config
from asrforge.filters import (
    filter_manifest,
    load_filter_config,
    reject_record,
    sample_verdicts,
)
from asrforge.logger import logger
from asrforge.manifest import (
    attach_predictions,
    file_digest,
    load_predictions,
    read_manifest,
    write_lines,
    write_manifest,
    write_model,
)
from asrforge.map_types.enums import StageKind
from asrforge.schemas.pipeline import (
    AlignOptions,
    EvalOptions,
    FilterOptions,
    IngestOptions,
    PipelineSpec,
    RunReport,
    StageReport,
    StageSpec,
    StatsOptions,
    TrainConfigOptions,
)
from asrforge.schemas.segment import Segment
from asrforge.schemas.stats import CorpusStats
from asrforge.stats import compute_stats_file
from asrforge.subtitles import ingest_document, load_rules
from asrforge.train_config import emit_config, write_config

try:
    import tomllib
except ImportError:  # python < 3.11
    import tomli as tomllib  # type: ignore[no-redef]

T = TypeVar("T")
R = TypeVar("R")

OPTION_MODELS: dict[StageKind, type[BaseModel]] = {
    StageKind.INGEST: IngestOptions,
    StageKind.ALIGN: AlignOptions,
    StageKind.FILTER: FilterOptions,
    StageKind.EVAL: EvalOptions,
    StageKind.STATS: StatsOptions,
    StageKind.TRAIN_CONFIG: TrainConfigOptions,
}

# (минимум, максимум) входов и выходов; None - без ограничения
ARITY: dict[StageKind, tuple[tuple[int, Optional[int]], tuple[int, int]]] = {
    StageKind.INGEST: ((1, None), (1, 1)),
    StageKind.ALIGN: ((2, 2), (1, 1)),
    StageKind.FILTER: ((1, 2), (1, 4)),
    StageKind.EVAL: ((1, 2), (1, 1)),
    StageKind.STATS: ((1, None), (1, 1)),
    StageKind.TRAIN_CONFIG: ((0, 0), (1, 1)),
}

_OPTION_PATHS = ("rules", "durations", "lexicon", "config")


def load_pipeline_spec(path: Union[str, Path]) -> PipelineSpec:
    """Чтение описания конвейера из TOML

    Относительные пути входов, выходов и файлов настроек этапов
    отсчитываются от каталога файла описания.

    Raises:
        PipelineSpecError: Файл не читается или не соответствует схеме
    """
    path = Path(path)
    try:
        with open(path, "rb") as file:
            spec = PipelineSpec.model_validate(tomllib.load(file))
    except (OSError, tomllib.TOMLDecodeError, ValidationError) as e:
        raise PipelineSpecError(f"{path}: {e}") from e
    base = path.parent
    for stage in spec.stages:
        stage.inputs = [base / p for p in stage.inputs]
        stage.outputs = [base / p for p in stage.outputs]
        for key in _OPTION_PATHS:
            if isinstance(stage.options.get(key), str):
                stage.options[key] = str(base / stage.options[key])
    return spec


def stage_options(stage: StageSpec) -> BaseModel:
    try:
        return OPTION_MODELS[stage.stage].model_validate(stage.options)
    except ValidationError as e:
        raise PipelineSpecError(f"Этап {stage.name}: {e}") from e


def _check_arity(stage: StageSpec) -> None:
    (in_min, in_max), (out_min, out_max) = ARITY[stage.stage]
    n_in, n_out = len(stage.inputs), len(stage.outputs)
    if n_in < in_min or (in_max is not None and n_in > in_max):
        raise PipelineSpecError(
            f"Этап {stage.name}: неверное число входов ({n_in})"
        )
    if not out_min <= n_out <= out_max:
        raise PipelineSpecError(
            f"Этап {stage.name}: неверное число выходов ({n_out})"
        )


def execution_order(spec: PipelineSpec) -> list[StageSpec]:
    """Проверка описания и порядок выполнения этапов

    Этап зависит от этапа, выход которого он читает; при прочих равных
    сохраняется порядок описания.

    Raises:
        PipelineSpecError: Неизвестные опции, неверное число входов или
            выходов, повторяющийся выход, несуществующий вход или цикл
    """
    producers: dict[Path, int] = {}
    for idx, stage in enumerate(spec.stages):
        stage_options(stage)
        _check_arity(stage)
        for out in stage.outputs:
            if out in producers:
                raise PipelineSpecError(
                    f"Выход {out} записывают этапы "
                    f"{spec.stages[producers[out]].name} и {stage.name}"
                )
            producers[out] = idx

    sorter: TopologicalSorter = TopologicalSorter()
    for idx, stage in enumerate(spec.stages):
        sorter.add(idx)
        for inp in stage.inputs:
            if inp in producers:
                sorter.add(idx, producers[inp])
            elif not inp.exists():
                raise PipelineSpecError(
                    f"Этап {stage.name}: вход {inp} не существует "
                    "и не создается другими этапами"
                )
    try:
        sorter.prepare()
    except CycleError as e:
        names = [spec.stages[i].name for i in e.args[1]]
        raise PipelineSpecError(f"Цикл в описании конвейера: {' -> '.join(names)}") from e

    order: list[int] = []
    while sorter.is_active():
        ready = sorted(sorter.get_ready())
        order.extend(ready)
        sorter.done(*ready)
    return [spec.stages[i] for i in order]


def _ingest_file(
    path: Path, opts: IngestOptions, durations: dict[str, int]
) -> list[Segment]:
    rules = load_rules(opts.rules) if opts.rules else None
    return ingest_document(
        path.read_bytes(),
        opts.format,
        doc_id=path.stem,
        audio_ref=path.stem + opts.audio_suffix,
        rules=rules,
        max_duration_ms=opts.max_duration_ms,
        min_gap_ms=opts.min_gap_ms,
        recording_duration_ms=durations.get(path.stem),
        no_speech=opts.no_speech,
        source=opts.source,
        language=opts.language,
        encoding=opts.encoding,
    )


def subtitle_files(inputs: Iterable[Path], suffix: str) -> list[Path]:
    """Файлы субтитров; каталоги раскрываются по расширению"""
    files: list[Path] = []
    for inp in inputs:
        if inp.is_dir():
            files.extend(sorted(inp.glob(f"*{suffix}")))
        else:
            files.append(inp)
    return files


class PipelineRunner:
    """Исполнитель конвейера

    Этапы выполняются последовательно в порядке зависимостей, записи
    внутри этапа обрабатываются параллельно с сохранением порядка.
    Каждый выход записывается атомарно.

    Args:
        workers:
            Число процессов. По умолчанию - число ядер.
        seed:
            Зерно выборок для ручной проверки. По умолчанию 0.
        trust_env:
            Использовать переменные окружения `FORGE_WORKERS` и `FORGE_SEED`.
            По умолчанию `True`.
    """

    def __init__(
        self,
        *,
        workers: Optional[int] = None,
        seed: Optional[int] = None,
        trust_env: bool = True,
    ):
        self._workers = self._int_var("workers", workers, trust_env)
        if self._workers is None:
            self._workers = os.cpu_count() or 1
        self._seed = self._int_var("seed", seed, trust_env)
        if self._seed is None:
            self._seed = 0

    @property
    def workers(self) -> int:
        return self._workers

    @property
    def seed(self) -> int:
        return self._seed

    @staticmethod
    def _str_var(var_name: str, var, trust_env: bool):
        if not trust_env:
            return var
        env_var_name = f"FORGE_{var_name.upper()}"
        env_var = os.getenv(env_var_name)
        if env_var is not None:
            if var is not None:
                warnings.warn(
                    f"Используется переменная окружения {env_var_name}, "
                    f"аргумент '{var_name}' проигнорирован",
                    stacklevel=4,
                )
            return env_var
        return var

    @classmethod
    def _int_var(cls, var_name: str, var, trust_env: bool) -> Optional[int]:
        d = cls._str_var(var_name, var, trust_env)
        if d is None:
            return None
        return int(d)

    def _map(self, fn: Callable[[T], R], items: Sequence[T]) -> list[R]:
        if self._workers <= 1 or len(items) <= 1:
            return [fn(item) for item in items]
        with ProcessPoolExecutor(max_workers=self._workers) as executor:
            return list(executor.map(fn, items))

    def run(self, spec: PipelineSpec) -> RunReport:
        """Выполнение конвейера

        Ошибка этапа останавливает выполнение; выходы завершенных
        этапов сохраняются.

        Raises:
            PipelineSpecError: Описание не прошло проверку (до выполнения)

        Returns:
            Отчет: время, число записей и sha256 выходов каждого этапа
        """
        order = execution_order(spec)
        report = RunReport()
        for stage in order:
            try:
                report.stages.append(self._execute(stage))
            except StageFailed as e:
                logger.warning("%s", e)
                report.failed_stage = e.stage_name
                report.error = f"{type(e.cause).__name__}: {e.cause}"
                break
        return report

    def _execute(self, stage: StageSpec) -> StageReport:
        assert stage.name is not None
        logger.debug("Stage %s started", stage.name)
        started = time.perf_counter()
        runners = {
            StageKind.INGEST: self._ingest,
            StageKind.ALIGN: self._align,
            StageKind.FILTER: self._filter,
            StageKind.EVAL: self._eval,
            StageKind.STATS: self._stats,
            StageKind.TRAIN_CONFIG: self._train_config,
        }
        try:
            records_in, records_out = runners[stage.stage](stage, stage_options(stage))
        except Exception as e:
            raise StageFailed(stage.name, e) from e
        seconds = time.perf_counter() - started
        logger.debug("Stage %s finished in %.2f s", stage.name, seconds)
        return StageReport(
            name=stage.name,
            stage=stage.stage,
            seconds=seconds,
            records_in=records_in,
            records_out=records_out,
            outputs={str(p): file_digest(p) for p in stage.outputs if p.exists()},
        )

    def _ingest(self, stage: StageSpec, opts: IngestOptions) -> tuple[int, int]:
        durations: dict[str, int] = {}
        if opts.durations:
            durations = json.loads(Path(opts.durations).read_text(encoding="utf-8"))
        files = subtitle_files(stage.inputs, f".{opts.format.value}")
        docs = self._map(partial(_ingest_file, opts=opts, durations=durations), files)
        count = write_manifest(stage.outputs[0], (s for doc in docs for s in doc))
        return len(files), count

    def _align(self, stage: StageSpec, opts: AlignOptions) -> tuple[int, int]:
        ref_path, hyp_path = stage.inputs
        words = read_timed_words(hyp_path)
        chunks = align_document(
            ref_path.read_text(encoding="utf-8"),
            words,
            lexicon=load_lexicon(opts.lexicon) if opts.lexicon else None,
            target_dur_ms=opts.target_duration_ms,
            min_anchor_quality=opts.min_quality,
            max_unmatched_run=opts.max_unmatched_run,
            exact=opts.exact,
        )
        segments = chunks_to_segments(
            chunks,
            audio_ref=opts.audio_ref or hyp_path.stem,
            id_prefix=ref_path.stem,
            source=opts.source,
            language=opts.language,
        )
        return len(words), write_manifest(stage.outputs[0], segments)

    def _load_segments(self, stage: StageSpec) -> list[Segment]:
        segments: Iterable[Segment] = read_manifest(stage.inputs[0])
        if len(stage.inputs) > 1:
            segments = attach_predictions(segments, load_predictions(stage.inputs[1]))
        return list(segments)

    def _filter(self, stage: StageSpec, opts: FilterOptions) -> tuple[int, int]:
        cfg = load_filter_config(opts.config) if opts.config else opts.filters
        segments = self._load_segments(stage)
        kept, rejected, report = filter_manifest(
            segments, cfg, workers=self._workers, mark_stage=opts.mark_stage
        )

        outputs = stage.outputs
        write_manifest(outputs[0], kept)
        if len(outputs) > 1:
            write_lines(outputs[1], (reject_record(s, v) for s, v in rejected))
        if len(outputs) > 2:
            write_model(outputs[2], report)
        if len(outputs) > 3:
            sample = sample_verdicts(rejected, opts.sample, self._seed)
            write_lines(outputs[3], (reject_record(s, v) for s, v in sample))
        return len(segments), len(kept)

    def _eval(self, stage: StageSpec, opts: EvalOptions) -> tuple[int, int]:
        segments = self._load_segments(stage)
        report = evaluate_manifest(
            segments,
            opts.model,
            norm_config(opts.norm),
            system=opts.system,
            size=opts.size,
        )
        write_model(stage.outputs[0], report, by_alias=True)
        return len(segments), len(report.groups)

    def _stats(self, stage: StageSpec, opts: StatsOptions) -> tuple[int, int]:
        stats = CorpusStats()
        for inp in stage.inputs:
            stats = stats + compute_stats_file(inp)
        write_model(stage.outputs[0], stats)
        counted = sum(r.segment_count for r in stats.rows) + stats.errors
        return counted, len(stats.rows)

    def _train_config(
        self, stage: StageSpec, opts: TrainConfigOptions
    ) -> tuple[int, int]:
        write_config(stage.outputs[0], emit_config(opts.size, opts.profile))
        return 0, 1


def run_pipeline(spec: PipelineSpec, *, trust_env: bool = True) -> RunReport:
    """Выполнение конвейера с настройками из описания"""
    runner = PipelineRunner(
        workers=spec.settings.workers, seed=spec.settings.seed, trust_env=trust_env
    )
    return runner.run(spec)
