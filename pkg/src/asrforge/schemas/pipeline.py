from pathlib import Path
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from asrforge.map_types.enums import (
    Language,
    ModelSize,
    NormPreset,
    Profile,
    Source,
    Stage,
    StageKind,
    SubtitleFormat,
)
from asrforge.schemas.filters import FilterConfig
from asrforge.schemas.segment import MAX_SEGMENT_MS


class PipelineSettings(BaseModel):
    workers: Optional[int] = Field(default=None, ge=1)
    """Число процессов; по умолчанию - число ядер"""

    seed: Optional[int] = None
    """Зерно для выборок диагностики"""


class StageSpec(BaseModel):
    """Один вызов этапа конвейера"""

    model_config = ConfigDict(extra="forbid")

    name: Optional[str] = None
    stage: StageKind
    inputs: list[Path] = []
    outputs: list[Path] = []
    options: dict[str, Any] = {}


class PipelineSpec(BaseModel):
    """Декларативное описание конвейера (pipeline.toml)"""

    model_config = ConfigDict(extra="forbid")

    settings: PipelineSettings = Field(default_factory=PipelineSettings)
    stages: list[StageSpec] = []

    @model_validator(mode="after")
    def _name_stages(self):
        for i, stage in enumerate(self.stages):
            if stage.name is None:
                stage.name = f"{i + 1:02d}-{stage.stage.value}"
        return self


class _Options(BaseModel):
    model_config = ConfigDict(extra="forbid", protected_namespaces=())


class IngestOptions(_Options):
    format: SubtitleFormat = SubtitleFormat.SRT
    rules: Optional[Path] = None
    max_duration_ms: int = Field(default=MAX_SEGMENT_MS, gt=0)
    min_gap_ms: int = Field(default=1000, gt=0)
    no_speech: bool = True
    durations: Optional[Path] = None
    """JSON: имя файла субтитров без расширения -> длительность записи, мс"""

    audio_suffix: str = ".mp3"
    source: Source = Source.NRK_SUBTITLES
    language: Language = Language.BOKMAAL
    encoding: str = "utf-8"
    """Кодировка файлов субтитров"""


class AlignOptions(_Options):
    lexicon: Optional[Path] = None
    min_quality: float = Field(default=0.8, ge=0, le=1)
    target_duration_ms: int = Field(default=MAX_SEGMENT_MS, gt=0)
    max_unmatched_run: int = Field(default=4, ge=0)
    exact: bool = True
    audio_ref: Optional[str] = None
    source: Source = Source.AUDIO_BOOKS
    language: Language = Language.BOKMAAL


class FilterOptions(_Options):
    config: Optional[Path] = None
    filters: FilterConfig = Field(default_factory=FilterConfig)
    mark_stage: Optional[Stage] = None
    """Проставить этап оставшимся примерам, например stage2"""

    sample: int = Field(default=0, ge=0)
    """Размер случайной выборки удаленных примеров для ручной проверки"""


class EvalOptions(_Options):
    model: str
    norm: NormPreset = NormPreset.LIGHT
    system: Optional[str] = None
    size: Optional[ModelSize] = None


class StatsOptions(_Options):
    pass


class TrainConfigOptions(_Options):
    size: ModelSize
    profile: Profile


class StageReport(BaseModel):
    name: str
    stage: StageKind
    seconds: float
    records_in: int
    records_out: int
    outputs: dict[str, str] = {}
    """Путь -> sha256 содержимого"""


class RunReport(BaseModel):
    stages: list[StageReport] = []
    failed_stage: Optional[str] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.failed_stage is None
