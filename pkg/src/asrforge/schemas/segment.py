from typing import Optional

from pydantic import ConfigDict, Field

from asrforge.map_types.enums import EntityLabel, Language, Source, Stage
from asrforge.schemas._common import FrozenModel

MAX_SEGMENT_MS = 30_000
"""Максимальная длина обучающего примера"""


class TimedWord(FrozenModel):
    """Слово гипотезы с временными метками"""

    word: str
    start_ms: int
    end_ms: int


class NerAnnotation(FrozenModel):
    """Именованная сущность, найденная внешней моделью"""

    entity_text: str
    label: EntityLabel
    char_start: int
    char_end: int


class Prediction(FrozenModel):
    """Гипотеза одной модели для одного примера"""

    model_config = ConfigDict(extra="allow")

    model_id: str
    text: str
    words: Optional[tuple[TimedWord, ...]] = None
    ner: Optional[tuple[NerAnnotation, ...]] = None
    """Сущности в тексте гипотезы"""


class Segment(FrozenModel):
    """Обучающий пример: фрагмент аудио и целевой текст

    Неизвестные поля записи манифеста сохраняются и записываются обратно.
    """

    model_config = ConfigDict(extra="allow")

    id: str
    audio_ref: str
    """Путь или URI аудиофайла"""

    start_ms: int
    end_ms: int
    text: str = ""
    """Целевой текст в исходном виде, без нормализации"""

    source: Source
    source_name: Optional[str] = None
    """Имя источника для `Source.OTHER`"""

    language: Language = Language.UNKNOWN
    stage: Stage = Stage.STAGE1
    oversize: bool = False
    """Одна реплика длиннее допустимого, решение об удалении за вызывающим"""

    predictions: Optional[tuple[Prediction, ...]] = None
    ner: Optional[tuple[NerAnnotation, ...]] = Field(default=None)
    """Сущности в целевом тексте"""

    @property
    def duration_ms(self) -> int:
        return self.end_ms - self.start_ms

    @property
    def source_label(self) -> str:
        """Ключ источника для группировки в отчетах"""
        if self.source is Source.OTHER and self.source_name:
            return f"other:{self.source_name}"
        return self.source.value

    def prediction_for(self, model_id: str) -> Optional[Prediction]:
        """Гипотеза указанной модели, если она есть"""
        for pred in self.predictions or ():
            if pred.model_id == model_id:
                return pred
        return None
