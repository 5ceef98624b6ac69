from enum import Enum


class Source(Enum):
    """Источник обучающего примера"""

    NRK_SUBTITLES = "nrk_subtitles"
    """Субтитры NRK"""

    NRK_NO_CAPTION = "nrk_no_caption"
    """Фрагменты записей NRK без речи"""

    AUDIO_BOOKS = "audio_books"
    """Аудиокниги, выровненные по тексту книги"""

    NST = "nst"
    """Корпус NST"""

    STORTINGET = "stortinget"
    """Стенограммы Стортинга"""

    OTHER = "other"
    """Прочие источники (имя хранится в `Segment.source_name`)"""

    @property
    def title(self) -> str:
        """Название строки в таблице статистики"""
        return _SOURCE_TITLES[self]


_SOURCE_TITLES = {
    Source.NRK_SUBTITLES: "NRK - Subtitles",
    Source.NRK_NO_CAPTION: "NRK - No caption",
    Source.AUDIO_BOOKS: "Audio Books",
    Source.NST: "The NST Dataset",
    Source.STORTINGET: "The Stortinget Speech Corpus",
    Source.OTHER: "Other",
}


class Language(Enum):
    """Письменная норма целевого текста"""

    BOKMAAL = "nb"
    NYNORSK = "nn"
    ENGLISH = "en"
    UNKNOWN = "unknown"


class Stage(Enum):
    """Этап обучения, для которого предназначен пример"""

    STAGE1 = "stage1"
    """Полный корпус"""

    STAGE2 = "stage2"
    """Очищенный корпус"""


class SubtitleFormat(Enum):
    SRT = "srt"
    VTT = "vtt"


class CueFlagKind(Enum):
    """Пометки, которые ставятся на реплику при очистке"""

    SPEAKER_CHANGE = "speaker_change"
    CONTINUATION = "continuation"
    LIVE_TEXTING = "live_texting"
    LANGUAGE_TAG = "language_tag"
    SPEAKER_NAME = "speaker_name"
    OVERLAP = "overlap"
    """Реплика начинается раньше, чем закончилась предыдущая"""


class OpKind(Enum):
    """Операция пословного выравнивания"""

    MATCH = "match"
    SUBSTITUTE = "substitute"
    DELETE = "delete"
    INSERT = "insert"


class EntityLabel(Enum):
    PERSON = "PER"
    LOCATION = "LOC"
    ORGANIZATION = "ORG"
    OTHER = "MISC"


class FilterCriterion(Enum):
    """Критерий очистки, по которому пример удаляется из корпуса"""

    FUZZY_BOUNDARY = "fuzzy_boundary"
    """Первое или последнее слово не совпадает с гипотезами"""

    INSERTION = "insertion"
    """В эталоне есть n-грамма, которой нет ни в одной гипотезе"""

    OMISSION = "omission"
    """Во всех гипотезах есть n-грамма, которой нет в эталоне"""

    NER_COUNT = "ner_count"
    """Подозрительное количество именованных сущностей"""

    MISSING_PREDICTIONS = "missing_predictions"
    """Нет ни одной гипотезы, проверить пример невозможно"""


class NormPreset(Enum):
    LIGHT = "light"
    NONE = "none"


class ReportLayout(Enum):
    """Раскладка сравнительной таблицы"""

    BY_SIZE = "by-size"
    """Строки - размеры моделей, колонки - системы"""

    BY_DATASET = "by-dataset"
    """Строки - модели, колонки - наборы данных"""


class ModelSize(Enum):
    TINY = "tiny"
    BASE = "base"
    SMALL = "small"
    MEDIUM = "medium"
    LARGE = "large"

    @property
    def title(self) -> str:
        return self.value.capitalize()


class Profile(Enum):
    """Набор гиперпараметров обучения"""

    OPENAI_WHISPER = "openai-whisper"
    OPENAI_WHISPER_LARGE_V3 = "openai-whisper-large-v3"
    NB_WHISPER = "nb-whisper"


class LrSchedule(Enum):
    LINEAR_DECAY = "linear_decay"


class WeightInit(Enum):
    PRETRAINED_CHECKPOINT = "pretrained_checkpoint"
    GAUSSIAN_FAN_IN = "gaussian_fan_in"


class StageKind(Enum):
    """Тип этапа конвейера"""

    INGEST = "ingest"
    ALIGN = "align"
    FILTER = "filter"
    EVAL = "eval"
    STATS = "stats"
    TRAIN_CONFIG = "train-config"
