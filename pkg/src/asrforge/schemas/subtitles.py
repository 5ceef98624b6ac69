import re
from typing import Optional

from pydantic import BaseModel, Field, field_validator

from asrforge.map_types.enums import CueFlagKind
from asrforge.schemas._common import FrozenModel


def _check_pattern(v: str) -> str:
    try:
        re.compile(v)
    except re.error as e:
        raise ValueError(f"Некорректное регулярное выражение {v!r}: {e}")
    return v


class CueFlag(FrozenModel):
    kind: CueFlagKind
    value: Optional[str] = None
    """Имя диктора или язык для соответствующих пометок"""


class SubtitleCue(FrozenModel):
    """Блок субтитров до очистки и склейки"""

    index: int
    start_ms: int
    end_ms: int
    lines: tuple[str, ...]
    flags: frozenset[CueFlag] = frozenset()

    @property
    def text(self) -> str:
        return " ".join(line.strip() for line in self.lines if line.strip())

    @property
    def duration_ms(self) -> int:
        return self.end_ms - self.start_ms

    def has(self, kind: CueFlagKind) -> bool:
        return any(flag.kind is kind for flag in self.flags)


class ContinuationMarkers(BaseModel):
    """Пометки продолжения фразы в следующей реплике"""

    trailing: list[str] = ["…", "...", "-", "–"]
    """В конце реплики, фраза продолжается дальше"""

    leading: list[str] = ["…", "..."]
    """В начале реплики, фраза начата в предыдущей"""


class NotationRules(BaseModel):
    """Правила разметки вещателя

    Шаблоны - регулярные выражения, сравнение без учета регистра,
    кроме `speaker_name_pattern`.
    """

    speaker_prefixes: list[str] = ["-", "–", "—"]
    """Тире в начале строки отделяет одновременно говорящих"""

    continuation_markers: ContinuationMarkers = Field(
        default_factory=ContinuationMarkers
    )
    credit_patterns: list[str] = [
        r"^(norsk\s+)?tekst(ing|et)?(\s+av)?\s*:",
        r"^tekstet\s+av\b",
        r"^(oversatt|oversettelse)(\s+av)?\b",
        r"\bnrk\s+teksting\b",
        r"^subtitles?\s+by\b",
    ]
    language_tag_pattern: str = (
        r"[\[(](?P<lang>engelsk|svensk|dansk|tysk|fransk|spansk|italiensk"
        r"|russisk|samisk|arabisk|polsk|english)[\])]"
    )
    live_texting_marker: str = r"[\[(](direkte|live|simultan)\s*tekst(et|ing)?[\])]"
    speaker_name_pattern: str = r"^(?P<name>[A-ZÆØÅ][A-ZÆØÅ .'-]*[A-ZÆØÅ])\s*:\s*"
    """Имя диктора заглавными буквами с двоеточием"""

    nonspeech_pattern: str = r"\[[^\]]*\]"
    """Описания звуков, например `[musikk]`"""

    markup_pattern: str = r"<[^>]*>|\{\\[^}]*\}"
    drop_live_texting: bool = False
    """Удалять реплики синхронного субтитрирования вместо пометки"""

    @field_validator(
        "language_tag_pattern",
        "live_texting_marker",
        "speaker_name_pattern",
        "nonspeech_pattern",
        "markup_pattern",
    )
    @classmethod
    def _compiles(cls, v: str) -> str:
        return _check_pattern(v)

    @field_validator("credit_patterns")
    @classmethod
    def _all_compile(cls, v: list[str]) -> list[str]:
        for pattern in v:
            _check_pattern(pattern)
        return v

    @field_validator("language_tag_pattern")
    @classmethod
    def _has_lang_group(cls, v: str) -> str:
        if "lang" not in re.compile(v).groupindex:
            raise ValueError("Шаблон языка должен содержать группу (?P<lang>...)")
        return v

    @field_validator("speaker_name_pattern")
    @classmethod
    def _has_name_group(cls, v: str) -> str:
        if "name" not in re.compile(v).groupindex:
            raise ValueError("Шаблон имени должен содержать группу (?P<name>...)")
        return v
