from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, computed_field

from asrforge.map_types.enums import ModelSize


class NormalizationConfig(BaseModel):
    """Легкая нормализация перед подсчетом WER"""

    lowercase: bool = True
    strip_punctuation: bool = True
    collapse_whitespace: bool = True
    extra_mappings: list[tuple[str, str]] = []
    """Пары (регулярное выражение, замена), применяются по порядку в конце"""

    @classmethod
    def disabled(cls) -> "NormalizationConfig":
        return cls(lowercase=False, strip_punctuation=False, collapse_whitespace=False)


class WerBreakdown(BaseModel):
    """Счетчики правок пословного выравнивания"""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    substitutions: int = Field(default=0, ge=0, alias="S")
    deletions: int = Field(default=0, ge=0, alias="D")
    insertions: int = Field(default=0, ge=0, alias="I")
    ref_len: int = Field(default=0, ge=0)

    @computed_field  # type: ignore[prop-decorator]
    @property
    def wer(self) -> Optional[float]:
        """Может быть больше 1, если вставок много; `None` при пустом эталоне"""
        if self.ref_len == 0:
            return None
        return self.errors / self.ref_len

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @classmethod
    def zero(cls) -> "WerBreakdown":
        return cls()

    def __add__(self, other: "WerBreakdown") -> "WerBreakdown":
        return WerBreakdown(
            substitutions=self.substitutions + other.substitutions,
            deletions=self.deletions + other.deletions,
            insertions=self.insertions + other.insertions,
            ref_len=self.ref_len + other.ref_len,
        )


class GroupResult(WerBreakdown):
    """Сводный WER по паре (источник, язык)"""

    source: str
    language: str
    skipped: int = Field(default=0, ge=0)
    """Пропущенные примеры: нет гипотезы модели или пустой эталон"""

    @property
    def breakdown(self) -> WerBreakdown:
        return WerBreakdown(
            substitutions=self.substitutions,
            deletions=self.deletions,
            insertions=self.insertions,
            ref_len=self.ref_len,
        )


class EvalReport(BaseModel):
    """Результат оценки одной модели на манифесте"""

    model_config = ConfigDict(protected_namespaces=())

    model_id: str
    system: Optional[str] = None
    """Семейство моделей, колонка в раскладке по размеру"""

    size: Optional[ModelSize] = None
    groups: list[GroupResult] = []

    @property
    def skipped(self) -> int:
        return sum(g.skipped for g in self.groups)

    def pooled(self) -> WerBreakdown:
        """Сумма счетчиков по всем группам"""
        total = WerBreakdown.zero()
        for group in self.groups:
            total = total + group.breakdown
        return total

    def group(self, source: str, language: str) -> Optional[GroupResult]:
        for g in self.groups:
            if g.source == source and g.language == language:
                return g
        return None
