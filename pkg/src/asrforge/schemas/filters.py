from typing import Optional

from pydantic import BaseModel, Field, computed_field, model_validator

from asrforge.map_types.enums import FilterCriterion
from asrforge.schemas._common import FrozenModel
from asrforge.schemas.segment import NerAnnotation
from asrforge.schemas.stats import MS_PER_HOUR


class FilterConfig(BaseModel):
    """Пороги критериев очистки"""

    fuzzy_threshold: float = Field(default=0.8, ge=0, le=1)
    """Минимальное сходство первого и последнего слова"""

    ngram_min_len: int = Field(default=4, ge=2)
    """Длина проверяемых n-грамм в словах"""

    ner_max_count: Optional[int] = Field(default=None, ge=0)
    """Максимум сущностей в эталоне; `None` - правило выключено"""

    ner_max_delta: Optional[int] = Field(default=None, ge=0)
    """Максимальная разница числа сущностей с ближайшей гипотезой"""

    models: Optional[list[str]] = None
    """Учитывать гипотезы только этих моделей"""


class Violation(FrozenModel):
    criterion: FilterCriterion
    detail: str


class FilterVerdict(FrozenModel):
    """Решение по примеру: оставить или удалить"""

    keep: bool
    violations: tuple[Violation, ...] = ()

    @model_validator(mode="after")
    def _keep_iff_clean(self):
        if self.keep != (len(self.violations) == 0):
            raise ValueError("keep должен быть True тогда и только тогда, когда нарушений нет")
        return self

    @classmethod
    def from_violations(cls, violations: list[Violation]) -> "FilterVerdict":
        return cls(keep=not violations, violations=tuple(violations))


class NerBundle(FrozenModel):
    """Сущности эталона и каждой из гипотез"""

    target: tuple[NerAnnotation, ...] = ()
    predictions: tuple[tuple[NerAnnotation, ...], ...] = ()


class FilterReport(BaseModel):
    """Сводка по очистке манифеста"""

    total: int = 0
    kept: int = 0
    rejected: int = 0
    violations: dict[str, int] = Field(
        default_factory=lambda: {c.value: 0 for c in FilterCriterion}
    )
    """Число нарушений по каждому критерию"""

    ms_removed: int = 0

    def record(self, duration_ms: int, verdict: FilterVerdict) -> None:
        self.total += 1
        if verdict.keep:
            self.kept += 1
            return
        self.rejected += 1
        self.ms_removed += duration_ms
        for violation in verdict.violations:
            self.violations[violation.criterion.value] += 1

    @computed_field  # type: ignore[prop-decorator]
    @property
    def hours_removed(self) -> float:
        return self.ms_removed / MS_PER_HOUR
