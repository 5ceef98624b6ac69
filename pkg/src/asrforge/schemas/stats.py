from typing import Optional

from pydantic import BaseModel

from asrforge.map_types.enums import Stage

MS_PER_HOUR = 3_600_000


class StatRow(BaseModel):
    """Счетчики одной пары (источник, этап)"""

    source: str
    stage: Stage
    segment_count: int = 0
    total_ms: int = 0
    """Суммарная длительность; в часы переводится только при выводе"""

    total_words: int = 0


class CorpusStats(BaseModel):
    """Статистика корпуса: моноид по сложению счетчиков"""

    rows: list[StatRow] = []
    errors: int = 0
    """Невалидные примеры, не вошедшие в суммы"""

    def row(self, source: str, stage: Stage) -> Optional[StatRow]:
        for r in self.rows:
            if r.source == source and r.stage is stage:
                return r
        return None

    @property
    def sources(self) -> list[str]:
        return sorted({r.source for r in self.rows})

    def stage_total(self, stage: Stage) -> StatRow:
        total = StatRow(source="total", stage=stage)
        for r in self.rows:
            if r.stage is stage:
                total.segment_count += r.segment_count
                total.total_ms += r.total_ms
                total.total_words += r.total_words
        return total

    def source_ms(self, source: str) -> int:
        """Длительность источника по всем этапам"""
        return sum(r.total_ms for r in self.rows if r.source == source)

    def merge(self, other: "CorpusStats") -> "CorpusStats":
        acc: dict[tuple[str, Stage], StatRow] = {}
        for r in [*self.rows, *other.rows]:
            key = (r.source, r.stage)
            if key not in acc:
                acc[key] = StatRow(source=r.source, stage=r.stage)
            acc[key].segment_count += r.segment_count
            acc[key].total_ms += r.total_ms
            acc[key].total_words += r.total_words
        rows = [acc[k] for k in sorted(acc, key=lambda k: (k[0], k[1].value))]
        return CorpusStats(rows=rows, errors=self.errors + other.errors)

    def __add__(self, other: "CorpusStats") -> "CorpusStats":
        return self.merge(other)


class Retention(BaseModel):
    """Доля часов источника, оставшаяся после очистки"""

    source: str
    before_ms: int
    after_ms: int
    retention: Optional[float]
    """`None` для нового источника (до очистки его не было)"""

    growth: bool = False
    """После очистки часов стало больше"""

    new_source: bool = False
