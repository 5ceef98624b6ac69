from typing import Optional

from pydantic import computed_field

from asrforge.map_types.enums import OpKind
from asrforge.schemas._common import FrozenModel


class AlignOp(FrozenModel):
    kind: OpKind
    ref_idx: Optional[int] = None
    hyp_idx: Optional[int] = None


class WordAlignment(FrozenModel):
    """Пословное выравнивание эталона и гипотезы"""

    ops: tuple[AlignOp, ...] = ()

    def count(self, kind: OpKind) -> int:
        return sum(1 for op in self.ops if op.kind is kind)

    @property
    def matches(self) -> int:
        return self.count(OpKind.MATCH)

    @property
    def substitutions(self) -> int:
        return self.count(OpKind.SUBSTITUTE)

    @property
    def deletions(self) -> int:
        return self.count(OpKind.DELETE)

    @property
    def insertions(self) -> int:
        return self.count(OpKind.INSERT)

    @property
    def cost(self) -> int:
        """Число правок: замены, удаления и вставки"""
        return len(self.ops) - self.matches


class AlignedChunk(FrozenModel):
    """Фрагмент, на границах которого эталон и гипотеза совпадают"""

    ref_word_span: tuple[int, int]
    """Полуинтервал индексов слов эталона"""

    start_ms: int
    end_ms: int
    text: str
    """Текст эталона (не гипотезы) на этом отрезке"""

    anchor_quality: float
    """Доля совпадений среди операций отрезка"""

    @computed_field  # type: ignore[prop-decorator]
    @property
    def duration_ms(self) -> int:
        return self.end_ms - self.start_ms
