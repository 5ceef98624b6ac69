import bisect
import csv
from collections import Counter
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from asrforge.logger import logger
from asrforge.map_types.enums import Language, OpKind, Source, Stage
from asrforge.normalization import normalize
from asrforge.schemas.alignment import AlignedChunk, AlignOp, WordAlignment
from asrforge.schemas.segment import MAX_SEGMENT_MS, Segment, TimedWord

TokenPredicate = Callable[[str, str], bool]

ANCHOR_NGRAM = 4
"""Длина n-граммы-якоря в словах"""

DEFAULT_MAX_CELLS = 250_000
"""Окна больше этого числа ячеек делятся рекурсивно"""

SMALL_CELLS = 256
"""Окна до этого числа ячеек считаются без numpy"""

DEFAULT_MIN_QUALITY = 0.8
DEFAULT_MAX_UNMATCHED_RUN = 4

_Op = tuple[OpKind, Optional[int], Optional[int]]


class VariantEquivalence:
    """Равенство слов с учетом вариантов написания

    Слова равны, если совпадают без учета регистра или одно из них
    входит в список вариантов другого.
    """

    def __init__(self, lexicon: Mapping[str, Iterable[str]]):
        self._variants: dict[str, set[str]] = {}
        for head, variants in lexicon.items():
            head = head.casefold()
            for variant in variants:
                variant = variant.casefold()
                self._variants.setdefault(head, set()).add(variant)
                self._variants.setdefault(variant, set()).add(head)

    def equivalents(self, token: str) -> frozenset[str]:
        """Все формы (в нижнем регистре), равные `token`"""
        key = token.casefold()
        return frozenset({key, *self._variants.get(key, ())})

    def __call__(self, a: str, b: str) -> bool:
        a, b = a.casefold(), b.casefold()
        return a == b or b in self._variants.get(a, ())


def variant_equivalence(lexicon: Mapping[str, Iterable[str]]) -> VariantEquivalence:
    """Предикат равенства слов по словарю вариантов написания

    Args:
        lexicon: Слово -> его допустимые варианты

    Returns:
        Вызываемый объект `(a, b) -> bool`
    """
    return VariantEquivalence(lexicon)


def load_lexicon(path: Union[str, Path]) -> dict[str, frozenset[str]]:
    """Чтение словаря вариантов из TSV

    Первая колонка - заглавное слово, остальные - варианты.
    Строки, начинающиеся с `#`, пропускаются.
    """
    lexicon: dict[str, set[str]] = {}
    with open(path, encoding="utf-8", newline="") as file:
        for row in csv.reader(file, delimiter="\t"):
            cells = [cell.strip().lower() for cell in row if cell.strip()]
            if not cells or cells[0].startswith("#"):
                continue
            lexicon.setdefault(cells[0], set()).update(cells[1:])
    logger.debug("Lexicon %s: %s headwords", path, len(lexicon))
    return {head: frozenset(variants) for head, variants in lexicon.items()}


def tokenize_reference(text: str) -> list[str]:
    """Слова эталонного текста как есть, без чисто пунктуационных"""
    return [token for token in text.split() if normalize(token)]


class _Aligner:
    """Пословное выравнивание с рекурсией по якорям

    Строки таблицы динамического программирования считаются векторно;
    память линейна для окон больше `max_cells`.
    """

    def __init__(
        self,
        ref: Sequence[str],
        hyp: Sequence[str],
        match_pred: Optional[TokenPredicate],
        max_cells: int,
    ):
        self.ref = ref
        self.hyp = hyp
        self.max_cells = max_cells
        self.match_pred = match_pred

        key: Callable[[str], str] = str
        if isinstance(match_pred, VariantEquivalence):
            key = str.casefold
        self.ref_keys = [key(t) for t in ref]
        self.hyp_keys = [key(t) for t in hyp]

        vocab: dict[str, int] = {}
        self._hyp_id_list = [vocab.setdefault(k, len(vocab)) for k in self.hyp_keys]
        self.hyp_ids = np.array(self._hyp_id_list, dtype=np.int64)
        self._vocab = vocab
        self._match_ids: dict[str, np.ndarray] = {}
        self._match_sets: dict[str, frozenset[int]] = {}

    def _ids_for(self, ref_token: str, ref_key: str) -> np.ndarray:
        cached = self._match_ids.get(ref_token)
        if cached is not None:
            return cached
        pred = self.match_pred
        if pred is None:
            found = [self._vocab[ref_key]] if ref_key in self._vocab else []
        elif isinstance(pred, VariantEquivalence):
            found = [self._vocab[k] for k in pred.equivalents(ref_key) if k in self._vocab]
        else:
            found = [i for k, i in self._vocab.items() if pred(ref_token, k)]
        ids = np.array(sorted(found), dtype=np.int64)
        self._match_ids[ref_token] = ids
        return ids

    def _match_set(self, i: int) -> frozenset[int]:
        ref_token = self.ref[i]
        cached = self._match_sets.get(ref_token)
        if cached is None:
            ids = self._ids_for(ref_token, self.ref_keys[i])
            cached = self._match_sets[ref_token] = frozenset(ids.tolist())
        return cached

    def eq_row(self, i: int, j0: int, j1: int) -> np.ndarray:
        """Совпадения слова эталона `i` со словами гипотезы `[j0, j1)`"""
        ids = self._ids_for(self.ref[i], self.ref_keys[i])
        window = self.hyp_ids[j0:j1]
        if ids.size == 0:
            return np.zeros(j1 - j0, dtype=bool)
        if ids.size == 1:
            return window == ids[0]
        return np.isin(window, ids)

    @staticmethod
    def _next_row(prev: np.ndarray, eq: np.ndarray, ar: np.ndarray) -> np.ndarray:
        tmp = np.empty_like(prev)
        tmp[0] = prev[0] + 1
        np.minimum(prev[:-1] + ~eq, prev[1:] + 1, out=tmp[1:])
        return np.minimum.accumulate(tmp - ar) + ar

    def forward(self, i0: int, i1: int, j0: int, j1: int) -> np.ndarray:
        """Стоимости выравнивания `ref[i0:i1]` с `hyp[j0:j0+k]` для всех k"""
        ar = np.arange(j1 - j0 + 1, dtype=np.int64)
        row = ar.copy()
        for i in range(i0, i1):
            row = self._next_row(row, self.eq_row(i, j0, j1), ar)
        return row

    def backward(self, i0: int, i1: int, j0: int, j1: int) -> np.ndarray:
        """Стоимости выравнивания `ref[i0:i1]` с `hyp[j0+k:j1]` для всех k"""
        ar = np.arange(j1 - j0 + 1, dtype=np.int64)
        row = ar.copy()
        for i in range(i1 - 1, i0 - 1, -1):
            row = self._next_row(row, self.eq_row(i, j0, j1)[::-1], ar)
        return row[::-1]

    def _table(
        self, i0: int, i1: int, j0: int, j1: int
    ) -> tuple[np.ndarray, np.ndarray]:
        n, m = i1 - i0, j1 - j0
        ar = np.arange(m + 1, dtype=np.int64)
        table = np.empty((n + 1, m + 1), dtype=np.int64)
        eq = np.empty((n, m), dtype=bool)
        table[0] = ar
        for r in range(n):
            eq[r] = self.eq_row(i0 + r, j0, j1)
            table[r + 1] = self._next_row(table[r], eq[r], ar)
        return table, eq

    def _small_table(
        self, i0: int, i1: int, j0: int, j1: int
    ) -> tuple[list[list[int]], list[list[bool]]]:
        """Та же таблица на списках Python"""
        window = self._hyp_id_list[j0:j1]
        prev = list(range(j1 - j0 + 1))
        table = [prev]
        eq = []
        for i in range(i0, i1):
            ids = self._match_set(i)
            eq_row = [h in ids for h in window]
            row = [prev[0] + 1]
            for j, same in enumerate(eq_row):
                row.append(min(prev[j] + (not same), prev[j + 1] + 1, row[j] + 1))
            table.append(row)
            eq.append(eq_row)
            prev = row
        return table, eq

    def full(self, i0: int, i1: int, j0: int, j1: int) -> list[_Op]:
        """Полная таблица и обратный проход

        При равной стоимости: совпадение, замена, удаление, вставка.
        """
        n, m = i1 - i0, j1 - j0
        if n * m <= SMALL_CELLS:
            table, eq = self._small_table(i0, i1, j0, j1)
        else:
            table, eq = self._table(i0, i1, j0, j1)

        ops: list[_Op] = []
        i, j = n, m
        while i > 0 or j > 0:
            if i > 0 and j > 0:
                diag = table[i - 1][j - 1]
                if eq[i - 1][j - 1] and table[i][j] == diag:
                    ops.append((OpKind.MATCH, i0 + i - 1, j0 + j - 1))
                    i, j = i - 1, j - 1
                    continue
                if not eq[i - 1][j - 1] and table[i][j] == diag + 1:
                    ops.append((OpKind.SUBSTITUTE, i0 + i - 1, j0 + j - 1))
                    i, j = i - 1, j - 1
                    continue
            if i > 0 and (j == 0 or table[i][j] == table[i - 1][j] + 1):
                ops.append((OpKind.DELETE, i0 + i - 1, None))
                i -= 1
            else:
                ops.append((OpKind.INSERT, None, j0 + j - 1))
                j -= 1
        ops.reverse()
        return ops

    def anchors(self, i0: int, i1: int, j0: int, j1: int) -> list[tuple[int, int]]:
        """Начала n-грамм, встречающихся ровно один раз в обоих окнах"""
        ref_unique = _unique_ngrams(self.ref_keys, i0, i1)
        hyp_unique = _unique_ngrams(self.hyp_keys, j0, j1)
        found = []
        for gram, ri in ref_unique.items():
            hj = hyp_unique.get(gram)
            if hj is not None and self._is_match(ri, hj):
                found.append((ri, hj))
        found.sort()
        return found

    def _is_match(self, ri: int, hj: int) -> bool:
        return all(
            self.eq_row(ri + k, hj + k, hj + k + 1)[0] for k in range(ANCHOR_NGRAM)
        )

    def align(self, i0: int, i1: int, j0: int, j1: int, out: list[_Op]) -> None:
        """Точное выравнивание окна с делением пополам по строкам"""
        n, m = i1 - i0, j1 - j0
        if n == 0:
            out.extend((OpKind.INSERT, None, j) for j in range(j0, j1))
            return
        if m == 0:
            out.extend((OpKind.DELETE, i, None) for i in range(i0, i1))
            return
        if n == 1 or (n + 1) * (m + 1) <= self.max_cells:
            out.extend(self.full(i0, i1, j0, j1))
            return

        mid = i0 + n // 2
        split_row, anchor_col = mid, None
        near = [a for a in self.anchors(i0, i1, j0, j1) if abs(a[0] - mid) <= n // 4]
        if near:
            split_row, anchor_col = min(near, key=lambda a: (abs(a[0] - mid), a[0]))

        total = self.forward(i0, split_row, j0, j1) + self.backward(split_row, i1, j0, j1)
        best = int(total.min())
        if anchor_col is not None and total[anchor_col - j0] == best:
            split_col = anchor_col
        else:
            split_col = j0 + int(np.argmin(total))
        self.align(i0, split_row, j0, split_col, out)
        self.align(split_row, i1, split_col, j1, out)

    def align_chained(self, out: list[_Op]) -> None:
        """Быстрый режим: цепочка якорей принимается без проверки оптимальности"""
        chain = _longest_chain(self.anchors(0, len(self.ref), 0, len(self.hyp)))
        logger.debug("Anchor chain of %s n-grams", len(chain))
        ri, hj = 0, 0
        for a_ref, a_hyp in chain:
            self.align(ri, a_ref, hj, a_hyp, out)
            out.extend(
                (OpKind.MATCH, a_ref + k, a_hyp + k) for k in range(ANCHOR_NGRAM)
            )
            ri, hj = a_ref + ANCHOR_NGRAM, a_hyp + ANCHOR_NGRAM
        self.align(ri, len(self.ref), hj, len(self.hyp), out)


def _unique_ngrams(keys: Sequence[str], start: int, end: int) -> dict[tuple, int]:
    counts: Counter = Counter()
    first: dict[tuple, int] = {}
    for i in range(start, end - ANCHOR_NGRAM + 1):
        gram = tuple(keys[i : i + ANCHOR_NGRAM])
        counts[gram] += 1
        first.setdefault(gram, i)
    return {gram: first[gram] for gram, c in counts.items() if c == 1}


def _longest_chain(anchors: list[tuple[int, int]]) -> list[tuple[int, int]]:
    """Наибольшая возрастающая по обеим последовательностям цепочка якорей
    без перекрытий"""
    tails: list[int] = []
    tail_idx: list[int] = []
    parent = [-1] * len(anchors)
    for k, (_, hj) in enumerate(anchors):
        pos = bisect.bisect_left(tails, hj)
        if pos > 0:
            parent[k] = tail_idx[pos - 1]
        if pos == len(tails):
            tails.append(hj)
            tail_idx.append(k)
        else:
            tails[pos] = hj
            tail_idx[pos] = k
    chain = []
    k = tail_idx[-1] if tail_idx else -1
    while k >= 0:
        chain.append(anchors[k])
        k = parent[k]
    chain.reverse()

    result: list[tuple[int, int]] = []
    for ri, hj in chain:
        if result and (
            ri < result[-1][0] + ANCHOR_NGRAM or hj < result[-1][1] + ANCHOR_NGRAM
        ):
            continue
        result.append((ri, hj))
    return result


def edit_ops(
    ref_tokens: Sequence[str],
    hyp_tokens: Sequence[str],
    match_pred: Optional[TokenPredicate] = None,
    *,
    max_cells: int = DEFAULT_MAX_CELLS,
    exact: bool = True,
) -> list[tuple[OpKind, Optional[int], Optional[int]]]:
    """Операции `align_words` кортежами (вид, индекс эталона, индекс гипотезы)"""
    aligner = _Aligner(ref_tokens, hyp_tokens, match_pred, max_cells)
    ops: list[_Op] = []
    if exact:
        aligner.align(0, len(ref_tokens), 0, len(hyp_tokens), ops)
    else:
        aligner.align_chained(ops)
    return ops


def align_words(
    ref_tokens: Sequence[str],
    hyp_tokens: Sequence[str],
    match_pred: Optional[TokenPredicate] = None,
    *,
    max_cells: int = DEFAULT_MAX_CELLS,
    exact: bool = True,
) -> WordAlignment:
    """Пословное выравнивание с минимальной стоимостью правок

    Замена, удаление и вставка стоят 1, совпадение 0. Небольшие задачи
    решаются полной таблицей, большие делятся по строкам: в точном
    режиме точка деления (предпочтительно уникальная общая 4-грамма)
    всегда лежит на оптимальном пути, поэтому стоимость совпадает с
    полной таблицей. В быстром режиме (`exact=False`) цепочка общих
    4-грамм принимается без проверки.

    Args:
        ref_tokens: Слова эталона
        hyp_tokens: Слова гипотезы
        match_pred: Предикат равенства слов. По умолчанию точное совпадение
        max_cells: Наибольший размер окна для полной таблицы
        exact: Гарантировать минимальную стоимость

    Returns:
        Операции в порядке возрастания индексов
    """
    ops = edit_ops(
        ref_tokens, hyp_tokens, match_pred, max_cells=max_cells, exact=exact
    )
    return WordAlignment(
        ops=tuple(AlignOp(kind=k, ref_idx=r, hyp_idx=h) for k, r, h in ops)
    )


def extract_chunks(
    alignment: WordAlignment,
    hyp_words: Sequence[TimedWord],
    ref_tokens: Sequence[str],
    target_dur_ms: int = MAX_SEGMENT_MS,
    min_anchor_quality: float = DEFAULT_MIN_QUALITY,
    max_unmatched_run: int = DEFAULT_MAX_UNMATCHED_RUN,
) -> list[AlignedChunk]:
    """Нарезка выровненного текста на фрагменты с метками времени

    Поток операций разрывается там, где подряд идет больше
    `max_unmatched_run` несовпадений. Внутри участка фрагмент жадно
    растягивается от совпадения до самого дальнего совпадения, пока
    длительность по меткам гипотезы не превышает `target_dur_ms`.

    Args:
        alignment: Выравнивание `ref_tokens` и слов `hyp_words`
        hyp_words: Слова гипотезы с метками времени
        ref_tokens: Слова эталона, текст фрагментов берется из них
        target_dur_ms: Наибольшая длительность фрагмента
        min_anchor_quality: Фрагменты с меньшей долей совпадений отбрасываются
        max_unmatched_run: Наибольшее число несовпадений подряд внутри фрагмента

    Returns:
        Непересекающиеся фрагменты по порядку; пустой список, если совпадений нет
    """
    ops = alignment.ops
    match_pos = [k for k, op in enumerate(ops) if op.kind is OpKind.MATCH]
    if not match_pos:
        logger.debug("No matches, document is unalignable")
        return []

    runs: list[list[int]] = [[match_pos[0]]]
    for pos in match_pos[1:]:
        if pos - runs[-1][-1] - 1 > max_unmatched_run:
            runs.append([pos])
        else:
            runs[-1].append(pos)

    chunks: list[AlignedChunk] = []
    for run in runs:
        s = 0
        while s < len(run):
            first = ops[run[s]]
            start_ms = hyp_words[first.hyp_idx].start_ms
            e = s
            while (
                e + 1 < len(run)
                and hyp_words[ops[run[e + 1]].hyp_idx].end_ms - start_ms
                <= target_dur_ms
            ):
                e += 1
            last = ops[run[e]]
            end_ms = hyp_words[last.hyp_idx].end_ms
            quality = (e - s + 1) / (run[e] - run[s] + 1)
            s = e + 1
            if end_ms <= start_ms or end_ms - start_ms > target_dur_ms:
                continue
            if quality < min_anchor_quality:
                logger.debug("Chunk at ref %s discarded, quality %s", first.ref_idx, quality)
                continue
            span = (first.ref_idx, last.ref_idx + 1)
            chunks.append(
                AlignedChunk(
                    ref_word_span=span,
                    start_ms=start_ms,
                    end_ms=end_ms,
                    text=" ".join(ref_tokens[span[0] : span[1]]),
                    anchor_quality=quality,
                )
            )
    return chunks


def align_document(
    ref_text: str,
    hyp_words: Sequence[TimedWord],
    *,
    lexicon: Optional[Mapping[str, Iterable[str]]] = None,
    target_dur_ms: int = MAX_SEGMENT_MS,
    min_anchor_quality: float = DEFAULT_MIN_QUALITY,
    max_unmatched_run: int = DEFAULT_MAX_UNMATCHED_RUN,
    exact: bool = True,
    max_cells: int = DEFAULT_MAX_CELLS,
) -> list[AlignedChunk]:
    """Выравнивание длинного текста (книги, стенограммы) по гипотезе распознавания

    Слова сравниваются после нормализации; текст фрагментов берется
    из эталона как есть.
    """
    ref_tokens = tokenize_reference(ref_text)
    ref_keys = [normalize(t) for t in ref_tokens]
    hyp_keys = [normalize(w.word) for w in hyp_words]
    pred = variant_equivalence(lexicon) if lexicon else None
    alignment = align_words(
        ref_keys, hyp_keys, pred, max_cells=max_cells, exact=exact
    )
    logger.debug(
        "Aligned %s reference words with %s hypothesis words, cost %s",
        len(ref_keys),
        len(hyp_keys),
        alignment.cost,
    )
    return extract_chunks(
        alignment,
        hyp_words,
        ref_tokens,
        target_dur_ms,
        min_anchor_quality,
        max_unmatched_run,
    )


def chunks_to_segments(
    chunks: Iterable[AlignedChunk],
    *,
    audio_ref: str,
    id_prefix: str,
    source: Source = Source.AUDIO_BOOKS,
    language: Language = Language.BOKMAAL,
    stage: Stage = Stage.STAGE1,
) -> list[Segment]:
    """Фрагменты в примеры манифеста; доля совпадений сохраняется в `anchor_quality`"""
    return [
        Segment(
            id=f"{id_prefix}-{n:04d}",
            audio_ref=audio_ref,
            start_ms=chunk.start_ms,
            end_ms=chunk.end_ms,
            text=chunk.text,
            source=source,
            language=language,
            stage=stage,
            anchor_quality=chunk.anchor_quality,
        )
        for n, chunk in enumerate(chunks)
    ]


def read_timed_words(path: Union[str, Path]) -> list[TimedWord]:
    """Слова гипотезы с метками времени: JSONL, по слову в строке"""
    with open(path, encoding="utf-8") as file:
        return [TimedWord.model_validate_json(line) for line in file if line.strip()]
