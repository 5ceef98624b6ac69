import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

from pydantic import ValidationError

from asrforge.errors import InvalidConfig, SubtitleParseError
from asrforge.logger import logger
from asrforge.map_types.enums import (
    CueFlagKind,
    Language,
    Source,
    Stage,
    SubtitleFormat,
)
from asrforge.schemas.segment import MAX_SEGMENT_MS, Segment
from asrforge.schemas.subtitles import CueFlag, NotationRules, SubtitleCue

try:
    import tomllib
except ImportError:  # python < 3.11
    import tomli as tomllib  # type: ignore[no-redef]

TIMING_LINE = re.compile(r"^\s*(?P<start>\S+)\s+-->\s+(?P<end>\S+)(?:\s+.*)?$")
TIMESTAMP = re.compile(
    r"^(?:(?P<h>\d+):)?(?P<m>\d{1,2}):(?P<s>\d{1,2})[,.](?P<ms>\d{1,3})$"
)
DEFAULT_MIN_GAP_MS = 1000
_VTT_SKIP_BLOCKS = ("NOTE", "STYLE", "REGION")
_MAX_CLEAN_PASSES = 8


def load_rules(path: Union[str, Path]) -> NotationRules:
    """Чтение правил разметки вещателя из TOML"""
    try:
        with open(path, "rb") as file:
            data = tomllib.load(file)
        return NotationRules.model_validate(data)
    except (OSError, tomllib.TOMLDecodeError, ValidationError) as e:
        raise InvalidConfig(path, str(e)) from e


def parse_timestamp(value: str, line_no: int) -> int:
    """Перевод метки `ЧЧ:ММ:СС,ммм` (или `ММ:СС.ммм`) в миллисекунды"""
    match = TIMESTAMP.match(value)
    if match is None:
        raise SubtitleParseError(line_no, f"malformed timestamp {value!r}")
    hours = int(match["h"] or 0)
    minutes = int(match["m"])
    seconds = int(match["s"])
    if minutes >= 60 or seconds >= 60:
        raise SubtitleParseError(line_no, f"malformed timestamp {value!r}")
    # "5" после запятой - это 500 мс, а не 5
    millis = int(match["ms"].ljust(3, "0"))
    return ((hours * 60 + minutes) * 60 + seconds) * 1000 + millis


def _iter_blocks(lines: list[str]):
    """Блоки непустых строк с номером первой строки (с единицы)"""
    block: list[str] = []
    first = 0
    for i, line in enumerate(lines, start=1):
        if line.strip():
            if not block:
                first = i
            block.append(line)
        elif block:
            yield first, block
            block = []
    if block:
        yield first, block


def parse_subtitles(
    raw: Union[bytes, str],
    format: SubtitleFormat,
    encoding: str = "utf-8",
) -> list[SubtitleCue]:
    """Разбор файла субтитров SRT или WebVTT

    Метки времени переводятся в миллисекунды без потерь, настройки
    позиционирования отбрасываются, текст реплик сохраняется как есть.
    Перекрывающиеся реплики допустимы и получают пометку `OVERLAP`.

    Args:
        raw: Содержимое файла
        format: Формат файла
        encoding: Кодировка, если передан `bytes`. По умолчанию UTF-8

    Raises:
        SubtitleParseError: Некорректная метка времени или блок без меток

    Returns:
        Реплики, отсортированные по времени начала
    """
    text = raw.decode(encoding) if isinstance(raw, bytes) else raw
    text = text.lstrip("﻿")
    lines = text.splitlines()
    cues: list[SubtitleCue] = []
    blocks = list(_iter_blocks(lines))
    if format is SubtitleFormat.VTT and blocks:
        first_no, header = blocks[0]
        if not header[0].startswith("WEBVTT"):
            raise SubtitleParseError(first_no, "missing WEBVTT header")
        blocks = blocks[1:]

    for first_no, block in blocks:
        if format is SubtitleFormat.VTT and block[0].startswith(_VTT_SKIP_BLOCKS):
            continue
        timing_pos = next((i for i, line in enumerate(block) if "-->" in line), None)
        if timing_pos is None:
            raise SubtitleParseError(first_no, "cue block has no timing line")
        line_no = first_no + timing_pos
        match = TIMING_LINE.match(block[timing_pos])
        if match is None:
            raise SubtitleParseError(line_no, f"malformed timing line {block[timing_pos]!r}")
        start_ms = parse_timestamp(match["start"], line_no)
        end_ms = parse_timestamp(match["end"], line_no)
        if end_ms <= start_ms:
            raise SubtitleParseError(line_no, "cue ends before it starts")
        index = len(cues) + 1
        if timing_pos > 0 and block[0].strip().isdigit():
            index = int(block[0].strip())
        cues.append(
            SubtitleCue(
                index=index,
                start_ms=start_ms,
                end_ms=end_ms,
                lines=tuple(line.rstrip("\r\n") for line in block[timing_pos + 1 :]),
            )
        )

    cues.sort(key=lambda c: c.start_ms)
    flagged = []
    latest_end = None
    for cue in cues:
        if latest_end is not None and cue.start_ms < latest_end:
            logger.debug("Cue %s overlaps the previous one", cue.index)
            cue = cue.model_copy(
                update={"flags": cue.flags | {CueFlag(kind=CueFlagKind.OVERLAP)}}
            )
        latest_end = cue.end_ms if latest_end is None else max(latest_end, cue.end_ms)
        flagged.append(cue)
    return flagged


@dataclass(frozen=True)
class _CompiledRules:
    rules: NotationRules
    credits: tuple[re.Pattern, ...]
    language: re.Pattern
    live: re.Pattern
    name: re.Pattern
    nonspeech: re.Pattern
    markup: re.Pattern

    @classmethod
    def build(cls, rules: NotationRules) -> "_CompiledRules":
        return cls(
            rules=rules,
            credits=tuple(re.compile(p, re.IGNORECASE) for p in rules.credit_patterns),
            language=re.compile(rules.language_tag_pattern, re.IGNORECASE),
            live=re.compile(rules.live_texting_marker, re.IGNORECASE),
            name=re.compile(rules.speaker_name_pattern),
            nonspeech=re.compile(rules.nonspeech_pattern, re.IGNORECASE),
            markup=re.compile(rules.markup_pattern),
        )


def _collapse(line: str) -> str:
    return " ".join(line.split())


def _strip_speaker_prefix(line: str, prefixes: Sequence[str]) -> tuple[bool, str]:
    """Снятие тире одновременно говорящих; `-20` (число) не трогаем"""
    found = False
    changed = True
    while changed:
        changed = False
        for prefix in prefixes:
            rest = line[len(prefix) :].lstrip()
            if line.startswith(prefix) and not rest[:1].isdigit():
                line, found, changed = rest, True, True
    return found, line


def _strip_trailing(line: str, markers: Sequence[str]) -> tuple[bool, str]:
    found = False
    changed = True
    while changed:
        changed = False
        for marker in markers:
            if line.endswith(marker):
                line, found, changed = line[: -len(marker)].rstrip(), True, True
    return found, line


def _strip_leading(line: str, markers: Sequence[str]) -> tuple[bool, str]:
    found = False
    changed = True
    while changed:
        changed = False
        for marker in markers:
            if line.startswith(marker):
                line, found, changed = line[len(marker) :].lstrip(), True, True
    return found, line


def _split_turns(
    lines: list[str], prefixes: Sequence[str], flags: set[CueFlag]
) -> list[str]:
    """Одна строка на реплику каждого из одновременно говорящих"""
    stripped = [_strip_speaker_prefix(line, prefixes) for line in lines]
    if not any(found for found, _ in stripped):
        return lines
    flags.add(CueFlag(kind=CueFlagKind.SPEAKER_CHANGE))
    turns: list[str] = []
    for found, rest in stripped:
        if not rest:
            continue
        if found or not turns:
            turns.append(rest)
        else:
            turns[-1] = f"{turns[-1]} {rest}"
    return turns


def _strip_names(line: str, pattern: re.Pattern, flags: set[CueFlag]) -> str:
    while (match := pattern.match(line)) is not None and match.end() > 0:
        flags.add(CueFlag(kind=CueFlagKind.SPEAKER_NAME, value=match["name"].strip()))
        line = line[match.end() :].lstrip()
    return line


def _clean_once(
    cues: Sequence[SubtitleCue], compiled: _CompiledRules
) -> list[SubtitleCue]:
    rules = compiled.rules
    markers = rules.continuation_markers
    out: list[SubtitleCue] = []
    prev_kept = False
    for cue in cues:
        flags = set(cue.flags)
        lines = []
        for line in cue.lines:
            line = _collapse(compiled.markup.sub(" ", line))
            for match in compiled.language.finditer(line):
                flags.add(
                    CueFlag(kind=CueFlagKind.LANGUAGE_TAG, value=match["lang"].lower())
                )
            line = compiled.language.sub(" ", line)
            if compiled.live.search(line):
                flags.add(CueFlag(kind=CueFlagKind.LIVE_TEXTING))
                line = compiled.live.sub(" ", line)
            line = _collapse(compiled.nonspeech.sub(" ", line))
            if line:
                lines.append(line)

        lines = _split_turns(lines, rules.speaker_prefixes, flags)
        lines = [_strip_names(line, compiled.name, flags) for line in lines]
        lines = [line for line in lines if line]

        continues_previous = False
        if lines:
            continues_previous, lines[0] = _strip_leading(lines[0], markers.leading)
        if lines:
            found, lines[-1] = _strip_trailing(lines[-1], markers.trailing)
            if found:
                flags.add(CueFlag(kind=CueFlagKind.CONTINUATION))
        lines = [line for line in lines if line]

        drop_reason: Optional[str] = None
        if not lines:
            drop_reason = "no spoken text"
        elif any(p.search(" ".join(lines)) for p in compiled.credits):
            drop_reason = "credit"
        elif rules.drop_live_texting and CueFlag(kind=CueFlagKind.LIVE_TEXTING) in flags:
            drop_reason = "live texting"
        if drop_reason is not None:
            logger.debug("Cue %s dropped: %s", cue.index, drop_reason)
            prev_kept = False
            continue

        if continues_previous and prev_kept:
            previous = out[-1]
            out[-1] = previous.model_copy(
                update={
                    "flags": previous.flags
                    | {CueFlag(kind=CueFlagKind.CONTINUATION)}
                }
            )
        out.append(
            cue.model_copy(update={"lines": tuple(lines), "flags": frozenset(flags)})
        )
        prev_kept = True
    return out


def clean_cues(
    cues: Sequence[SubtitleCue], rules: Optional[NotationRules] = None
) -> list[SubtitleCue]:
    """Очистка реплик от служебной разметки вещателя

    Удаляет титры и реплики из одной пометки языка, снимает тире
    одновременно говорящих (строка = реплика одного диктора), имена
    дикторов и пометки продолжения, записывая их во флаги. Незнакомая
    разметка остается как есть. Повторная очистка ничего не меняет.

    Args:
        cues: Разобранные реплики
        rules: Правила разметки. По умолчанию `NotationRules()`

    Returns:
        Реплики, содержащие только произнесенный текст
    """
    compiled = _CompiledRules.build(rules or NotationRules())
    result = list(cues)
    for _ in range(_MAX_CLEAN_PASSES):
        cleaned = _clean_once(result, compiled)
        if cleaned == result:
            return cleaned
        result = cleaned
    return result


def _continuation_carry(
    current: list[SubtitleCue], cue: SubtitleCue, max_duration_ms: int
) -> list[SubtitleCue]:
    """Хвост текущего сегмента, который нужно перенести вместе с `cue`

    Пара реплик с пометкой продолжения не разрывается, если помещается
    в ограничение длины.
    """
    chain = 0
    for prev in reversed(current):
        if not prev.has(CueFlagKind.CONTINUATION):
            break
        chain += 1
    chain = min(chain, len(current) - 1)
    for k in range(chain, 0, -1):
        tail = current[-k:]
        end = max(cue.end_ms, *(c.end_ms for c in tail))
        if end - tail[0].start_ms <= max_duration_ms:
            return tail
    return []


def merge_segments(
    cues: Sequence[SubtitleCue],
    max_duration_ms: int = MAX_SEGMENT_MS,
    *,
    audio_ref: str = "",
    id_prefix: str = "seg",
    source: Source = Source.NRK_SUBTITLES,
    language: Language = Language.BOKMAAL,
    stage: Stage = Stage.STAGE1,
) -> list[Segment]:
    """Жадная склейка очищенных реплик в сегменты

    Реплика присоединяется к текущему сегменту, если общий отрезок
    (от первого начала до последнего конца) не длиннее `max_duration_ms`.
    Реплика длиннее ограничения выдается отдельным сегментом с пометкой
    `oversize`.

    Args:
        cues: Очищенные реплики, отсортированные по времени
        max_duration_ms: Ограничение длины сегмента. По умолчанию 30 с
        audio_ref: Ссылка на аудио записи
        id_prefix: Префикс идентификаторов сегментов

    Returns:
        Сегменты в порядке следования реплик
    """
    segments: list[Segment] = []

    def flush(group: list[SubtitleCue], oversize: bool = False) -> None:
        segments.append(
            Segment(
                id=f"{id_prefix}-{len(segments):04d}",
                audio_ref=audio_ref,
                start_ms=group[0].start_ms,
                end_ms=max(c.end_ms for c in group),
                text=" ".join(c.text for c in group if c.text),
                source=source,
                language=language,
                stage=stage,
                oversize=oversize,
            )
        )

    current: list[SubtitleCue] = []
    for cue in cues:
        if cue.duration_ms > max_duration_ms:
            logger.warning(
                "Cue %s is longer than %s ms, emitted as oversize",
                cue.index,
                max_duration_ms,
            )
            if current:
                flush(current)
                current = []
            flush([cue], oversize=True)
            continue
        if not current:
            current = [cue]
            continue
        end = max(cue.end_ms, *(c.end_ms for c in current))
        if end - current[0].start_ms <= max_duration_ms:
            current.append(cue)
            continue
        carry = _continuation_carry(current, cue, max_duration_ms)
        flush(current[: len(current) - len(carry)])
        current = [*carry, cue]
    if current:
        flush(current)
    return segments


def extract_no_speech(
    cues: Sequence[SubtitleCue],
    recording_duration_ms: int,
    min_gap_ms: int = DEFAULT_MIN_GAP_MS,
    *,
    max_duration_ms: int = MAX_SEGMENT_MS,
    audio_ref: str = "",
    id_prefix: str = "nospeech",
    language: Language = Language.UNKNOWN,
    stage: Stage = Stage.STAGE1,
) -> list[Segment]:
    """Фрагменты записи без субтитров

    Промежутки между репликами (а также до первой и после последней)
    длиной не меньше `min_gap_ms` режутся на куски не длиннее
    `max_duration_ms`; остаток короче `min_gap_ms` отбрасывается.

    Returns:
        Сегменты с пустым текстом и источником `NRK_NO_CAPTION`
    """
    gaps: list[tuple[int, int]] = []
    cursor = 0
    for cue in sorted(cues, key=lambda c: c.start_ms):
        if cue.start_ms - cursor >= min_gap_ms:
            gaps.append((cursor, cue.start_ms))
        cursor = max(cursor, cue.end_ms)
    if recording_duration_ms < cursor:
        logger.warning(
            "Recording duration %s ms is shorter than the last cue end %s ms",
            recording_duration_ms,
            cursor,
        )
    elif recording_duration_ms - cursor >= min_gap_ms:
        gaps.append((cursor, recording_duration_ms))

    segments: list[Segment] = []
    for gap_start, gap_end in gaps:
        pos = gap_start
        while pos < gap_end:
            piece_end = min(pos + max_duration_ms, gap_end)
            if piece_end - pos >= min_gap_ms:
                segments.append(
                    Segment(
                        id=f"{id_prefix}-{len(segments):04d}",
                        audio_ref=audio_ref,
                        start_ms=pos,
                        end_ms=piece_end,
                        text="",
                        source=Source.NRK_NO_CAPTION,
                        language=language,
                        stage=stage,
                    )
                )
            pos = piece_end
    return segments


def ingest_document(
    raw: Union[bytes, str],
    format: SubtitleFormat,
    *,
    doc_id: str,
    audio_ref: str,
    rules: Optional[NotationRules] = None,
    max_duration_ms: int = MAX_SEGMENT_MS,
    min_gap_ms: int = DEFAULT_MIN_GAP_MS,
    recording_duration_ms: Optional[int] = None,
    no_speech: bool = True,
    source: Source = Source.NRK_SUBTITLES,
    language: Language = Language.BOKMAAL,
    encoding: str = "utf-8",
) -> list[Segment]:
    """Полная обработка одного файла субтитров

    Без длительности записи промежуток после последней реплики неизвестен,
    и фрагменты без речи ищутся только между репликами.
    """
    parsed = parse_subtitles(raw, format, encoding=encoding)
    cleaned = clean_cues(parsed, rules)
    segments = merge_segments(
        cleaned,
        max_duration_ms,
        audio_ref=audio_ref,
        id_prefix=doc_id,
        source=source,
        language=language,
    )
    if no_speech and parsed:
        duration = recording_duration_ms
        if duration is None:
            duration = max(c.end_ms for c in parsed)
        segments += extract_no_speech(
            parsed,
            duration,
            min_gap_ms,
            max_duration_ms=max_duration_ms,
            audio_ref=audio_ref,
            id_prefix=f"{doc_id}-ns",
            language=language,
        )
    logger.debug("Document %s: %s cues -> %s segments", doc_id, len(parsed), len(segments))
    return segments
