import re
import unicodedata
from functools import lru_cache
from typing import Optional

from asrforge.schemas.evaluation import NormalizationConfig

EXTRA_PUNCTUATION = frozenset("«»")
"""Символы, которые считаются пунктуацией помимо категорий Unicode P*"""

APOSTROPHES = frozenset("'’")

_DEFAULT = NormalizationConfig()


def is_punctuation(ch: str) -> bool:
    return ch in EXTRA_PUNCTUATION or unicodedata.category(ch).startswith("P")


def strip_punctuation(text: str) -> str:
    """Замена пунктуации пробелом

    Апостроф внутри слова (буквы или цифры с обеих сторон) сохраняется.
    """
    chars = []
    last = len(text) - 1
    for i, ch in enumerate(text):
        if not is_punctuation(ch):
            chars.append(ch)
        elif (
            ch in APOSTROPHES
            and 0 < i < last
            and text[i - 1].isalnum()
            and text[i + 1].isalnum()
        ):
            chars.append(ch)
        else:
            chars.append(" ")
    return "".join(chars)


@lru_cache(maxsize=64)
def _compiled(pattern: str) -> re.Pattern:
    return re.compile(pattern)


def normalize(text: str, cfg: Optional[NormalizationConfig] = None) -> str:
    """Легкая нормализация текста перед сравнением

    Приведение к нижнему регистру, удаление пунктуации, схлопывание
    пробелов, затем дополнительные замены из `cfg.extra_mappings`
    по порядку. Числа не раскрываются. Без дополнительных замен
    повторная нормализация ничего не меняет.

    Args:
        text: Исходный текст
        cfg: Настройки. По умолчанию включены все три шага

    Returns:
        Нормализованный текст
    """
    cfg = cfg or _DEFAULT
    if cfg.lowercase:
        text = text.casefold()
    if cfg.strip_punctuation:
        text = strip_punctuation(text)
    if cfg.collapse_whitespace:
        text = " ".join(text.split())
    for pattern, replacement in cfg.extra_mappings:
        text = _compiled(pattern).sub(replacement, text)
    return text


def tokenize(text: str, cfg: Optional[NormalizationConfig] = None) -> list[str]:
    """Слова нормализованного текста"""
    return normalize(text, cfg).split()
