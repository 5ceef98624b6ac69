from .segment import NerAnnotation, Prediction, Segment, TimedWord
from .subtitles import CueFlag, NotationRules, SubtitleCue

__all__ = [
    "CueFlag",
    "NerAnnotation",
    "NotationRules",
    "Prediction",
    "Segment",
    "SubtitleCue",
    "TimedWord",
]
