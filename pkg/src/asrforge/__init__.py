from asrforge import errors
from asrforge.alignment import align_words, extract_chunks, variant_equivalence
from asrforge.evaluation import comparison_report, evaluate_manifest, normalize, wer
from asrforge.filters import apply_filters, similarity
from asrforge.map_types.enums import Language, ModelSize, Profile, Source, Stage
from asrforge.pipeline import PipelineRunner, load_pipeline_spec, run_pipeline
from asrforge.schemas import Prediction, Segment
from asrforge.stats import compute_stats, stage_diff
from asrforge.subtitles import clean_cues, merge_segments, parse_subtitles
from asrforge.train_config import emit_config, validate_config

__all__ = [
    "Language",
    "ModelSize",
    "PipelineRunner",
    "Prediction",
    "Profile",
    "Segment",
    "Source",
    "Stage",
    "align_words",
    "apply_filters",
    "clean_cues",
    "comparison_report",
    "compute_stats",
    "emit_config",
    "errors",
    "evaluate_manifest",
    "extract_chunks",
    "load_pipeline_spec",
    "merge_segments",
    "normalize",
    "parse_subtitles",
    "run_pipeline",
    "similarity",
    "stage_diff",
    "validate_config",
    "variant_equivalence",
    "wer",
]
__version__ = "0.1.0"
SCHEMA_VERSION = "1"
