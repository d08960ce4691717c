"""Aspect sentiment triplet extraction with contrastive pre-training,
templated generation, and multi-task fine-tuning."""

__version__ = "0.1.0"

from .corpus import (
    AnnotatedSentence,
    MalformedLine,
    PromptExample,
    Triplet,
    build_bio_labels,
    decode_bio,
    derive_prompt_examples,
    derive_sentence_level_examples,
    load_split,
    parse_aste_v2_line,
    triplet_count_label,
)
from .templates import (
    LinearizedTarget,
    SentimentTuple,
    TaskKind,
    build_prompt,
    linearize,
    parse,
    special_tokens,
)

__all__ = [
    "AnnotatedSentence",
    "LinearizedTarget",
    "MalformedLine",
    "PromptExample",
    "SentimentTuple",
    "TaskKind",
    "Triplet",
    "build_bio_labels",
    "build_prompt",
    "decode_bio",
    "derive_prompt_examples",
    "derive_sentence_level_examples",
    "linearize",
    "load_split",
    "parse",
    "parse_aste_v2_line",
    "special_tokens",
    "triplet_count_label",
]
