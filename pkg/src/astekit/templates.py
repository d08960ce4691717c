"""Placeholder-template linearization of sentiment tuples and the inverse parser.

Targets look like
    <aspect> sushi <opinion> tasty <sentiment> POS [SSEP] <aspect> ambience ...
with the placeholder schema depending on the task variant.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

SSEP = "[SSEP]"
MASK = "[MASK]"

ASPECT_TOK = "<aspect>"
OPINION_TOK = "<opinion>"
SENTIMENT_TOK = "<sentiment>"
CATEGORY_TOK = "<category>"

SENTIMENTS = ("POS", "NEU", "NEG")

# Any of these appearing inside a field value invalidates the segment.
PLACEHOLDER_TOKENS = frozenset({ASPECT_TOK, OPINION_TOK, SENTIMENT_TOK, CATEGORY_TOK})


class TaskKind(str, Enum):
    ASTE = "ASTE"
    ACOS = "ACOS"
    TASD = "TASD"
    AESC = "AESC"

    @property
    def schema(self) -> tuple[str, ...]:
        return _SCHEMAS[self]


_SCHEMAS = {
    TaskKind.ASTE: (ASPECT_TOK, OPINION_TOK, SENTIMENT_TOK),
    TaskKind.ACOS: (CATEGORY_TOK, ASPECT_TOK, OPINION_TOK, SENTIMENT_TOK),
    TaskKind.TASD: (CATEGORY_TOK, ASPECT_TOK, SENTIMENT_TOK),
    TaskKind.AESC: (ASPECT_TOK, SENTIMENT_TOK),
}

_FIELD_FOR_TOKEN = {
    ASPECT_TOK: "aspect",
    OPINION_TOK: "opinion",
    SENTIMENT_TOK: "sentiment",
    CATEGORY_TOK: "category",
}


class MissingField(ValueError):
    """A tuple lacks a field its task schema requires."""


class EmptyAspect(ValueError):
    """build_prompt called with an empty aspect string."""


@dataclass(frozen=True)
class SentimentTuple:
    """One extracted/gold tuple; unused fields stay None for the simpler tasks."""

    aspect: str
    sentiment: str
    opinion: Optional[str] = None
    category: Optional[str] = None

    def field(self, placeholder: str) -> Optional[str]:
        return getattr(self, _FIELD_FOR_TOKEN[placeholder])


@dataclass(frozen=True)
class LinearizedTarget:
    text: str
    task: TaskKind


@dataclass
class ParseDiagnostics:
    total_segments: int = 0
    valid_segments: int = 0
    malformed_segments: int = 0
    unknown_sentiment: int = 0
    duplicates_removed: int = 0


def linearize(tuples: Sequence[SentimentTuple], task: TaskKind) -> LinearizedTarget:
    """Render tuples into the placeholder template, preserving input order."""
    if not tuples:
        raise ValueError("cannot linearize an empty tuple sequence")
    parts = []
    for t in tuples:
        chunk = []
        for placeholder in task.schema:
            value = t.field(placeholder)
            if value is None or value == "":
                raise MissingField(
                    f"{task.value} tuple is missing {_FIELD_FOR_TOKEN[placeholder]!r}: {t}"
                )
            chunk.append(placeholder)
            chunk.append(value)
        parts.append(" ".join(chunk))
    return LinearizedTarget(text=f" {SSEP} ".join(parts), task=task)


def parse(text: str, task: TaskKind) -> tuple[list[SentimentTuple], ParseDiagnostics]:
    """Parse arbitrary model output back into tuples.

    Never raises on content: malformed segments are dropped and counted,
    duplicates removed keeping the first occurrence.
    """
    diags = ParseDiagnostics()
    results: list[SentimentTuple] = []
    seen: set[SentimentTuple] = set()
    segments = text.split(SSEP)
    diags.total_segments = len(segments)
    for segment in segments:
        parsed = _parse_segment(segment.split(), task, diags)
        if parsed is None:
            diags.malformed_segments += 1
            continue
        diags.valid_segments += 1
        if parsed in seen:
            diags.duplicates_removed += 1
            continue
        seen.add(parsed)
        results.append(parsed)
    return results, diags


def _parse_segment(
    tokens: list[str], task: TaskKind, diags: ParseDiagnostics
) -> Optional[SentimentTuple]:
    schema = task.schema
    positions = [i for i, tok in enumerate(tokens) if tok in PLACEHOLDER_TOKENS]
    if [tokens[i] for i in positions] != list(schema):
        return None
    if positions[0] != 0:
        return None
    fields: dict[str, str] = {}
    bounds = positions + [len(tokens)]
    for k, placeholder in enumerate(schema):
        value_tokens = tokens[bounds[k] + 1 : bounds[k + 1]]
        if not value_tokens:
            return None
        fields[_FIELD_FOR_TOKEN[placeholder]] = " ".join(value_tokens)
    if fields["sentiment"] not in SENTIMENTS:
        diags.unknown_sentiment += 1
        return None
    return SentimentTuple(
        aspect=fields["aspect"],
        sentiment=fields["sentiment"],
        opinion=fields.get("opinion"),
        category=fields.get("category"),
    )


def build_prompt(aspect: str) -> str:
    """Aspect-based pre-training prompt with the sentiment masked."""
    if not aspect:
        raise EmptyAspect("aspect must be non-empty")
    return f"{ASPECT_TOK} {aspect} {SENTIMENT_TOK} {MASK}"


def special_tokens(task: TaskKind) -> list[str]:
    """Placeholder tokens the task adds to the vocabulary, plus [SSEP] and [MASK]."""
    return list(task.schema) + [SSEP, MASK]
