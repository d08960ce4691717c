"""Ingestion of triplet-annotated ABSA data and derivation of training examples.

The on-disk format is one record per line:
    The food was good .####[([1], [3], 'POS')]
i.e. a whitespace-tokenized sentence, a literal "####", and a Python list
literal of ([aspect word indices], [opinion word indices], 'SENTIMENT') tuples.
"""

from __future__ import annotations

import ast
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .templates import SENTIMENTS, SentimentTuple, TaskKind

logger = logging.getLogger(__name__)

SEPARATOR = "####"
CORPUS_FORMAT_VERSION = 1

BIO_TAGS = ("B", "I", "O")


class MalformedLine(ValueError):
    """Corrupt input record; carries the offending line number when known."""

    def __init__(self, message: str, line_no: Optional[int] = None):
        self.line_no = line_no
        prefix = f"line {line_no}: " if line_no is not None else ""
        super().__init__(prefix + message)


@dataclass(frozen=True)
class Triplet:
    aspect_span: tuple[int, ...]
    aspect: str
    opinion_span: tuple[int, ...]
    opinion: str
    sentiment: str
    category: Optional[str] = None

    def key(self) -> tuple:
        return (self.aspect_span, self.opinion_span, self.sentiment)

    def as_tuple(self, task: TaskKind = TaskKind.ASTE) -> SentimentTuple:
        return SentimentTuple(
            aspect=self.aspect,
            sentiment=self.sentiment,
            opinion=self.opinion if "<opinion>" in task.schema else None,
            category=self.category if "<category>" in task.schema else None,
        )


@dataclass(frozen=True)
class AnnotatedSentence:
    tokens: tuple[str, ...]
    raw_text: str
    triplets: tuple[Triplet, ...]
    split: str = "train"
    domain: str = "restaurant"

    def to_v2_line(self) -> str:
        annots = [
            (list(t.aspect_span), list(t.opinion_span), t.sentiment)
            for t in self.triplets
        ]
        return f"{self.raw_text}{SEPARATOR}{annots!r}"


@dataclass(frozen=True)
class PromptExample:
    sentence: AnnotatedSentence
    aspect: str
    prompt: str
    label: str


@dataclass
class SplitSummary:
    sentences: int = 0
    pos: int = 0
    neu: int = 0
    neg: int = 0

    def add(self, sentence: AnnotatedSentence) -> None:
        self.sentences += 1
        for t in sentence.triplets:
            if t.sentiment == "POS":
                self.pos += 1
            elif t.sentiment == "NEU":
                self.neu += 1
            else:
                self.neg += 1


def _resolve_span(span: Sequence[int], tokens: Sequence[str], what: str) -> tuple[tuple[int, ...], str]:
    if not span:
        raise MalformedLine(f"empty {what} span")
    indices = tuple(int(i) for i in span)
    if list(indices) != sorted(set(indices)) or indices[-1] - indices[0] != len(indices) - 1:
        raise MalformedLine(f"{what} span {list(span)} is not contiguous ascending")
    if indices[0] < 0 or indices[-1] >= len(tokens):
        raise MalformedLine(f"{what} span {list(span)} out of range for {len(tokens)} tokens")
    return indices, " ".join(tokens[i] for i in indices)


def parse_aste_v2_line(line: str, split: str = "train", domain: str = "restaurant",
                       line_no: Optional[int] = None) -> AnnotatedSentence:
    line = line.rstrip("\n")
    if SEPARATOR not in line:
        raise MalformedLine(f"missing {SEPARATOR!r} separator", line_no)
    text, _, annot = line.partition(SEPARATOR)
    tokens = tuple(text.split())
    try:
        literal = ast.literal_eval(annot.strip())
    except (ValueError, SyntaxError) as exc:
        raise MalformedLine(f"unparsable annotation literal: {exc}", line_no) from None
    if not isinstance(literal, list):
        raise MalformedLine("annotation is not a list", line_no)
    triplets: list[Triplet] = []
    seen: set[tuple] = set()
    for item in literal:
        if not (isinstance(item, tuple) and len(item) == 3):
            raise MalformedLine(f"annotation item {item!r} is not a 3-tuple", line_no)
        asp_idx, opin_idx, sentiment = item
        if sentiment not in SENTIMENTS:
            raise MalformedLine(f"unknown sentiment code {sentiment!r}", line_no)
        try:
            aspect_span, aspect = _resolve_span(asp_idx, tokens, "aspect")
            opinion_span, opinion = _resolve_span(opin_idx, tokens, "opinion")
        except MalformedLine as exc:
            raise MalformedLine(str(exc), line_no) from None
        triplet = Triplet(aspect_span, aspect, opinion_span, opinion, sentiment)
        if triplet.key() in seen:
            continue  # gold duplicates collapse; scoring is set-based
        seen.add(triplet.key())
        triplets.append(triplet)
    return AnnotatedSentence(tokens=tokens, raw_text=text, triplets=tuple(triplets),
                             split=split, domain=domain)


def load_split(path: str | Path, split: str = "train",
               domain: str = "restaurant") -> tuple[list[AnnotatedSentence], SplitSummary]:
    """Load one data file; returns sentences in file order plus count summary."""
    path = Path(path)
    sentences: list[AnnotatedSentence] = []
    summary = SplitSummary()
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                sentence = parse_aste_v2_line(line, split=split, domain=domain, line_no=line_no)
            except MalformedLine as exc:
                raise MalformedLine(f"{path}: {exc}") from exc
            sentences.append(sentence)
            summary.add(sentence)
    return sentences, summary


def derive_prompt_examples(sentences: Iterable[AnnotatedSentence]) -> list[PromptExample]:
    """One example per distinct (sentence, aspect) pair, in document order.

    An aspect appearing with two different gold sentiments in one sentence has
    no consistent label; such examples are skipped and logged.
    """
    from .templates import build_prompt

    examples: list[PromptExample] = []
    for sentence in sentences:
        label_by_aspect: dict[str, str] = {}
        conflicted: set[str] = set()
        order: list[str] = []
        for t in sentence.triplets:
            if t.aspect not in label_by_aspect:
                label_by_aspect[t.aspect] = t.sentiment
                order.append(t.aspect)
            elif label_by_aspect[t.aspect] != t.sentiment:
                conflicted.add(t.aspect)
        for aspect in order:
            if aspect in conflicted:
                logger.warning(
                    "skipping aspect %r in %r: conflicting sentiments", aspect, sentence.raw_text
                )
                continue
            examples.append(
                PromptExample(
                    sentence=sentence,
                    aspect=aspect,
                    prompt=build_prompt(aspect),
                    label=label_by_aspect[aspect],
                )
            )
    return examples


def derive_sentence_level_examples(
    sentences: Iterable[AnnotatedSentence],
) -> list[tuple[AnnotatedSentence, str]]:
    """Sentences whose triplets all share one polarity, labeled with it."""
    out = []
    for sentence in sentences:
        polarities = {t.sentiment for t in sentence.triplets}
        if len(polarities) == 1:
            out.append((sentence, next(iter(polarities))))
    return out


def merge_spans(spans: Iterable[Sequence[int]]) -> list[tuple[int, ...]]:
    """Union overlapping index spans; adjacent-but-disjoint spans stay separate."""
    ranges = sorted((s[0], s[-1]) for s in spans)
    merged: list[list[int]] = []
    for start, end in ranges:
        if merged and start <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], end)
        else:
            merged.append([start, end])
    return [tuple(range(a, b + 1)) for a, b in merged]


def build_bio_labels(sentence: AnnotatedSentence) -> list[str]:
    """BIO tags over sentence tokens for the merged gold opinion spans."""
    tags = ["O"] * len(sentence.tokens)
    for span in merge_spans(t.opinion_span for t in sentence.triplets):
        tags[span[0]] = "B"
        for i in span[1:]:
            tags[i] = "I"
    return tags


def decode_bio(tags: Sequence[str]) -> list[tuple[int, ...]]:
    spans: list[list[int]] = []
    for i, tag in enumerate(tags):
        if tag == "B":
            spans.append([i])
        elif tag == "I" and spans and spans[-1][-1] == i - 1:
            spans[-1].append(i)
    return [tuple(s) for s in spans]


def triplet_count_label(sentence: AnnotatedSentence) -> int:
    return len(sentence.triplets)


# --- canonical JSON corpus dump -------------------------------------------


def _sentence_to_dict(s: AnnotatedSentence) -> dict:
    return {
        "tokens": list(s.tokens),
        "raw_text": s.raw_text,
        "split": s.split,
        "domain": s.domain,
        "triplets": [
            {
                "aspect_span": list(t.aspect_span),
                "aspect": t.aspect,
                "opinion_span": list(t.opinion_span),
                "opinion": t.opinion,
                "sentiment": t.sentiment,
                "category": t.category,
            }
            for t in s.triplets
        ],
        "bio": build_bio_labels(s),
        "triplet_count": triplet_count_label(s),
    }


def _sentence_from_dict(d: dict) -> AnnotatedSentence:
    return AnnotatedSentence(
        tokens=tuple(d["tokens"]),
        raw_text=d["raw_text"],
        split=d.get("split", "train"),
        domain=d.get("domain", "restaurant"),
        triplets=tuple(
            Triplet(
                aspect_span=tuple(t["aspect_span"]),
                aspect=t["aspect"],
                opinion_span=tuple(t["opinion_span"]),
                opinion=t["opinion"],
                sentiment=t["sentiment"],
                category=t.get("category"),
            )
            for t in d["triplets"]
        ),
    )


def dump_corpus(sentences: Sequence[AnnotatedSentence], path: str | Path) -> None:
    payload = {
        "format_version": CORPUS_FORMAT_VERSION,
        "sentences": [_sentence_to_dict(s) for s in sentences],
    }
    Path(path).write_text(json.dumps(payload, indent=1), encoding="utf-8")


def load_corpus(path: str | Path) -> list[AnnotatedSentence]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format_version") != CORPUS_FORMAT_VERSION:
        raise ValueError(f"unsupported corpus format_version {payload.get('format_version')!r}")
    return [_sentence_from_dict(d) for d in payload["sentences"]]
