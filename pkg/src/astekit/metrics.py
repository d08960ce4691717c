"""Exact-match evaluation: tuple-level P/R/F1, element-level F1, and sentiment
accuracy on correctly extracted (aspect, opinion) pairs.

All corpus scores are micro-averaged: match counts are summed over sentences
before taking ratios. Matching is on surface strings (single-space joined,
case preserved); both sides are treated as sets.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

from .corpus import AnnotatedSentence
from .templates import SentimentTuple, TaskKind, parse


def _norm(value: Optional[str]) -> Optional[str]:
    return " ".join(value.split()) if value is not None else None


def normalize_tuple(t: SentimentTuple) -> tuple:
    return (_norm(t.aspect), _norm(t.opinion), _norm(t.category), t.sentiment)


def exact_match_prf(pred: Iterable, gold: Iterable) -> dict[str, float]:
    pred_set, gold_set = set(pred), set(gold)
    matched = len(pred_set & gold_set)
    p = matched / len(pred_set) if pred_set else 0.0
    r = matched / len(gold_set) if gold_set else 0.0
    return {"precision": p, "recall": r, "f1": _f1(p, r)}


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


@dataclass
class EvalReport:
    triplet: dict[str, float]
    aspect_f1: float
    opinion_f1: float
    sentiment_accuracy: float
    counts: dict[str, int]
    no_matched_pairs: bool = False  # sentiment accuracy undefined, reported as 0
    per_sentence: list[dict] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "triplet": self.triplet,
                "aspect_f1": self.aspect_f1,
                "opinion_f1": self.opinion_f1,
                "sentiment_accuracy": self.sentiment_accuracy,
                "counts": self.counts,
                "no_matched_pairs": self.no_matched_pairs,
            },
            indent=1,
        )

    def to_table(self) -> str:
        rows = [
            ("triplet P", self.triplet["precision"]),
            ("triplet R", self.triplet["recall"]),
            ("triplet F1", self.triplet["f1"]),
            ("aspect F1", self.aspect_f1),
            ("opinion F1", self.opinion_f1),
            ("sentiment acc", self.sentiment_accuracy),
        ]
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name:<{width}}  {value:.4f}" for name, value in rows)


def score_corpus(
    preds: Sequence[Sequence[SentimentTuple]],
    golds: Sequence[Sequence[SentimentTuple]],
) -> EvalReport:
    """Micro-averaged scores over aligned per-sentence prediction/gold lists."""
    if len(preds) != len(golds):
        raise ValueError("prediction and gold corpora differ in length")
    tp = n_pred = n_gold = 0
    asp_tp = asp_pred = asp_gold = 0
    op_tp = op_pred = op_gold = 0
    pair_matched = pair_correct = 0
    per_sentence = []
    for pred, gold in zip(preds, golds):
        pred_set = {normalize_tuple(t) for t in pred}
        gold_set = {normalize_tuple(t) for t in gold}
        matched = pred_set & gold_set
        tp += len(matched)
        n_pred += len(pred_set)
        n_gold += len(gold_set)

        pa = {t[0] for t in pred_set}
        ga = {t[0] for t in gold_set}
        asp_tp += len(pa & ga)
        asp_pred += len(pa)
        asp_gold += len(ga)

        po = {t[1] for t in pred_set if t[1] is not None}
        go = {t[1] for t in gold_set if t[1] is not None}
        op_tp += len(po & go)
        op_pred += len(po)
        op_gold += len(go)

        gold_pairs = {(t[0], t[1]) for t in gold_set}
        gold_pair_sent = {(t[0], t[1], t[3]) for t in gold_set}
        for t in pred_set:
            if (t[0], t[1]) in gold_pairs:
                pair_matched += 1
                if (t[0], t[1], t[3]) in gold_pair_sent:
                    pair_correct += 1
        per_sentence.append(
            {"gold": len(gold_set), "predicted": len(pred_set), "matched": len(matched)}
        )
    p = tp / n_pred if n_pred else 0.0
    r = tp / n_gold if n_gold else 0.0
    asp_p = asp_tp / asp_pred if asp_pred else 0.0
    asp_r = asp_tp / asp_gold if asp_gold else 0.0
    op_p = op_tp / op_pred if op_pred else 0.0
    op_r = op_tp / op_gold if op_gold else 0.0
    return EvalReport(
        triplet={"precision": p, "recall": r, "f1": _f1(p, r)},
        aspect_f1=_f1(asp_p, asp_r),
        opinion_f1=_f1(op_p, op_r),
        sentiment_accuracy=pair_correct / pair_matched if pair_matched else 0.0,
        counts={"gold": n_gold, "predicted": n_pred, "matched": tp},
        no_matched_pairs=pair_matched == 0,
        per_sentence=per_sentence,
    )


def element_f1(
    preds: Sequence[Sequence[SentimentTuple]],
    golds: Sequence[Sequence[SentimentTuple]],
    element: str,
) -> float:
    if element not in ("aspect", "opinion"):
        raise ValueError("element must be 'aspect' or 'opinion'")
    report = score_corpus(preds, golds)
    return report.aspect_f1 if element == "aspect" else report.opinion_f1


def sentiment_accuracy(
    preds: Sequence[Sequence[SentimentTuple]],
    golds: Sequence[Sequence[SentimentTuple]],
) -> float:
    return score_corpus(preds, golds).sentiment_accuracy


def gold_tuples(sentence: AnnotatedSentence, task: TaskKind) -> list[SentimentTuple]:
    seen = set()
    out = []
    for t in sentence.triplets:
        st = t.as_tuple(task)
        if st not in seen:
            seen.add(st)
            out.append(st)
    return out


def evaluate_sentences(
    bundle,
    sentences: Sequence[AnnotatedSentence],
    task: TaskKind,
    generate_fn: Optional[Callable[[str], str]] = None,
) -> EvalReport:
    """Generate, parse, and score a split. `generate_fn` overrides the model's
    decoder (used for oracle replay tests and prediction dumps)."""
    from .multitask import generate

    preds = []
    golds = []
    for sentence in sentences:
        if generate_fn is not None:
            text = generate_fn(sentence.raw_text)
        else:
            text = generate(bundle, sentence.raw_text).text
        tuples, _ = parse(text, task)
        preds.append(tuples)
        golds.append(gold_tuples(sentence, task))
    return score_corpus(preds, golds)


def median_f1(values: Sequence[float]) -> float:
    """Lower median across seeds, matching multi-run reporting."""
    return statistics.median_low(sorted(values))
