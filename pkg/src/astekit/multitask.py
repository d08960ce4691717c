"""Fine-tuning for triplet generation with the two auxiliary heads.

Joint objective: generation NLL + alpha * opinion-tagging cross-entropy
+ beta * triplet-count MSE. The count regressor has no connection to the
decoder; its output never alters the generated string.
"""

from __future__ import annotations

import copy
import json
import logging
import math
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import torch
import torch.nn.functional as F
from torch import Tensor

from .corpus import AnnotatedSentence, build_bio_labels, triplet_count_label
from .model import ModelBundle, pad_batch
from .templates import LinearizedTarget, TaskKind, linearize
from .tokenizer import AlignmentFailure

logger = logging.getLogger(__name__)

BIO_INDEX = {"B": 0, "I": 1, "O": 2}


class TargetTooLong(ValueError):
    pass


class EmptyTrainSet(ValueError):
    pass


class NonFiniteLoss(RuntimeError):
    pass


class NonFiniteComponent(ValueError):
    pass


@dataclass
class FinetuneConfig:
    alpha: float = 0.0  # opinion-tagging loss weight
    beta: float = 0.0  # count-regression loss weight
    learning_rate: float = 1e-4
    batch_size: int = 16
    epochs: int = 20
    task: TaskKind = TaskKind.ASTE
    seed: int = 0
    weight_decay: float = 0.01
    max_target_len: int = 128
    skip_too_long: bool = True  # otherwise truncate with a warning

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if isinstance(self.task, str):
            self.task = TaskKind(self.task)


def target_ids(bundle: ModelBundle, target: LinearizedTarget,
               max_len: int = 128, skip_too_long: bool = True) -> list[int]:
    ids = bundle.tokenizer.encode(target.text).ids + [bundle.tokenizer.eos_id]
    if len(ids) > max_len:
        if skip_too_long:
            raise TargetTooLong(f"target of {len(ids)} tokens exceeds limit {max_len}")
        logger.warning("truncating target of %d tokens to %d", len(ids), max_len)
        ids = ids[: max_len - 1] + [bundle.tokenizer.eos_id]
    return ids


def generation_loss(bundle: ModelBundle, sentence: str, target: LinearizedTarget,
                    max_len: int = 128) -> Tensor:
    """Teacher-forced negative log-likelihood summed over the target tokens."""
    tok = bundle.tokenizer
    tgt = target_ids(bundle, target, max_len=max_len)
    src_ids = pad_batch([tok.encode(sentence).ids], tok.pad_id)
    dec_in = pad_batch([[tok.bos_id] + tgt[:-1]], tok.pad_id)
    memory, memory_pad = bundle.model.encode(src_ids)
    states = bundle.model.decode(memory, memory_pad, dec_in)
    logits = bundle.model.lm_head(states)[0]
    return F.cross_entropy(logits, torch.tensor(tgt), reduction="sum")


def otd_loss(bundle: ModelBundle, sentence: AnnotatedSentence,
             bio: Optional[Sequence[str]] = None) -> Tensor:
    """Mean 3-way cross-entropy over word positions.

    Word-level tags are aligned to each word's first sub-token; remaining
    sub-tokens are masked out of the loss.
    """
    if bio is None:
        bio = build_bio_labels(sentence)
    if len(bio) != len(sentence.tokens):
        raise ValueError("BIO length must equal token count")
    tok = bundle.tokenizer
    enc = tok.encode_words(sentence.tokens)
    firsts = enc.first_piece_positions(len(sentence.tokens))
    src_ids = pad_batch([enc.ids], tok.pad_id)
    states, _ = bundle.model.encode(src_ids)
    logits = bundle.model.otd_head(states[0][firsts])
    gold = torch.tensor([BIO_INDEX[t] for t in bio])
    return F.cross_entropy(logits, gold, reduction="mean")


def tce_loss(bundle: ModelBundle, sentence: AnnotatedSentence,
             count: Optional[int] = None) -> Tensor:
    """Squared error between the regressor output and the gold triplet count."""
    if count is None:
        count = triplet_count_label(sentence)
    tok = bundle.tokenizer
    src_ids = pad_batch([tok.encode(sentence.raw_text).ids], tok.pad_id)
    states, pad_mask = bundle.model.encode(src_ids)
    pred = bundle.model.tce_predict(states, pad_mask)[0]
    return (pred - float(count)) ** 2


@torch.no_grad()
def tce_predict_raw(bundle: ModelBundle, sentence: str) -> float:
    """Raw (un-rounded) triplet count prediction for a sentence string."""
    tok = bundle.tokenizer
    src_ids = pad_batch([tok.encode(sentence).ids], tok.pad_id)
    states, pad_mask = bundle.model.encode(src_ids)
    return float(bundle.model.tce_predict(states, pad_mask)[0])


def joint_loss(ed: Tensor | float, otd: Tensor | float, tce: Tensor | float,
               alpha: float, beta: float) -> Tensor | float:
    for name, value in (("ed", ed), ("otd", otd), ("tce", tce)):
        scalar = float(value.detach()) if isinstance(value, Tensor) else float(value)
        if not math.isfinite(scalar):
            raise NonFiniteComponent(f"{name} loss is non-finite: {scalar}")
    return ed + alpha * otd + beta * tce


def tce_round(prediction: float) -> int:
    """Nearest integer with exact .5 rounded down; negatives clamp to 0."""
    return max(0, math.ceil(prediction - 0.5))


@torch.no_grad()
def generate(bundle: ModelBundle, sentence: str, max_len: int = 128) -> LinearizedTarget:
    """Greedy decoding of the templated target string."""
    tok = bundle.tokenizer
    was_training = bundle.model.training
    bundle.model.eval()
    try:
        src_ids = pad_batch([tok.encode(sentence).ids], tok.pad_id)
        memory, memory_pad = bundle.model.encode(src_ids)
        out = [tok.bos_id]
        for _ in range(max_len):
            states = bundle.model.decode(memory, memory_pad, pad_batch([out], tok.pad_id))
            next_id = int(bundle.model.lm_head(states[0, -1]).argmax())
            if next_id == tok.eos_id:
                break
            out.append(next_id)
        return LinearizedTarget(text=tok.decode(out), task=bundle.task)
    finally:
        bundle.model.train(was_training)


@dataclass
class TrainExample:
    sentence: AnnotatedSentence
    target: LinearizedTarget
    bio: list[str]
    count: int


def build_train_examples(sentences: Sequence[AnnotatedSentence],
                         task: TaskKind) -> list[TrainExample]:
    examples = []
    for s in sentences:
        if not s.triplets:
            continue  # nothing to generate for a triplet-free sentence
        target = linearize([t.as_tuple(task) for t in s.triplets], task)
        examples.append(TrainExample(s, target, build_bio_labels(s), triplet_count_label(s)))
    return examples


@dataclass
class FinetuneEpoch:
    epoch: int
    ed_loss: float
    otd_loss: float
    tce_loss: float
    dev_f1: float


def finetune(
    train: Sequence[AnnotatedSentence],
    dev: Sequence[AnnotatedSentence],
    config: FinetuneConfig,
    bundle: ModelBundle,
    ckpt_dir: Optional[str | Path] = None,
) -> tuple[ModelBundle, list[FinetuneEpoch]]:
    """Joint fine-tuning; keeps the weights of the best dev-F1 epoch."""
    from .metrics import evaluate_sentences

    examples = build_train_examples(train, config.task)
    if not examples:
        raise EmptyTrainSet("no training sentence carries a triplet")
    usable: list[TrainExample] = []
    for ex in examples:
        try:
            target_ids(bundle, ex.target, config.max_target_len, config.skip_too_long)
        except TargetTooLong:
            logger.warning("skipping over-long target for %r", ex.sentence.raw_text)
            continue
        usable.append(ex)
    if not usable:
        raise EmptyTrainSet("every training target exceeds the length limit")

    torch.manual_seed(config.seed)
    rng = random.Random(config.seed)
    model = bundle.model
    optimizer = torch.optim.AdamW(
        model.parameters(), lr=config.learning_rate, weight_decay=config.weight_decay
    )
    trace: list[FinetuneEpoch] = []
    best_f1 = -1.0
    best_state = copy.deepcopy(model.state_dict())
    if ckpt_dir is not None:
        ckpt_dir = Path(ckpt_dir)
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        snapshot = asdict(config)
        snapshot["task"] = config.task.value
        (ckpt_dir / "config.json").write_text(json.dumps(snapshot, indent=1))

    for epoch in range(config.epochs):
        model.train()
        order = list(range(len(usable)))
        rng.shuffle(order)
        sums = {"ed": 0.0, "otd": 0.0, "tce": 0.0}
        for start in range(0, len(order), config.batch_size):
            batch = [usable[i] for i in order[start : start + config.batch_size]]
            ed = torch.stack(
                [generation_loss(bundle, ex.sentence.raw_text, ex.target,
                                 config.max_target_len) for ex in batch]
            ).mean()
            otd = torch.stack(
                [otd_loss(bundle, ex.sentence, ex.bio) for ex in batch]
            ).mean()
            tce = torch.stack(
                [tce_loss(bundle, ex.sentence, ex.count) for ex in batch]
            ).mean()
            loss = joint_loss(ed, otd, tce, config.alpha, config.beta)
            if not torch.isfinite(loss):
                raise NonFiniteLoss(f"non-finite loss at epoch {epoch}, batch {start}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            sums["ed"] += float(ed.detach()) * len(batch)
            sums["otd"] += float(otd.detach()) * len(batch)
            sums["tce"] += float(tce.detach()) * len(batch)
        n = len(usable)
        report = evaluate_sentences(bundle, dev, config.task)
        dev_f1 = report.triplet["f1"]
        trace.append(FinetuneEpoch(epoch, sums["ed"] / n, sums["otd"] / n,
                                   sums["tce"] / n, dev_f1))
        if dev_f1 > best_f1:
            best_f1 = dev_f1
            best_state = copy.deepcopy(model.state_dict())
        if ckpt_dir is not None:
            _write_trace(ckpt_dir / "train_trace.csv", trace)

    model.load_state_dict(best_state)
    if ckpt_dir is not None:
        bundle.save(ckpt_dir)
    return bundle, trace


def _write_trace(path: Path, trace: list[FinetuneEpoch]) -> None:
    import csv

    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "ed_loss", "otd_loss", "tce_loss", "dev_f1"])
        for row in trace:
            writer.writerow([row.epoch, f"{row.ed_loss:.6f}", f"{row.otd_loss:.6f}",
                             f"{row.tce_loss:.6f}", f"{row.dev_f1:.6f}"])
