"""Supervised contrastive pre-training on aspect-aware [MASK] embeddings.

The encoder reads the sentence; the decoder is teacher-forced with the
aspect-based prompt and its hidden state at the [MASK] position is the
aspect-centric sentiment embedding the contrastive loss acts on. The
sentence-level baseline replaces that embedding with the mean-pooled
final-layer encoder state.
"""

from __future__ import annotations

import csv
import json
import logging
import random
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import torch
import torch.nn.functional as F
from torch import Tensor

from .corpus import AnnotatedSentence, PromptExample
from .model import ModelBundle, pad_batch
from .templates import MASK

logger = logging.getLogger(__name__)


class NoMaskToken(ValueError):
    pass


class MultipleMaskTokens(ValueError):
    pass


class EmptyCorpus(ValueError):
    pass


class NonFiniteLoss(RuntimeError):
    pass


@dataclass
class ContrastiveConfig:
    temperature: float = 0.07
    batch_size: int = 16
    epochs: int = 14
    learning_rate: float = 2e-7  # 2e-5 for the sentence_level baseline
    mode: str = "aspect_level"  # or "sentence_level"
    seed: int = 0
    normalize_embeddings: bool = True
    weight_decay: float = 0.01

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if self.mode not in ("aspect_level", "sentence_level"):
            raise ValueError(f"unknown mode {self.mode!r}")


def scl_loss_detailed(
    embeddings: Tensor,
    labels: Sequence,
    temperature: float,
    normalize: bool = True,
) -> tuple[Tensor, int, int]:
    """Supervised contrastive loss; returns (loss, active_anchors, skipped_anchors).

    Anchors without any positive are excluded from the outer sum (their
    1/|P(i)| weight is undefined); a batch where every anchor is skipped is
    degenerate and contributes a flagged zero instead of NaN.
    """
    if embeddings.dim() != 2 or embeddings.size(0) < 2:
        raise ValueError("need a 2-D embedding batch with at least 2 rows")
    if embeddings.size(0) != len(labels):
        raise ValueError("row count must equal label count")
    if not torch.isfinite(embeddings).all():
        raise ValueError("embeddings contain NaN/Inf")
    z = F.normalize(embeddings, dim=1) if normalize else embeddings
    n = z.size(0)
    sim = (z @ z.T) / temperature
    self_mask = torch.eye(n, dtype=torch.bool, device=z.device)
    neg_inf = torch.finfo(z.dtype).min
    sim = sim.masked_fill(self_mask, neg_inf)
    # stabilized log-softmax over A(i) per anchor row
    log_prob = sim - torch.logsumexp(sim, dim=1, keepdim=True)

    label_ids = _label_ids(labels, z.device)
    pos_mask = label_ids.unsqueeze(0).eq(label_ids.unsqueeze(1)) & ~self_mask
    pos_counts = pos_mask.sum(dim=1)
    active = pos_counts > 0
    skipped = int(n - active.sum().item())
    if not active.any():
        logger.debug("degenerate contrastive batch: no anchor has a positive")
        return z.sum() * 0.0, 0, skipped
    per_anchor = -(log_prob * pos_mask).sum(dim=1)[active] / pos_counts[active].to(z.dtype)
    return per_anchor.sum(), int(active.sum().item()), skipped


def scl_loss(embeddings: Tensor, labels: Sequence, temperature: float,
             normalize: bool = True) -> Tensor:
    return scl_loss_detailed(embeddings, labels, temperature, normalize)[0]


def _label_ids(labels: Sequence, device) -> Tensor:
    mapping: dict = {}
    ids = []
    for lab in labels:
        ids.append(mapping.setdefault(lab, len(mapping)))
    return torch.tensor(ids, dtype=torch.long, device=device)


def mask_embedding_batch(bundle: ModelBundle, sentences: Sequence[str],
                         prompts: Sequence[str]) -> Tensor:
    """Decoder states at the [MASK] position, one row per (sentence, prompt)."""
    tok = bundle.tokenizer
    mask_id = tok.token_to_id[MASK]
    src, tgt, mask_pos = [], [], []
    for sentence, prompt in zip(sentences, prompts):
        prompt_ids = tok.encode(prompt).ids
        hits = [i for i, t in enumerate(prompt_ids) if t == mask_id]
        if not hits:
            raise NoMaskToken(f"prompt {prompt!r} contains no {MASK} token")
        if len(hits) > 1:
            raise MultipleMaskTokens(f"prompt {prompt!r} contains {len(hits)} {MASK} tokens")
        src.append(tok.encode(sentence).ids)
        tgt.append([tok.bos_id] + prompt_ids)
        mask_pos.append(hits[0] + 1)  # shifted by the leading <bos>
    model = bundle.model
    src_ids = pad_batch(src, tok.pad_id)
    tgt_ids = pad_batch(tgt, tok.pad_id)
    memory, memory_pad = model.encode(src_ids)
    states = model.decode(memory, memory_pad, tgt_ids)
    rows = torch.arange(len(sentences))
    return states[rows, torch.tensor(mask_pos)]


def extract_mask_embedding(sentence: str, prompt: str, bundle: ModelBundle) -> Tensor:
    """Single aspect-centric sentiment embedding, in eval mode, no gradients."""
    was_training = bundle.model.training
    bundle.model.eval()
    try:
        with torch.no_grad():
            return mask_embedding_batch(bundle, [sentence], [prompt])[0]
    finally:
        bundle.model.train(was_training)


def sentence_embedding_batch(bundle: ModelBundle, sentences: Sequence[str]) -> Tensor:
    tok = bundle.tokenizer
    src_ids = pad_batch([tok.encode(s).ids for s in sentences], tok.pad_id)
    states, pad_mask = bundle.model.encode(src_ids)
    return bundle.model.mean_pooled(states, pad_mask)


def mean_pooled_sentence_embedding(sentence: str, bundle: ModelBundle) -> Tensor:
    was_training = bundle.model.training
    bundle.model.eval()
    try:
        with torch.no_grad():
            return sentence_embedding_batch(bundle, [sentence])[0]
    finally:
        bundle.model.train(was_training)


def stratified_batches(labels: Sequence, batch_size: int, seed: int) -> list[list[int]]:
    """Seeded label-aware shuffle: round-robin over shuffled per-class pools so
    most batches contain at least two classes."""
    rng = random.Random(seed)
    pools: dict = {}
    for i, lab in enumerate(labels):
        pools.setdefault(lab, []).append(i)
    pool_lists = [list(v) for v in pools.values()]
    for pool in pool_lists:
        rng.shuffle(pool)
    rng.shuffle(pool_lists)
    order: list[int] = []
    while any(pool_lists):
        for pool in pool_lists:
            if pool:
                order.append(pool.pop())
        pool_lists = [p for p in pool_lists if p]
    return [order[i : i + batch_size] for i in range(0, len(order), batch_size)]


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    skipped_anchors: int


def pretrain(
    corpus: Sequence,
    config: ContrastiveConfig,
    bundle: ModelBundle,
    ckpt_dir: Optional[str | Path] = None,
) -> tuple[ModelBundle, list[EpochStats]]:
    """Contrastive pre-training loop; returns the updated bundle and per-epoch trace.

    In aspect_level mode `corpus` holds PromptExamples; in sentence_level mode,
    (AnnotatedSentence, label) pairs.
    """
    if not corpus:
        raise EmptyCorpus("pre-training corpus is empty")
    if config.mode == "aspect_level":
        sentences = [ex.sentence.raw_text for ex in corpus]
        prompts = [ex.prompt for ex in corpus]
        labels = [ex.label for ex in corpus]
    else:
        sentences = [s.raw_text for s, _ in corpus]
        prompts = None
        labels = [lab for _, lab in corpus]

    torch.manual_seed(config.seed)
    model = bundle.model
    model.train()
    optimizer = torch.optim.AdamW(
        model.parameters(), lr=config.learning_rate, weight_decay=config.weight_decay
    )
    trace: list[EpochStats] = []
    if ckpt_dir is not None:
        ckpt_dir = Path(ckpt_dir)
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        (ckpt_dir / "config.json").write_text(json.dumps(asdict(config), indent=1))

    for epoch in range(config.epochs):
        batches = stratified_batches(labels, config.batch_size, config.seed + epoch)
        losses: list[float] = []
        skipped_total = 0
        for batch_no, idx in enumerate(batches):
            if len(idx) < 2:
                continue  # a singleton tail batch has no contrastive signal
            if config.mode == "aspect_level":
                emb = mask_embedding_batch(
                    bundle, [sentences[i] for i in idx], [prompts[i] for i in idx]
                )
            else:
                emb = sentence_embedding_batch(bundle, [sentences[i] for i in idx])
            loss, active, skipped = scl_loss_detailed(
                emb, [labels[i] for i in idx], config.temperature,
                normalize=config.normalize_embeddings,
            )
            skipped_total += skipped
            if not torch.isfinite(loss):
                raise NonFiniteLoss(f"non-finite loss in epoch {epoch}, batch {batch_no}")
            if active:
                optimizer.zero_grad()
                (loss / active).backward()  # mean over anchors for scale stability
                optimizer.step()
            losses.append(float(loss.detach()) / max(active, 1))
        trace.append(EpochStats(epoch, sum(losses) / max(len(losses), 1), skipped_total))
        if ckpt_dir is not None:
            bundle.save(ckpt_dir)
            _write_trace(ckpt_dir / "loss_trace.csv", trace)
    return bundle, trace


def _write_trace(path: Path, trace: list[EpochStats]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss", "skipped_anchors"])
        for row in trace:
            writer.writerow([row.epoch, f"{row.mean_loss:.6f}", row.skipped_anchors])
