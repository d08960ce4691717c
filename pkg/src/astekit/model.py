"""Encoder-decoder backbone with the two auxiliary heads.

The desk-scale profile uses a small randomly initialized transformer; the
paper-scale profile (a 222M-parameter pre-trained backbone, hidden size 768)
is documented in the README and is not a CI target. Architecture knobs all
live in ModelConfig so both profiles share this code path.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import torch
from torch import Tensor, nn

from .templates import TaskKind
from .tokenizer import Tokenizer


@dataclass
class ModelConfig:
    hidden_size: int = 64
    num_heads: int = 4
    num_layers: int = 2
    ffn_size: int = 128
    dropout: float = 0.1
    max_len: int = 192
    tce_hidden: int = 128  # width of the count regressor's first layer


class Seq2SeqTransformer(nn.Module):
    def __init__(self, vocab_size: int, pad_id: int, config: ModelConfig):
        super().__init__()
        self.config = config
        self.pad_id = pad_id
        d = config.hidden_size
        self.embed = nn.Embedding(vocab_size, d, padding_idx=pad_id)
        self.pos = nn.Embedding(config.max_len, d)
        enc_layer = nn.TransformerEncoderLayer(
            d, config.num_heads, config.ffn_size, config.dropout, batch_first=True
        )
        dec_layer = nn.TransformerDecoderLayer(
            d, config.num_heads, config.ffn_size, config.dropout, batch_first=True
        )
        self.encoder = nn.TransformerEncoder(enc_layer, config.num_layers,
                                             enable_nested_tensor=False)
        self.decoder = nn.TransformerDecoder(dec_layer, config.num_layers)
        self.lm_head = nn.Linear(d, vocab_size, bias=False)
        self.otd_head = nn.Linear(d, 3)
        self.tce_head = nn.Sequential(
            nn.Linear(d, config.tce_hidden), nn.ReLU(), nn.Linear(config.tce_hidden, 1)
        )

    def _positions(self, ids: Tensor) -> Tensor:
        n = ids.size(1)
        if n > self.config.max_len:
            raise ValueError(f"sequence length {n} exceeds max_len {self.config.max_len}")
        return torch.arange(n, device=ids.device).unsqueeze(0)

    def encode(self, src_ids: Tensor) -> tuple[Tensor, Tensor]:
        """Returns (encoder states, padding mask with True at pad positions)."""
        pad_mask = src_ids.eq(self.pad_id)
        # an all-padding row (empty input) would make attention degenerate;
        # expose its first slot as a regular token instead
        empty_rows = pad_mask.all(dim=1)
        if empty_rows.any():
            pad_mask = pad_mask.clone()
            pad_mask[empty_rows, 0] = False
        x = self.embed(src_ids) + self.pos(self._positions(src_ids))
        states = self.encoder(x, src_key_padding_mask=pad_mask)
        return states, pad_mask

    def decode(self, memory: Tensor, memory_pad_mask: Tensor, tgt_ids: Tensor) -> Tensor:
        """Causally masked decoder states for teacher-forced target ids."""
        n = tgt_ids.size(1)
        causal = torch.triu(torch.ones(n, n, dtype=torch.bool, device=tgt_ids.device), 1)
        tgt_pad_mask = tgt_ids.eq(self.pad_id)
        y = self.embed(tgt_ids) + self.pos(self._positions(tgt_ids))
        return self.decoder(
            y,
            memory,
            tgt_mask=causal,
            tgt_key_padding_mask=tgt_pad_mask,
            memory_key_padding_mask=memory_pad_mask,
        )

    def mean_pooled(self, states: Tensor, pad_mask: Tensor) -> Tensor:
        """Mean over non-padding encoder states; the sentence embedding e."""
        keep = (~pad_mask).unsqueeze(-1).to(states.dtype)
        denom = keep.sum(dim=1).clamp(min=1.0)
        return (states * keep).sum(dim=1) / denom

    def tce_predict(self, states: Tensor, pad_mask: Tensor) -> Tensor:
        return self.tce_head(self.mean_pooled(states, pad_mask)).squeeze(-1)


@dataclass
class ModelBundle:
    """Weights plus tokenizer and task binding; the unit that gets checkpointed."""

    model: Seq2SeqTransformer
    tokenizer: Tokenizer
    task: TaskKind
    config: ModelConfig

    @property
    def hidden_size(self) -> int:
        return self.config.hidden_size

    @classmethod
    def create(
        cls,
        tokenizer: Tokenizer,
        task: TaskKind,
        config: Optional[ModelConfig] = None,
        seed: int = 0,
    ) -> "ModelBundle":
        config = config or ModelConfig()
        torch.manual_seed(seed)
        model = Seq2SeqTransformer(len(tokenizer), tokenizer.pad_id, config)
        return cls(model=model, tokenizer=tokenizer, task=task, config=config)

    def save(self, ckpt_dir: str | Path) -> None:
        ckpt_dir = Path(ckpt_dir)
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        self.tokenizer.save(ckpt_dir / "vocab.json")
        meta = {"task": self.task.value, "model_config": asdict(self.config)}
        (ckpt_dir / "model_meta.json").write_text(json.dumps(meta, indent=1), encoding="utf-8")
        # atomic weight write: temp file in the same directory, then rename
        fd, tmp = tempfile.mkstemp(dir=ckpt_dir, suffix=".pt")
        os.close(fd)
        torch.save(self.model.state_dict(), tmp)
        os.replace(tmp, ckpt_dir / "weights.pt")

    @classmethod
    def load(cls, ckpt_dir: str | Path) -> "ModelBundle":
        ckpt_dir = Path(ckpt_dir)
        tokenizer = Tokenizer.load(ckpt_dir / "vocab.json")
        meta = json.loads((ckpt_dir / "model_meta.json").read_text(encoding="utf-8"))
        config = ModelConfig(**meta["model_config"])
        model = Seq2SeqTransformer(len(tokenizer), tokenizer.pad_id, config)
        model.load_state_dict(torch.load(ckpt_dir / "weights.pt", weights_only=True))
        return cls(model=model, tokenizer=tokenizer, task=TaskKind(meta["task"]), config=config)


def pad_batch(sequences: list[list[int]], pad_id: int) -> Tensor:
    width = max(max(len(s) for s in sequences), 1)
    out = torch.full((len(sequences), width), pad_id, dtype=torch.long)
    for i, seq in enumerate(sequences):
        out[i, : len(seq)] = torch.tensor(seq, dtype=torch.long)
    return out
