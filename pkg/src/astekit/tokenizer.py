"""Word-level tokenizer with character-piece fallback for out-of-vocabulary words.

In-vocabulary words map to a single piece. An OOV word is split into character
pieces ("g", "##o", "##o", "##d"), so a word can span several sub-tokens; the
word index of every piece is tracked for label alignment.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .templates import SENTIMENTS, TaskKind, special_tokens

PAD, UNK, BOS, EOS = "<pad>", "<unk>", "<bos>", "<eos>"
RESERVED = (PAD, UNK, BOS, EOS)
CONT_PREFIX = "##"


class AlignmentFailure(ValueError):
    """A word produced zero sub-tokens; labels cannot be aligned."""


@dataclass
class Encoding:
    ids: list[int]
    word_ids: list[int]  # index of the source word for each piece

    def first_piece_positions(self, n_words: int) -> list[int]:
        firsts = [-1] * n_words
        for pos, w in enumerate(self.word_ids):
            if w >= 0 and firsts[w] == -1:
                firsts[w] = pos
        if any(p == -1 for p in firsts):
            raise AlignmentFailure("some words map to no sub-token")
        return firsts


class Tokenizer:
    def __init__(self, vocab: Sequence[str]):
        self.id_to_token = list(vocab)
        self.token_to_id = {tok: i for i, tok in enumerate(self.id_to_token)}
        for tok in RESERVED:
            if tok not in self.token_to_id:
                raise ValueError(f"vocabulary is missing reserved token {tok!r}")
        self.pad_id = self.token_to_id[PAD]
        self.unk_id = self.token_to_id[UNK]
        self.bos_id = self.token_to_id[BOS]
        self.eos_id = self.token_to_id[EOS]

    def __len__(self) -> int:
        return len(self.id_to_token)

    @classmethod
    def build(cls, texts: Iterable[str], task: TaskKind) -> "Tokenizer":
        """Vocabulary from training text words plus special and sentiment tokens."""
        words: dict[str, None] = {}
        chars: dict[str, None] = {}
        for text in texts:
            for word in text.split():
                words.setdefault(word, None)
                for ch in word:
                    chars.setdefault(ch, None)
        vocab = list(RESERVED) + special_tokens(task) + list(SENTIMENTS)
        known = set(vocab)
        for word in words:
            if word not in known:
                vocab.append(word)
                known.add(word)
        for ch in chars:
            for piece in (ch, CONT_PREFIX + ch):
                if piece not in known:
                    vocab.append(piece)
                    known.add(piece)
        return cls(vocab)

    def word_pieces(self, word: str) -> list[str]:
        if word in self.token_to_id:
            return [word]
        if not word:
            raise AlignmentFailure("empty word")
        return [word[0]] + [CONT_PREFIX + ch for ch in word[1:]]

    def encode_words(self, words: Sequence[str]) -> Encoding:
        ids: list[int] = []
        word_ids: list[int] = []
        for w_idx, word in enumerate(words):
            for piece in self.word_pieces(word):
                ids.append(self.token_to_id.get(piece, self.unk_id))
                word_ids.append(w_idx)
        return Encoding(ids=ids, word_ids=word_ids)

    def encode(self, text: str) -> Encoding:
        return self.encode_words(text.split())

    def decode(self, ids: Sequence[int]) -> str:
        """Inverse of encode: merge continuation pieces back into words."""
        words: list[str] = []
        for i in ids:
            if i in (self.pad_id, self.bos_id, self.eos_id):
                continue
            tok = self.id_to_token[i]
            if tok.startswith(CONT_PREFIX) and words:
                words[-1] += tok[len(CONT_PREFIX):]
            else:
                words.append(tok)
        return " ".join(words)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.id_to_token), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Tokenizer":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))
