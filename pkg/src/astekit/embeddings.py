"""Embedding dumps for external visualization, plus a plain-numpy silhouette
score used to quantify how well sentiment classes separate."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .contrastive import extract_mask_embedding
from .corpus import PromptExample
from .model import ModelBundle


def export_mask_embeddings(
    bundle: ModelBundle, examples: Sequence[PromptExample], path: str | Path
) -> None:
    """TSV dump: id, gold sentiment, comma-joined vector. Ids are positional so
    before/after dumps of the same example list pair up row by row."""
    lines = []
    for idx, ex in enumerate(examples):
        vec = extract_mask_embedding(ex.sentence.raw_text, ex.prompt, bundle)
        joined = ",".join(f"{v:.6f}" for v in vec.tolist())
        lines.append(f"{idx}\t{ex.label}\t{joined}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_embedding_dump(path: str | Path) -> tuple[np.ndarray, list[str]]:
    vectors = []
    labels = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        _, label, joined = line.split("\t")
        labels.append(label)
        vectors.append([float(v) for v in joined.split(",")])
    return np.asarray(vectors, dtype=np.float64), labels


def silhouette_score(vectors: np.ndarray, labels: Sequence) -> float:
    """Mean silhouette over samples, euclidean distance.

    s(i) = (b(i) - a(i)) / max(a(i), b(i)) with a(i) the mean distance to the
    rest of i's own cluster and b(i) the smallest mean distance to another
    cluster; singleton clusters score 0.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    labels = np.asarray(labels)
    uniq = np.unique(labels)
    if len(uniq) < 2:
        raise ValueError("silhouette needs at least two clusters")
    diff = vectors[:, None, :] - vectors[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=-1))
    scores = np.zeros(len(vectors))
    for i in range(len(vectors)):
        own = labels == labels[i]
        n_own = own.sum()
        if n_own <= 1:
            continue
        a = dist[i][own].sum() / (n_own - 1)
        b = min(dist[i][labels == lab].mean() for lab in uniq if lab != labels[i])
        scores[i] = (b - a) / max(a, b)
    return float(scores.mean())
