"""Acceptance gate: one test per release criterion, each printing a pass line.

Run with `pytest tests/test_acceptance.py -s` to see the per-criterion lines.
The benchmark-count checks (criterion 5) run against the released data files
when ASTE_V2_DIR points at them and fall back to the synthetic fixtures here
otherwise.
"""

import math
import os
import random
import time
from pathlib import Path

import numpy as np
import pytest
import torch
import torch.nn.functional as F

from astekit.contrastive import (
    ContrastiveConfig,
    extract_mask_embedding,
    pretrain,
    scl_loss,
    scl_loss_detailed,
)
from astekit.corpus import (
    derive_prompt_examples,
    derive_sentence_level_examples,
    load_split,
)
from astekit.embeddings import silhouette_score
from astekit.metrics import evaluate_sentences, score_corpus
from astekit.model import ModelBundle, ModelConfig
from astekit.multitask import (
    FinetuneConfig,
    build_train_examples,
    finetune,
    generate,
    generation_loss,
    joint_loss,
    otd_loss,
    tce_loss,
    tce_round,
)
from astekit.sweep import DEFAULT_GRID, two_stage_sweep
from astekit.templates import TaskKind, linearize, parse
from astekit.tokenizer import Tokenizer

from test_contrastive import oracle_scl, random_batch
from test_metrics import oracle_scores, tup
from test_templates import random_tuple_set

DESK = ModelConfig(hidden_size=64, num_heads=4, num_layers=2, ffn_size=128, dropout=0.0)


def ok(criterion: str, detail: str = "") -> None:
    print(f"[acceptance] {criterion}: PASS {detail}".rstrip())


def desk_bundle(sentences, seed=0, config=DESK):
    tok = Tokenizer.build((s.raw_text for s in sentences), TaskKind.ASTE)
    return ModelBundle.create(tok, TaskKind.ASTE, config, seed=seed)


def test_c1_template_round_trip_and_fuzz():
    start = time.monotonic()
    placeholders = ["<aspect>", "<opinion>", "<sentiment>", "<category>", "[SSEP]"]
    count = 0
    for task in TaskKind:
        rng = random.Random(f"c1-{task.value}")
        while count < 10_000 * (list(TaskKind).index(task) + 1) // len(list(TaskKind)):
            tuples = random_tuple_set(rng, task)
            parsed, diags = parse(linearize(tuples, task).text, task)
            assert parsed == tuples
            # fuzzed variant with injected placeholder noise
            tokens = linearize(tuples, task).text.split()
            tokens.insert(rng.randint(0, len(tokens)), rng.choice(placeholders))
            _, fuzz_diags = parse(" ".join(tokens), task)
            assert (
                fuzz_diags.valid_segments + fuzz_diags.malformed_segments
                == fuzz_diags.total_segments
            )
            count += 1
    elapsed = time.monotonic() - start
    assert count == 10_000
    assert elapsed < 30
    ok("C1 template round trip", f"(10000 sets, {elapsed:.1f}s)")


def test_c2_scl_oracle_and_gradients():
    start = time.monotonic()
    rng = np.random.default_rng(2026)
    checked_grads = 0
    for i in range(50):
        emb, labels = random_batch(rng, max_rows=8, max_dim=8)
        got = float(scl_loss(emb, labels, 0.07))
        want = oracle_scl(emb.tolist(), labels, 0.07)
        assert got == pytest.approx(want, rel=1e-6, abs=1e-9)
        if len(set(labels)) == len(labels):
            continue  # degenerate batch: no gradient signal
        emb = emb.clone().requires_grad_(True)
        (grad,) = torch.autograd.grad(scl_loss(emb, labels, 0.07), emb)
        h = 1e-6
        with torch.no_grad():
            for r in range(emb.size(0)):
                for c in range(emb.size(1)):
                    hi, lo = emb.clone(), emb.clone()
                    hi[r, c] += h
                    lo[r, c] -= h
                    fd = (
                        float(scl_loss(hi, labels, 0.07))
                        - float(scl_loss(lo, labels, 0.07))
                    ) / (2 * h)
                    g = float(grad[r, c])
                    # 1e-6 absolute floor absorbs central-difference noise
                    # on near-zero gradient entries
                    assert abs(fd - g) <= 1e-4 * max(abs(fd), abs(g)) + 1e-6
        checked_grads += 1
    elapsed = time.monotonic() - start
    assert elapsed < 60
    assert checked_grads >= 10
    ok("C2 contrastive loss oracle + gradients",
       f"(50 batches, {checked_grads} gradient checks, {elapsed:.1f}s)")


def test_c3_scl_property_suite():
    rng = np.random.default_rng(3)
    for _ in range(200):
        emb, labels = random_batch(rng)
        loss, active, skipped = scl_loss_detailed(emb, labels, 0.07)
        # non-negativity
        assert float(loss) >= -1e-10
        # anchor accounting: exactly the anchors with a positive are active
        n_with_pos = sum(
            1 for i, l in enumerate(labels)
            if any(j != i and labels[j] == l for j in range(len(labels)))
        )
        assert (active, active + skipped) == (n_with_pos, len(labels))
        # permutation invariance
        perm = rng.permutation(len(labels))
        assert float(
            scl_loss(emb[perm], [labels[i] for i in perm], 0.07)
        ) == pytest.approx(float(loss), rel=1e-6, abs=1e-6)
        # rescaling invariance under normalization
        scales = torch.tensor(rng.uniform(0.1, 10.0, size=(len(labels), 1)))
        assert float(scl_loss(emb * scales, labels, 0.07)) == pytest.approx(
            float(loss), rel=1e-6, abs=1e-9
        )
    ok("C3 contrastive loss invariants", "(200 cases x 4 properties)")


def test_c4_metric_oracle_and_gold_replay(train_sentences, dev_sentences):
    rng = random.Random(4)
    for _ in range(100):
        n = rng.randint(1, 5)
        make = lambda: [
            tup(rng.choice("abc"), rng.choice("xyz"), rng.choice(["POS", "NEU", "NEG"]))
            for _ in range(rng.randint(0, 4))
        ]
        preds = [make() for _ in range(n)]
        golds = [make() for _ in range(n)]
        report = score_corpus(preds, golds)
        want = oracle_scores(preds, golds)
        assert report.triplet["precision"] == want["p"]
        assert report.triplet["recall"] == want["r"]
        assert report.triplet["f1"] == want["f1"]
        assert report.aspect_f1 == want["aspect_f1"]
        assert report.opinion_f1 == want["opinion_f1"]
        assert report.sentiment_accuracy == want["acc"]

    for split in (train_sentences, dev_sentences):
        by_text = {s.raw_text: s for s in split}

        def replay(raw_text):
            s = by_text[raw_text]
            if not s.triplets:
                return ""
            return linearize(
                [t.as_tuple(TaskKind.ASTE) for t in s.triplets], TaskKind.ASTE
            ).text

        report = evaluate_sentences(None, split, TaskKind.ASTE, generate_fn=replay)
        assert report.triplet == {"precision": 1.0, "recall": 1.0, "f1": 1.0}
        assert report.aspect_f1 == report.opinion_f1 == 1.0
        assert report.sentiment_accuracy == 1.0
    ok("C4 metric oracle equivalence + gold replay", "(100 corpora, exact)")


# Published per-split statistics for the released benchmark files:
# (#sentences, #POS, #NEU, #NEG)
RELEASED_STATS = {
    ("lap14", "train"): (906, 817, 126, 517),
    ("lap14", "dev"): (219, 169, 36, 141),
    ("lap14", "test"): (328, 364, 63, 116),
    ("14res", "train"): (1266, 1692, 166, 480),
    ("14res", "dev"): (310, 404, 54, 119),
    ("14res", "test"): (492, 773, 66, 155),
    ("15res", "train"): (605, 783, 25, 205),
    ("15res", "dev"): (148, 185, 11, 53),
    ("15res", "test"): (322, 317, 25, 143),
    ("16res", "train"): (857, 1015, 50, 329),
    ("16res", "dev"): (210, 252, 11, 76),
    ("16res", "test"): (326, 407, 29, 78),
}


def test_c5_data_fidelity(train_path):
    data_dir = os.environ.get("ASTE_V2_DIR")
    if data_dir and Path(data_dir).is_dir():
        merged_train = []
        for (dataset, split), (n_s, n_pos, n_neu, n_neg) in RELEASED_STATS.items():
            path = Path(data_dir) / dataset / f"{split}_triplets.txt"
            sentences, summary = load_split(path, split=split)
            assert (summary.sentences, summary.pos, summary.neu, summary.neg) == (
                n_s, n_pos, n_neu, n_neg
            ), f"{dataset}/{split} counts diverge"
            if split == "train":
                merged_train.extend(sentences)
        assert len(merged_train) == 3634
        assert len(derive_prompt_examples(merged_train)) == 5039
        assert len(derive_sentence_level_examples(merged_train)) == 3358
        ok("C5 data fidelity", "(released benchmark counts)")
    else:
        sentences, summary = load_split(train_path)
        assert summary.sentences == 24
        assert (summary.pos, summary.neu, summary.neg) == (15, 5, 9)
        assert len(derive_prompt_examples(sentences)) == 29
        assert len(derive_sentence_level_examples(sentences)) == 21
        ok("C5 data fidelity", "(synthetic fixture substitute; set ASTE_V2_DIR "
                               "for the released-data check)")


def test_c6_overfit_memorization(train_sentences):
    start = time.monotonic()
    train = train_sentences[:8]
    bundle = desk_bundle(train_sentences, seed=0)
    config = FinetuneConfig(alpha=0.2, beta=0.2, learning_rate=1e-3, batch_size=8,
                            epochs=120, seed=0)
    bundle, trace = finetune(train, train, config, bundle)
    report = evaluate_sentences(bundle, train, TaskKind.ASTE)
    elapsed = time.monotonic() - start
    assert report.triplet["f1"] == 1.0
    assert report.sentiment_accuracy == 1.0
    assert elapsed < 600
    ok("C6 overfit memorization", f"(F1=1.0 within {len(trace)} epochs, {elapsed:.0f}s)")


def test_c7_multitask_wiring(train_sentences):
    bundle = desk_bundle(train_sentences, seed=1)
    examples = build_train_examples(train_sentences[:4], TaskKind.ASTE)
    ex = examples[0]

    ed = generation_loss(bundle, ex.sentence.raw_text, ex.target)
    otd = otd_loss(bundle, ex.sentence, ex.bio)
    tce = tce_loss(bundle, ex.sentence, ex.count)
    assert torch.equal(joint_loss(ed, otd, tce, 0.0, 0.0), ed)

    def encoder_grads(alpha, beta):
        b = desk_bundle(train_sentences, seed=1)
        torch.manual_seed(0)
        loss = joint_loss(
            generation_loss(b, ex.sentence.raw_text, ex.target),
            otd_loss(b, ex.sentence, ex.bio),
            tce_loss(b, ex.sentence, ex.count),
            alpha,
            beta,
        )
        loss.backward()
        return [p.grad.clone() for p in b.model.encoder.parameters()
                if p.grad is not None]

    base = encoder_grads(0.0, 0.0)
    with_otd = encoder_grads(1.0, 0.0)
    with_tce = encoder_grads(0.0, 1.0)
    assert any(not torch.allclose(a, b) for a, b in zip(base, with_otd))
    assert any(not torch.allclose(a, b) for a, b in zip(base, with_tce))

    texts_before = [generate(bundle, s.raw_text, max_len=24).text
                    for s in train_sentences[:4]]
    for p in bundle.model.tce_head.parameters():
        torch.nn.init.zeros_(p)
    texts_after = [generate(bundle, s.raw_text, max_len=24).text
                   for s in train_sentences[:4]]
    assert texts_before == texts_after
    ok("C7 multi-task wiring")


def test_c8_contrastive_separation_trend(train_sentences):
    start = time.monotonic()
    examples = derive_prompt_examples(train_sentences)
    labels = [e.label for e in examples]
    bundle = desk_bundle(train_sentences, seed=0)

    def dump():
        vecs = [
            F.normalize(
                extract_mask_embedding(e.sentence.raw_text, e.prompt, bundle), dim=0
            ).numpy()
            for e in examples
        ]
        return np.stack(vecs)

    before = silhouette_score(dump(), labels)
    config = ContrastiveConfig(batch_size=8, epochs=12, learning_rate=1e-3, seed=0)
    pretrain(examples, config, bundle)
    after = silhouette_score(dump(), labels)
    elapsed = time.monotonic() - start
    assert after > before
    assert elapsed < 900
    ok("C8 contrastive separation trend",
       f"(silhouette {before:.3f} -> {after:.3f}, {elapsed:.0f}s)")


def test_c9_tce_rounding():
    table = {2.5: 2, 1.5: 1, 1.49: 1, 1.51: 2, -0.3: 0}
    for value, expected in table.items():
        assert tce_round(value) == expected
    ok("C9 count-regressor rounding")


def test_c10_sweep_recovers_toy_optimum(tmp_path):
    start = time.monotonic()

    def toy_objective(alpha, beta):
        return 1.0 - (alpha - 0.2) ** 2 - (beta - 0.6) ** 2

    csv_path = tmp_path / "sweep.csv"
    result = two_stage_sweep(toy_objective, csv_path=csv_path)
    assert (result.best_alpha, result.best_beta) == (0.2, 0.6)
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "stage,alpha,beta,dev_f1"
    assert len(lines) == 1 + 2 * len(DEFAULT_GRID)
    elapsed = time.monotonic() - start
    assert elapsed < 300
    ok("C10 two-stage weight sweep", f"({elapsed:.1f}s)")
