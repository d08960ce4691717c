"""Command-line entry points for the full experiment lifecycle."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .contrastive import pretrain
from .corpus import (
    derive_prompt_examples,
    derive_sentence_level_examples,
    dump_corpus,
    load_split,
)
from .embeddings import export_mask_embeddings
from .experiment import (
    ExperimentConfig,
    RunManifest,
    content_hash,
    load_experiment_data,
    run_pipeline,
    run_table4,
)
from .metrics import evaluate_sentences
from .model import ModelBundle
from .multitask import finetune, generate, tce_predict_raw, tce_round
from .sweep import DEFAULT_GRID, two_stage_sweep
from .templates import TaskKind, parse

logger = logging.getLogger(__name__)


def cache_dir() -> Path:
    return Path(os.environ.get("ASTEKIT_CACHE", Path.home() / ".cache" / "astekit"))


def _load_config(args) -> ExperimentConfig:
    config = ExperimentConfig.load(args.config)
    for name in ("train_path", "dev_path", "test_path", "output_dir"):
        value = getattr(args, name.replace("_path", ""), None) if name != "output_dir" else args.output
        if value:
            setattr(config, name, value)
    return config


def cmd_ingest(args) -> int:
    sentences, summary = load_split(args.input, split=args.split)
    dump_corpus(sentences, args.output)
    print(
        f"{args.input}: {summary.sentences} sentences, "
        f"{summary.pos} POS / {summary.neu} NEU / {summary.neg} NEG triplets"
    )
    print(f"wrote corpus dump to {args.output} (hash {content_hash(args.input)})")
    return 0


def cmd_derive_prompts(args) -> int:
    sentences, _ = load_split(args.input)
    if args.sentence_level:
        rows = [
            {"sentence": s.raw_text, "label": label}
            for s, label in derive_sentence_level_examples(sentences)
        ]
    else:
        rows = [
            {"sentence": ex.sentence.raw_text, "aspect": ex.aspect,
             "prompt": ex.prompt, "label": ex.label}
            for ex in derive_prompt_examples(sentences)
        ]
    Path(args.output).write_text(
        "\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8"
    )
    print(f"{len(rows)} examples -> {args.output}")
    return 0


def cmd_pretrain(args) -> int:
    config = _load_config(args)
    run_dir = Path(config.output_dir)
    manifest = RunManifest(run_dir)
    ckpt = run_dir / "pretrain"
    if manifest.done("pretrain"):
        print(f"pretrain stage already complete in {ckpt}, skipping")
        return 0
    train, _, _ = load_experiment_data(config)
    from .experiment import build_bundle

    bundle = build_bundle(config, train, seed=config.seeds[0])
    if config.contrastive.mode == "aspect_level":
        corpus = derive_prompt_examples(train)
    else:
        corpus = derive_sentence_level_examples(train)
    _, trace = pretrain(corpus, config.contrastive, bundle, ckpt_dir=ckpt)
    manifest.mark("pretrain", [ckpt / "weights.pt"])
    print(f"pre-trained {config.contrastive.epochs} epochs; "
          f"final mean loss {trace[-1].mean_loss:.4f}" if trace else "no epochs run")
    return 0


def cmd_finetune(args) -> int:
    config = _load_config(args)
    run_dir = Path(config.output_dir)
    manifest = RunManifest(run_dir)
    ckpt = run_dir / "finetune"
    if manifest.done("finetune"):
        print(f"finetune stage already complete in {ckpt}, skipping")
        return 0
    train, dev, _ = load_experiment_data(config)
    if args.init_checkpoint:
        bundle = ModelBundle.load(args.init_checkpoint)
    else:
        from .experiment import build_bundle

        bundle = build_bundle(config, train, seed=config.seeds[0])
    fc = dataclasses.replace(config.finetune, task=config.task, seed=config.seeds[0])
    _, trace = finetune(train, dev, fc, bundle, ckpt_dir=ckpt)
    manifest.mark("finetune", [ckpt / "weights.pt"])
    best = max((e.dev_f1 for e in trace), default=0.0)
    print(f"fine-tuned {len(trace)} epochs; best dev F1 {best:.4f}")
    return 0


def cmd_evaluate(args) -> int:
    bundle = ModelBundle.load(args.checkpoint)
    sentences, _ = load_split(args.data, split="test")
    report = evaluate_sentences(bundle, sentences, bundle.task)
    print(report.to_table())
    if args.output:
        Path(args.output).write_text(report.to_json(), encoding="utf-8")
    return 0


def cmd_predict(args) -> int:
    bundle = ModelBundle.load(args.checkpoint)
    sentences, _ = load_split(args.data, split="test")
    with Path(args.output).open("w", encoding="utf-8") as fh:
        for s in sentences:
            text = generate(bundle, s.raw_text).text
            tuples, diags = parse(text, bundle.task)
            raw = tce_predict_raw(bundle, s.raw_text)
            record = {
                "sentence": s.raw_text,
                "generated_text": text,
                "parsed_tuples": [dataclasses.asdict(t) for t in tuples],
                "tce_raw": raw,
                "tce_rounded": tce_round(raw),
                "diagnostics": dataclasses.asdict(diags),
            }
            fh.write(json.dumps(record) + "\n")
    print(f"{len(sentences)} predictions -> {args.output}")
    return 0


def cmd_sweep(args) -> int:
    config = _load_config(args)
    train, dev, _ = load_experiment_data(config)
    run_dir = Path(config.output_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    grid = [float(v) for v in args.grid.split(",")] if args.grid else list(DEFAULT_GRID)

    def objective(alpha: float, beta: float) -> float:
        report = run_pipeline(
            config, train, dev, dev, seed=config.seeds[0],
            use_contrastive_init=config.ablation.use_contrastive_init,
            alpha=alpha, beta=beta,
        )
        return report.triplet["f1"]

    result = two_stage_sweep(objective, grid, grid, csv_path=run_dir / "sweep.csv")
    print(f"best alpha={result.best_alpha} beta={result.best_beta} "
          f"dev F1 {result.best_f1:.4f}; grid -> {run_dir / 'sweep.csv'}")
    return 0


def cmd_export_embeddings(args) -> int:
    bundle = ModelBundle.load(args.checkpoint)
    sentences, _ = load_split(args.data)
    examples = derive_prompt_examples(sentences)
    export_mask_embeddings(bundle, examples, args.output)
    print(f"{len(examples)} embeddings -> {args.output}")
    return 0


def cmd_run_table4(args) -> int:
    config = _load_config(args)
    results = run_table4(config)
    for row in results:
        if "error" in row:
            print(f"{row['row']}: FAILED ({row['error']})")
        else:
            print(
                f"{row['row']}: triplet {row['triplet_f1']:.3f} "
                f"aspect {row['aspect_f1']:.3f} opinion {row['opinion_f1']:.3f} "
                f"sentiment {row['sentiment_accuracy']:.3f}"
            )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="astekit")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse a data file and dump the JSON corpus")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--split", default="train")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("derive-prompts", help="derive pre-training examples")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--sentence-level", action="store_true")
    p.set_defaults(func=cmd_derive_prompts)

    for name, func, needs_init in (
        ("pretrain", cmd_pretrain, False),
        ("finetune", cmd_finetune, True),
        ("run-table4", cmd_run_table4, False),
    ):
        p = sub.add_parser(name)
        p.add_argument("config")
        p.add_argument("--train")
        p.add_argument("--dev")
        p.add_argument("--test")
        p.add_argument("--output")
        if needs_init:
            p.add_argument("--init-checkpoint")
        p.set_defaults(func=func)

    p = sub.add_parser("sweep", help="two-stage alpha/beta search on the dev set")
    p.add_argument("config")
    p.add_argument("--train")
    p.add_argument("--dev")
    p.add_argument("--test")
    p.add_argument("--output")
    p.add_argument("--grid", help="comma-separated weight grid")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("evaluate")
    p.add_argument("checkpoint")
    p.add_argument("data")
    p.add_argument("--output")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict")
    p.add_argument("checkpoint")
    p.add_argument("data")
    p.add_argument("output")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("export-embeddings")
    p.add_argument("checkpoint")
    p.add_argument("data")
    p.add_argument("output")
    p.set_defaults(func=cmd_export_embeddings)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:
        record = {"error": type(exc).__name__, "message": str(exc),
                  "command": args.command}
        print(json.dumps(record), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
