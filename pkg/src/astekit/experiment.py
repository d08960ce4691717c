"""Experiment lifecycle plumbing: config files, run manifests, and the
ablation grid over {contrastive init, opinion tagging, count regression}."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from .contrastive import ContrastiveConfig, pretrain
from .corpus import AnnotatedSentence, derive_prompt_examples, derive_sentence_level_examples, load_split
from .metrics import EvalReport, evaluate_sentences
from .model import ModelBundle, ModelConfig
from .multitask import FinetuneConfig, finetune
from .templates import TaskKind
from .tokenizer import Tokenizer

logger = logging.getLogger(__name__)

# Ablation rows in reporting order: (contrastive init, opinion tagging, count regression)
TABLE4_ROWS = (
    (False, False, False),
    (True, False, False),
    (False, True, True),
    (True, False, True),
    (True, True, False),
    (True, True, True),
)


@dataclass
class AblationFlags:
    use_contrastive_init: bool = True
    use_otd: bool = True
    use_tce: bool = True
    scl_mode: str = "aspect_level"  # aspect_level | sentence_level | none

    def __post_init__(self):
        if self.scl_mode not in ("aspect_level", "sentence_level", "none"):
            raise ValueError(f"invalid scl_mode {self.scl_mode!r}")


@dataclass
class ExperimentConfig:
    task: TaskKind = TaskKind.ASTE
    train_path: str = ""
    dev_path: str = ""
    test_path: str = ""
    output_dir: str = "runs/default"
    seeds: list[int] = field(default_factory=lambda: [0])
    model: ModelConfig = field(default_factory=ModelConfig)
    contrastive: ContrastiveConfig = field(default_factory=ContrastiveConfig)
    finetune: FinetuneConfig = field(default_factory=FinetuneConfig)
    ablation: AblationFlags = field(default_factory=AblationFlags)

    def __post_init__(self):
        if isinstance(self.task, str):
            self.task = TaskKind(self.task)
        if isinstance(self.model, dict):
            self.model = ModelConfig(**self.model)
        if isinstance(self.contrastive, dict):
            self.contrastive = ContrastiveConfig(**self.contrastive)
        if isinstance(self.finetune, dict):
            self.finetune = FinetuneConfig(**self.finetune)
        if isinstance(self.ablation, dict):
            self.ablation = AblationFlags(**self.ablation)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["task"] = self.task.value
        d["finetune"]["task"] = self.finetune.task.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def content_hash(*paths: str | Path) -> str:
    digest = hashlib.sha256()
    for path in paths:
        p = Path(path)
        if p.is_file():
            digest.update(p.name.encode())
            digest.update(p.read_bytes())
    return digest.hexdigest()[:16]


class RunManifest:
    """Records completed stages so reruns with the same output dir skip them."""

    def __init__(self, run_dir: str | Path):
        self.run_dir = Path(run_dir)
        self.path = self.run_dir / "manifest.json"
        self.stages: dict[str, dict] = {}
        if self.path.exists():
            self.stages = json.loads(self.path.read_text(encoding="utf-8"))

    def done(self, stage: str) -> bool:
        entry = self.stages.get(stage)
        if not entry:
            return False
        return all(Path(p).exists() for p in entry.get("outputs", []))

    def mark(self, stage: str, outputs: list[str | Path] = ()) -> None:
        self.stages[stage] = {"completed": True, "outputs": [str(p) for p in outputs]}
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(self.stages, indent=1), encoding="utf-8")


def load_experiment_data(config: ExperimentConfig):
    train, _ = load_split(config.train_path, split="train")
    dev, _ = load_split(config.dev_path, split="dev") if config.dev_path else (train, None)
    test, _ = load_split(config.test_path, split="test") if config.test_path else (dev, None)
    return train, dev, test


def build_bundle(config: ExperimentConfig, train: list[AnnotatedSentence],
                 seed: int) -> ModelBundle:
    tokenizer = Tokenizer.build((s.raw_text for s in train), config.task)
    return ModelBundle.create(tokenizer, config.task, config.model, seed=seed)


def run_pipeline(
    config: ExperimentConfig,
    train: list[AnnotatedSentence],
    dev: list[AnnotatedSentence],
    test: list[AnnotatedSentence],
    seed: int,
    use_contrastive_init: bool,
    alpha: float,
    beta: float,
    ckpt_dir: Optional[Path] = None,
) -> EvalReport:
    """Optionally pre-train, then fine-tune and score the test split."""
    bundle = build_bundle(config, train, seed)
    if use_contrastive_init and config.ablation.scl_mode != "none":
        cc = dataclasses.replace(config.contrastive, seed=seed,
                                 mode=config.ablation.scl_mode)
        if cc.mode == "aspect_level":
            corpus = derive_prompt_examples(train)
        else:
            corpus = derive_sentence_level_examples(train)
        pretrain(corpus, cc, bundle,
                 ckpt_dir=ckpt_dir / "pretrain" if ckpt_dir else None)
    fc = dataclasses.replace(config.finetune, alpha=alpha, beta=beta,
                             seed=seed, task=config.task)
    finetune(train, dev, fc, bundle,
             ckpt_dir=ckpt_dir / "finetune" if ckpt_dir else None)
    return evaluate_sentences(bundle, test, config.task)


def run_table4(config: ExperimentConfig) -> list[dict]:
    """Run the six ablation rows; failures are isolated per cell."""
    train, dev, test = load_experiment_data(config)
    run_dir = Path(config.output_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    results = []
    for con, otd, tce in TABLE4_ROWS:
        row_name = f"con={int(con)}_otd={int(otd)}_tce={int(tce)}"
        alpha = config.finetune.alpha if otd else 0.0
        beta = config.finetune.beta if tce else 0.0
        try:
            report = run_pipeline(
                config, train, dev, test, seed=config.seeds[0],
                use_contrastive_init=con, alpha=alpha, beta=beta,
                ckpt_dir=run_dir / row_name,
            )
            results.append(
                {
                    "row": row_name,
                    "con": con,
                    "otd": otd,
                    "tce": tce,
                    "triplet_f1": report.triplet["f1"],
                    "aspect_f1": report.aspect_f1,
                    "opinion_f1": report.opinion_f1,
                    "sentiment_accuracy": report.sentiment_accuracy,
                }
            )
        except Exception as exc:  # per-cell isolation
            logger.exception("ablation row %s failed", row_name)
            results.append({"row": row_name, "con": con, "otd": otd, "tce": tce,
                            "error": str(exc)})
    (run_dir / "table4.json").write_text(json.dumps(results, indent=1), encoding="utf-8")
    return results
