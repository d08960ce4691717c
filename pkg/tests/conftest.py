from pathlib import Path

import pytest

from astekit.corpus import load_split
from astekit.model import ModelBundle, ModelConfig
from astekit.templates import TaskKind
from astekit.tokenizer import Tokenizer

FIXTURES = Path(__file__).parent / "fixtures"

TINY = ModelConfig(hidden_size=32, num_heads=2, num_layers=1, ffn_size=64, dropout=0.0)


@pytest.fixture(scope="session")
def train_path():
    return FIXTURES / "desk_train.txt"


@pytest.fixture(scope="session")
def dev_path():
    return FIXTURES / "desk_dev.txt"


@pytest.fixture(scope="session")
def train_sentences(train_path):
    sentences, _ = load_split(train_path, split="train")
    return sentences


@pytest.fixture(scope="session")
def dev_sentences(dev_path):
    sentences, _ = load_split(dev_path, split="dev")
    return sentences


@pytest.fixture()
def tiny_bundle(train_sentences):
    tok = Tokenizer.build((s.raw_text for s in train_sentences), TaskKind.ASTE)
    return ModelBundle.create(tok, TaskKind.ASTE, TINY, seed=7)


def make_bundle(sentences, task=TaskKind.ASTE, config=TINY, seed=7):
    tok = Tokenizer.build((s.raw_text for s in sentences), task)
    return ModelBundle.create(tok, task, config, seed=seed)
