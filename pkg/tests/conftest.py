"""Pytest configuration and fixtures."""

import logging
import os
import tempfile
from collections.abc import Generator

import numpy as np
import pytest

from lexseq.data import Corpus, Sentence, WordVectors
from lexseq.lexicon import LexiconTrie, build_trie
from lexseq.synthetic import SyntheticData, make_synthetic_corpus
from lexseq.types import LebertConfig, RunConfig

FIG3_WORDS = ["美国", "美国人", "国人", "人民"]


@pytest.fixture
def temp_log_dir() -> Generator[str, None, None]:
    """Create temporary directory for logs."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield tmpdir


@pytest.fixture
def temp_output_dir() -> Generator[str, None, None]:
    """Create temporary directory for run outputs."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield tmpdir


@pytest.fixture
def clean_env(monkeypatch: pytest.MonkeyPatch) -> None:
    """Clean environment variables with LEXSEQ_ prefix."""
    for key in list(os.environ.keys()):
        if key.startswith("LEXSEQ_"):
            monkeypatch.delenv(key, raising=False)


@pytest.fixture(autouse=True)
def reset_root_logger() -> Generator[None, None, None]:
    """Drop handlers installed by setup_logging so they never outlive a test."""
    root = logging.getLogger()
    before = list(root.handlers)
    level = root.level
    yield
    for handler in list(root.handlers):
        if handler not in before:
            root.removeHandler(handler)
            handler.close()
    for handler in before:
        if handler not in root.handlers:
            root.addHandler(handler)
    root.setLevel(level)


@pytest.fixture
def fig3_trie() -> LexiconTrie:
    """Trie over the four words of the 美国人民 example."""
    return build_trie(FIG3_WORDS)


@pytest.fixture
def small_model_config() -> LebertConfig:
    """Tiny model used by shape and gradient tests."""
    return LebertConfig(
        num_layers=2,
        hidden_size=8,
        word_dim=6,
        num_heads=2,
        ffn_size=16,
        max_len=16,
        adapter_layers=[1],
        dropout=0.0,
        adapter_dropout=0.0,
        initializer_range=0.3,
    )


@pytest.fixture
def synthetic() -> SyntheticData:
    """Ten-sentence synthetic BIOES corpus over a twenty-word lexicon."""
    return make_synthetic_corpus(seed=0, n_sentences=10, lexicon_size=20, word_dim=16)


@pytest.fixture
def overfit_config(temp_output_dir: str) -> RunConfig:
    """Run configuration that memorizes the synthetic corpus in 200 steps."""
    return RunConfig(
        model=LebertConfig(
            num_layers=2,
            hidden_size=32,
            word_dim=16,
            num_heads=4,
            max_len=64,
            adapter_layers=[1],
            lr_bert=5e-3,
            lr_adapter=5e-3,
            dropout=0.0,
            adapter_dropout=0.0,
        ),
        seed=7,
        epochs=20,
        batch_size=1,
        max_steps=200,
        output_dir=temp_output_dir,
    )


@pytest.fixture
def quick_config(temp_output_dir: str) -> RunConfig:
    """A few training steps on a small model."""
    return RunConfig(
        model=LebertConfig(
            num_layers=2,
            hidden_size=16,
            word_dim=16,
            num_heads=2,
            max_len=64,
            adapter_layers=[1],
            lr_bert=1e-3,
            lr_adapter=1e-3,
        ),
        seed=3,
        epochs=2,
        batch_size=4,
        output_dir=temp_output_dir,
    )


@pytest.fixture
def gpe_corpus() -> Corpus:
    """Two hand-labelled sentences over the 美国人民 characters."""
    return Corpus(
        sentences=[
            Sentence(chars=list("美国人民"), labels=["B-GPE", "E-GPE", "O", "S-PART"]),
            Sentence(chars=list("人民"), labels=["O", "S-PART"]),
        ],
        labels=["O", "B-GPE", "E-GPE", "S-PART"],
    )


@pytest.fixture
def fig3_vectors() -> WordVectors:
    """Random 6-dimensional vectors for the 美国人民 lexicon."""
    rng = np.random.default_rng(11)
    return WordVectors(words=list(FIG3_WORDS), vectors=rng.normal(0.0, 0.5, size=(4, 6)))
