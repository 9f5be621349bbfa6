"""Integration tests for lexseq.

These tests validate end-to-end workflows through files on disk.
"""

import io
from pathlib import Path

import pytest

from lexseq import (
    load_checkpoint,
    load_conll,
    load_embeddings,
    make_synthetic_corpus,
    train,
)
from lexseq.data import read_lines, write_conll, write_embeddings
from lexseq.metrics import MetricsRow, read_metrics_table, write_metrics_table
from lexseq.trainer import (
    ABLATION_FILE,
    HISTORY_FILE,
    ablate_layers,
    decode_with_checkpoint,
    evaluate,
    read_history,
)
from lexseq.types import Split


@pytest.fixture
def corpus_files(tmp_path):
    """Train/dev/test corpora and an embedding file from one synthetic lexicon."""
    data = make_synthetic_corpus(seed=5, n_sentences=24, lexicon_size=20, word_dim=16)
    sentences = data.corpus.sentences
    paths = {}
    for name, part in (("train", sentences[:16]), ("dev", sentences[16:20]), ("test", sentences[20:])):
        paths[name] = tmp_path / f"{name}.txt"
        write_conll(part, paths[name])
    paths["labels"] = data.corpus.labels
    paths["vectors"] = tmp_path / "vectors.txt"
    write_embeddings(data.word_vectors, paths["vectors"])
    return paths


class TestCompleteWorkflows:
    """Train, save, reload, score and decode from files."""

    def test_train_then_reload_and_score(self, corpus_files, quick_config):
        """Test a checkpoint scores the test set exactly like the in-memory model."""
        word_vectors, trie = load_embeddings(corpus_files["vectors"], expected_dim=16)
        train_corpus = load_conll(corpus_files["train"], Split.TRAIN, label_inventory=corpus_files["labels"])
        dev = load_conll(corpus_files["dev"], Split.DEV, label_inventory=train_corpus.labels)
        test = load_conll(corpus_files["test"], Split.TEST, label_inventory=train_corpus.labels)

        result = train(quick_config, train_corpus, word_vectors, trie, dev_corpus=dev)

        output_dir = Path(quick_config.output_dir)
        history = read_history(output_dir / HISTORY_FILE)
        assert [row.step for row in history] == [row.step for row in result.history]
        assert all(row.dev_typed_f1 is not None for row in history)

        model, featurizer = load_checkpoint(result.checkpoint_path)
        in_memory, predictions = evaluate(result.model, result.featurizer, test)
        reloaded, reloaded_predictions = evaluate(model, featurizer, test)
        assert in_memory == reloaded
        assert predictions == reloaded_predictions

        out = io.StringIO()
        write_metrics_table([MetricsRow.from_scores("synthetic", reloaded, 50.0)], out)
        table = output_dir / "metrics.tsv"
        table.write_text(out.getvalue(), encoding="utf-8")
        (row,) = read_metrics_table(table)
        assert row.dataset == "synthetic"
        assert row.error_reduction_vs_baseline is not None

    def test_decode_raw_text_with_checkpoint(self, corpus_files, quick_config, tmp_path):
        """Test decoding raw lines with a saved checkpoint."""
        word_vectors, trie = load_embeddings(corpus_files["vectors"])
        result = train(quick_config, load_conll(corpus_files["train"]), word_vectors, trie)
        raw = tmp_path / "raw.txt"
        test = load_conll(corpus_files["test"])
        raw.write_text("\n".join(s.text for s in test.sentences), encoding="utf-8")

        decoded = decode_with_checkpoint(result.checkpoint_path, read_lines(raw))

        assert [d.text for d in decoded] == [s.text for s in test.sentences]
        assert all(len(d.labels) == len(d.text) for d in decoded)

    def test_dev_carved_from_training_data(self, corpus_files, quick_config):
        """Test dev_fraction scores a held-out share when no dev file is given."""
        word_vectors, trie = load_embeddings(corpus_files["vectors"])
        config = quick_config.model_copy(update={"dev_fraction": 0.25})
        result = train(config, load_conll(corpus_files["train"]), word_vectors, trie, save=False)
        assert result.best_scores is not None
        assert all(row.dev_span_f1 is not None for row in result.history)


class TestAblationWorkflow:
    """Ablation runs written under one output directory."""

    def test_ablation_writes_runs_and_table(self, corpus_files, quick_config):
        """Test each placement gets its own run directory and a table row."""
        word_vectors, trie = load_embeddings(corpus_files["vectors"])
        corpus = load_conll(corpus_files["train"], label_inventory=corpus_files["labels"])
        dev = load_conll(corpus_files["dev"], Split.DEV, label_inventory=corpus.labels)
        config = quick_config.model_copy(update={"epochs": 1})

        rows = ablate_layers(config, [[], "all"], corpus, word_vectors, trie, dev)

        output_dir = Path(config.output_dir)
        assert [row.placement for row in rows] == ["none", "all"]
        assert rows[1].layers == [1, 2]
        assert (output_dir / "0_none" / HISTORY_FILE).exists()
        assert (output_dir / "1_all" / "best.npz").exists()
        lines = (output_dir / ABLATION_FILE).read_text(encoding="utf-8").splitlines()
        assert len(lines) == 3
        assert lines[1].startswith("none\t-\t")
        assert lines[2].startswith("all\t1,2\t")
