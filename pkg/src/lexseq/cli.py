"""Command-line interface: ``lexseq {match|train|eval|decode|ablate|gradcheck}``.

Every RunConfig and LebertConfig field is accepted as ``--<field>``; values
are parsed as YAML scalars and override ``--config`` and ``LEXSEQ_*``
variables. JSON lines and TSV go to stdout, logs to stderr.
"""

import argparse
import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any, TextIO

from pydantic import ValidationError

from . import __version__
from .checkpoint import load_checkpoint
from .config import build_run_config, parse_scalar
from .data import Corpus, load_conll, load_embeddings, load_lexicon, read_lines
from .errors import LexseqError
from .lexicon import assign_to_chars, match_words
from .metrics import MetricsRow, write_metrics_table
from .tracking import record, tracked
from .trainer import (
    ablate_layers,
    check_gradients,
    decode,
    evaluate,
    parse_placements,
    train,
    write_ablation_table,
)
from .types import LebertConfig, RunConfig, Split

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

CONFIG_FIELDS = [name for name in RunConfig.model_fields if name != "model"] + list(
    LebertConfig.model_fields
)


def _input_lines(path: str | None) -> list[str]:
    if path is None or path == "-":
        return sys.stdin.read().splitlines()
    with open(path, encoding="utf-8") as f:
        return f.read().splitlines()


def _load_corpus(
    path: str, split: Split, config: RunConfig, labels: Sequence[str] | None = None
) -> Corpus:
    # over-length sentences are handled at load time, specials included
    return load_conll(
        path, split, label_inventory=labels, max_len=config.model.max_chars, overflow=config.overflow
    )


def _emit_jsonl(records: Sequence[dict[str, Any]], out: TextIO) -> None:
    for item in records:
        out.write(json.dumps(item, ensure_ascii=False) + "\n")


@tracked("match")
def run_match(config: RunConfig, args: argparse.Namespace, out: TextIO) -> int:
    trie = load_lexicon(args.lexicon, min_match_len=config.model.min_match_len)
    records = []
    for sentence in read_lines(None, _input_lines(args.input)):
        matches = match_words(trie, sentence.chars, config.model.min_match_len)
        pairs = assign_to_chars(
            matches, len(sentence), config.model.max_words_per_char, trie.vocab_size, sentence.chars
        )
        records.append(
            {
                "chars": sentence.chars,
                "words": [{"w": trie.surface(m.word_id), "s": m.start, "e": m.end} for m in matches],
                "assigned": [
                    [trie.surface(w) for w in pairs.words_at(i)] for i in range(len(sentence))
                ],
            }
        )
    _emit_jsonl(records, out)
    record(sentences=len(records))
    return EXIT_OK


@tracked("train")
def run_train(config: RunConfig, args: argparse.Namespace, out: TextIO) -> int:
    model_config = config.model
    word_vectors, trie = load_embeddings(
        args.embeddings, expected_dim=model_config.word_dim, min_match_len=model_config.min_match_len
    )
    corpus = _load_corpus(args.train, Split.TRAIN, config)
    dev = None
    if args.dev:
        dev = _load_corpus(args.dev, Split.DEV, config, labels=corpus.labels)
    result = train(config, corpus, word_vectors, trie, dev_corpus=dev)
    summary = {
        "checkpoint": str(result.checkpoint_path),
        "steps": result.steps,
        "best_step": result.best_step,
        "history": str(Path(config.output_dir) / "history.tsv"),
    }
    if result.best_scores is not None:
        summary.update(result.best_scores.rounded())
    record(**summary)
    _emit_jsonl([summary], out)
    return EXIT_OK


@tracked("eval")
def run_eval(config: RunConfig, args: argparse.Namespace, out: TextIO) -> int:
    model, featurizer = load_checkpoint(args.checkpoint)
    rows = []
    for path in args.test:
        corpus = load_conll(
            path,
            Split.TEST,
            label_inventory=featurizer.labels.tokens,
            max_len=model.config.max_chars,
            overflow=config.overflow,
        )
        scores, _ = evaluate(model, featurizer, corpus)
        dataset = args.dataset or Path(path).stem
        rows.append(MetricsRow.from_scores(dataset, scores, args.baseline_f1))
        logger.info(f"{dataset}: {scores.rounded()}", extra={"extra": scores.rounded()})
    write_metrics_table(rows, out)
    record(datasets=[row.dataset for row in rows])
    return EXIT_OK


@tracked("decode")
def run_decode(config: RunConfig, args: argparse.Namespace, out: TextIO) -> int:
    model, featurizer = load_checkpoint(args.checkpoint)
    sentences = read_lines(None, _input_lines(args.input))
    decoded = decode(model, featurizer, sentences, config.overflow)
    _emit_jsonl([d.model_dump() for d in decoded], out)
    record(sentences=len(decoded))
    return EXIT_OK


@tracked("ablate")
def run_ablate(config: RunConfig, args: argparse.Namespace, out: TextIO) -> int:
    model_config = config.model
    word_vectors, trie = load_embeddings(
        args.embeddings, expected_dim=model_config.word_dim, min_match_len=model_config.min_match_len
    )
    corpus = _load_corpus(args.train, Split.TRAIN, config)
    dev = _load_corpus(args.dev, Split.DEV, config, labels=corpus.labels) if args.dev else None
    test = _load_corpus(args.test[0], Split.TEST, config, labels=corpus.labels) if args.test else None
    rows = ablate_layers(
        config, parse_placements(args.placements), corpus, word_vectors, trie, dev, test
    )
    write_ablation_table(rows, out)
    record(rows=len(rows))
    return EXIT_OK


@tracked("gradcheck")
def run_gradcheck(config: RunConfig, args: argparse.Namespace, out: TextIO) -> int:
    report = check_gradients(config, h=args.step, tol=args.tolerance, max_coords_per_param=args.max_coords)
    _emit_jsonl([report.model_dump()], out)
    record(**report.model_dump())
    return EXIT_OK if report.passed else EXIT_FAILURE


COMMANDS = {
    "match": run_match,
    "train": run_train,
    "eval": run_eval,
    "decode": run_decode,
    "ablate": run_ablate,
    "gradcheck": run_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lexseq", description="Lexicon-enhanced transformer sequence labeling."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or key=value configuration file")
    settings = common.add_argument_group("configuration overrides")
    for name in CONFIG_FIELDS:
        settings.add_argument(f"--{name}", dest=name, type=parse_scalar, default=None, metavar="VALUE")

    sub = parser.add_subparsers(dest="command", required=True)

    match = sub.add_parser("match", parents=[common], help="print lexicon matches as JSON lines")
    match.add_argument("--lexicon", required=True, help="embedding file or word list")
    match.add_argument("--input", help="one sentence per line (default: stdin)")

    train_cmd = sub.add_parser("train", parents=[common], help="train a model")
    train_cmd.add_argument("--train", required=True, help="CoNLL training corpus")
    train_cmd.add_argument("--dev", help="CoNLL dev corpus")
    train_cmd.add_argument("--embeddings", required=True, help="text embedding file (the lexicon)")

    eval_cmd = sub.add_parser("eval", parents=[common], help="score a checkpoint, TSV to stdout")
    eval_cmd.add_argument("--checkpoint", required=True)
    eval_cmd.add_argument("--test", required=True, nargs="+", help="CoNLL corpora to score")
    eval_cmd.add_argument("--dataset", help="dataset name (default: file stem)")
    eval_cmd.add_argument("--baseline-f1", dest="baseline_f1", type=float, help="baseline typed F1")

    decode_cmd = sub.add_parser("decode", parents=[common], help="label raw text as JSON lines")
    decode_cmd.add_argument("--checkpoint", required=True)
    decode_cmd.add_argument("--input", help="one sentence per line (default: stdin)")

    ablate = sub.add_parser("ablate", parents=[common], help="compare adapter placements")
    ablate.add_argument("--train", required=True)
    ablate.add_argument("--dev")
    ablate.add_argument("--test", nargs=1)
    ablate.add_argument("--embeddings", required=True)
    ablate.add_argument(
        "--placements", default="{};1;all", help="';'-separated layer sets, e.g. '{};1;2;1,2;all'"
    )

    grad = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient check")
    grad.add_argument("--step", type=float, default=1e-4)
    grad.add_argument("--tolerance", type=float, default=1e-4)
    grad.add_argument("--max-coords", dest="max_coords", type=int, default=None)

    return parser


def main(argv: Sequence[str] | None = None, out: TextIO | None = None) -> int:
    """Run the CLI and return its exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    out = out or sys.stdout
    overrides = {name: getattr(args, name) for name in CONFIG_FIELDS}
    try:
        config = build_run_config(args.config, **overrides)
        return COMMANDS[args.command](config, args, out)
    except (LexseqError, ValidationError) as e:
        message = str(e).splitlines()[0] if isinstance(e, LexseqError) else str(e)
        print(f"lexseq {args.command}: error: {message}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:
        print(f"lexseq {args.command}: failed: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
