"""Training loop, evaluation, decoding and the adapter-placement ablation."""

import csv
import logging
import math
from collections.abc import Sequence
from pathlib import Path
from typing import TextIO

import numpy as np
from pydantic import BaseModel, ConfigDict

from .checkpoint import load_checkpoint, save_checkpoint
from .data import Corpus, Featurizer, Sentence, WordVectors, carve_dev, split_for_length
from .errors import NumericalError, SequenceTooLongError, ShapeError, TrainingDivergedError
from .lebert import LebertModel, trainable_params
from .lexicon import LexiconTrie, build_trie
from .metrics import Span, SpanScores, check_label_scheme, extract_spans, score_labels
from .numerics import GradcheckReport, component_rng, gradcheck, no_grad
from .optim import Adam
from .types import LebertConfig, OverflowPolicy, RunConfig, parse_layer_set
from .utils import ensure_dir
from .vocab import Vocabulary

logger = logging.getLogger(__name__)

HISTORY_FILE = "history.tsv"
HISTORY_COLUMNS = ("step", "epoch", "train_loss", "dev_span_f1", "dev_type_acc", "dev_typed_f1")
BEST_CHECKPOINT = "best.npz"
ABLATION_FILE = "ablation.tsv"
ALL_LAYERS = "all"


class HistoryRow(BaseModel):
    """One evaluation point of a training run."""

    step: int
    epoch: int
    train_loss: float
    dev_span_f1: float | None = None
    dev_type_acc: float | None = None
    dev_typed_f1: float | None = None


class TrainResult(BaseModel):
    """Trained model (best weights restored), its featurizer and the metric history."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    model: LebertModel
    featurizer: Featurizer
    history: list[HistoryRow]
    best_step: int
    best_scores: SpanScores | None = None
    checkpoint_path: Path | None = None
    steps: int


def _check_lexicon(config: LebertConfig, word_vectors: WordVectors, trie: LexiconTrie) -> None:
    if word_vectors.dim != config.word_dim:
        raise ShapeError(f"word vectors have dim {word_vectors.dim}, config word_dim is {config.word_dim}")
    if len(word_vectors) != trie.vocab_size:
        raise ShapeError(f"{len(word_vectors)} word vectors for a lexicon of {trie.vocab_size} words")


def _check_fits(corpus: Corpus, config: LebertConfig) -> None:
    limit = config.max_chars
    for index, sentence in enumerate(corpus.sentences):
        if len(sentence) > limit:
            raise SequenceTooLongError(
                f"{corpus.split.value} sentence {index} has {len(sentence)} chars; "
                f"max_len {config.max_len} leaves room for {limit}"
            )


def batch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    """Shuffled sentence order of one epoch; a pure function of (seed, epoch)."""
    return np.random.default_rng([seed, epoch]).permutation(n)


def evaluate(
    model: LebertModel, featurizer: Featurizer, corpus: Corpus
) -> tuple[SpanScores, list[list[str]]]:
    """Viterbi-decode every sentence of ``corpus`` and score it against the gold labels.

    Returns:
        Scores and the predicted label sequences.

    Raises:
        SequenceTooLongError: Before decoding, if any sentence does not fit ``max_len``.
    """
    _check_fits(corpus, model.config)
    predictions: list[list[str]] = []
    gold: list[list[str]] = []
    with no_grad():
        for sentence in corpus.sentences:
            if sentence.labels is None:
                raise ValueError("evaluation needs labelled sentences")
            path, _ = model.predict(featurizer.encode(sentence.chars))
            predictions.append(featurizer.decode_labels(path))
            gold.append(sentence.labels)
    return score_labels(gold, predictions), predictions


def write_history(rows: Sequence[HistoryRow], path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, delimiter="\t", lineterminator="\n")
        writer.writerow(HISTORY_COLUMNS)
        for row in rows:
            values = row.model_dump()
            writer.writerow(["" if values[c] is None else values[c] for c in HISTORY_COLUMNS])


def read_history(path: str | Path) -> list[HistoryRow]:
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f, delimiter="\t")
        return [
            HistoryRow.model_validate({k: (v if v != "" else None) for k, v in row.items()})
            for row in reader
        ]


def train(
    config: RunConfig,
    corpus: Corpus,
    word_vectors: WordVectors,
    trie: LexiconTrie,
    dev_corpus: Corpus | None = None,
    save: bool = True,
) -> TrainResult:
    """Train a model with mini-batch Adam on the summed sentence NLL.

    The sentence order of every epoch is a seeded shuffle. The dev set is
    scored once per epoch (or every ``eval_every`` steps); the weights with
    the best dev typed F1 are kept, written to ``best.npz`` and restored into
    the returned model. Without a dev set the last weights are kept.

    Args:
        config: Run configuration.
        corpus: Training corpus; its label inventory becomes the model's.
        word_vectors: Pre-trained vectors of the lexicon words.
        trie: Lexicon built from the same vocabulary.
        dev_corpus: Optional dev corpus; carved from ``corpus`` when absent
            and ``dev_fraction`` is set.
        save: Write the history and best checkpoint into ``output_dir``.

    Returns:
        The training result.

    Raises:
        SequenceTooLongError: Before the first step, if a train or dev sentence
            does not fit ``max_len`` (specials included).
        VocabularyError: On labels outside the configured label scheme.
        TrainingDivergedError: When a batch produces non-finite values.
    """
    model_config = config.model
    _check_lexicon(model_config, word_vectors, trie)
    if dev_corpus is None and config.dev_fraction is not None:
        corpus, dev_corpus = carve_dev(corpus, config.dev_fraction, config.seed)
    _check_fits(corpus, model_config)
    if dev_corpus is not None:
        _check_fits(dev_corpus, model_config)

    featurizer = Featurizer.from_corpus(corpus, trie, model_config)
    check_label_scheme(featurizer.labels.tokens)
    model = LebertModel(
        model_config, len(featurizer.chars), featurizer.labels.tokens, word_vectors.vectors, config.seed
    )
    optimizer = Adam(
        trainable_params(model),
        beta1=config.adam_beta1,
        beta2=config.adam_beta2,
        eps=config.adam_eps,
        weight_decay=config.weight_decay,
        max_grad_norm=config.max_grad_norm,
    )
    encoded = featurizer.encode_corpus(corpus)
    dropout_rng = component_rng(config.seed, "dropout")
    output_dir = ensure_dir(config.output_dir) if save else None
    logger.info(
        f"training on {len(encoded)} sentences, adapters after {model_config.adapter_layers}, "
        f"{sum(len(g.params) for g in optimizer.groups)} trainable tensors"
    )

    history: list[HistoryRow] = []
    best_state: dict[str, np.ndarray] | None = None
    best_scores: SpanScores | None = None
    best_step = 0
    step = 0
    loss_sum, loss_count = 0.0, 0

    def record_point(epoch: int) -> None:
        nonlocal best_state, best_scores, best_step, loss_sum, loss_count
        row = HistoryRow(step=step, epoch=epoch, train_loss=loss_sum / max(loss_count, 1))
        if dev_corpus is not None:
            scores, _ = evaluate(model, featurizer, dev_corpus)
            row.dev_span_f1 = float(scores.span_f1)
            row.dev_type_acc = float(scores.type_acc)
            row.dev_typed_f1 = float(scores.typed_f1)
            if best_scores is None or scores.typed_f1 > best_scores.typed_f1:
                best_state, best_scores, best_step = model.snapshot(), scores, step
        else:
            best_state, best_step = model.snapshot(), step
        history.append(row)
        loss_sum, loss_count = 0.0, 0
        logger.info(
            f"step {step} epoch {epoch}: loss {row.train_loss:.4f}, dev typed F1 {row.dev_typed_f1}",
            extra={"extra": row.model_dump()},
        )

    done = False
    for epoch in range(1, config.epochs + 1):
        order = batch_order(config.seed, epoch, len(encoded))
        for start in range(0, len(order), config.batch_size):
            batch = [encoded[i] for i in order[start : start + config.batch_size]]
            batch_id = start // config.batch_size
            optimizer.zero_grad()
            try:
                loss = model.neg_log_likelihood(batch, train=True, rng=dropout_rng)
                loss.backward()
                if not math.isfinite(optimizer.grad_norm()):
                    raise NumericalError("non-finite gradient")
            except NumericalError as e:
                logger.error(f"divergence in batch {batch_id} of epoch {epoch}: {e}")
                raise TrainingDivergedError(batch_id, epoch, step + 1) from e
            optimizer.step()
            step += 1
            loss_sum += loss.item()
            loss_count += len(batch)
            if config.eval_every is not None and step % config.eval_every == 0:
                record_point(epoch)
            if config.max_steps is not None and step >= config.max_steps:
                done = True
                break
        if config.eval_every is None and (not history or history[-1].step != step):
            record_point(epoch)
        if done:
            break

    if not history or history[-1].step != step:
        record_point(epoch)
    if best_state is not None:
        model.load_state(best_state)

    checkpoint_path = None
    if output_dir is not None:
        write_history(history, output_dir / HISTORY_FILE)
        checkpoint_path = save_checkpoint(output_dir / BEST_CHECKPOINT, model, featurizer)
    logger.info(f"training finished after {step} steps; best step {best_step}")
    return TrainResult(
        model=model,
        featurizer=featurizer,
        history=history,
        best_step=best_step,
        best_scores=best_scores,
        checkpoint_path=checkpoint_path,
        steps=step,
    )


class DecodedSpan(Span):
    text: str


class DecodedSentence(BaseModel):
    """One line of ``decode`` output."""

    text: str
    labels: list[str]
    spans: list[DecodedSpan]


def decode(
    model: LebertModel,
    featurizer: Featurizer,
    sentences: Sequence[Sentence],
    overflow: OverflowPolicy = OverflowPolicy.REJECT,
) -> list[DecodedSentence]:
    """Label raw sentences and extract their spans.

    Over-length sentences raise with ``overflow=reject``; otherwise they are
    decoded in consecutive ``max_len`` chunks whose labels are concatenated.

    Raises:
        SequenceTooLongError: On an over-length sentence with ``overflow=reject``.
    """
    limit = model.config.max_chars
    results = []
    for sentence in sentences:
        if len(sentence) > limit and overflow == OverflowPolicy.REJECT:
            raise SequenceTooLongError(
                f"sentence of {len(sentence)} chars exceeds max_len {model.config.max_len}"
            )
        labels: list[str] = []
        for chunk in split_for_length(sentence.chars, limit):
            path, _ = model.predict(featurizer.encode(chunk))
            labels.extend(featurizer.decode_labels(path))
        spans = [
            DecodedSpan(
                start=s.start, end=s.end, type=s.type, text="".join(sentence.chars[s.start : s.end + 1])
            )
            for s in extract_spans(labels)
        ]
        results.append(DecodedSentence(text=sentence.text, labels=labels, spans=spans))
    return results


def decode_with_checkpoint(
    checkpoint_path: str | Path,
    sentences: Sequence[Sentence],
    overflow: OverflowPolicy = OverflowPolicy.REJECT,
) -> list[DecodedSentence]:
    model, featurizer = load_checkpoint(checkpoint_path)
    return decode(model, featurizer, sentences, overflow)


class AblationRow(BaseModel):
    """One adapter placement of the ablation table."""

    placement: str
    layers: list[int]
    best_step: int
    dev_span_f1: float | None = None
    dev_typed_f1: float | None = None
    test_span_f1: float | None = None
    test_type_acc: float | None = None
    test_typed_f1: float | None = None


ABLATION_COLUMNS = tuple(AblationRow.model_fields)


def parse_placements(text: str) -> list[list[int] | str]:
    """Parse ``;``-separated placements such as ``"{};1;2;1,2;all"``."""
    placements: list[list[int] | str] = []
    for part in text.split(";"):
        part = part.strip()
        placements.append(ALL_LAYERS if part.lower() == ALL_LAYERS else parse_layer_set(part))
    return placements


def placement_label(placement: Sequence[int] | str) -> str:
    """``all`` for the literal, otherwise ``none``, ``one`` or ``multi`` by size."""
    if isinstance(placement, str):
        return ALL_LAYERS
    return {0: "none", 1: "one"}.get(len(placement), "multi")


def ablate_layers(
    config: RunConfig,
    placements: Sequence[Sequence[int] | str],
    corpus: Corpus,
    word_vectors: WordVectors,
    trie: LexiconTrie,
    dev_corpus: Corpus | None = None,
    test_corpus: Corpus | None = None,
    save: bool = True,
) -> list[AblationRow]:
    """Train one model per adapter placement and report dev/test scores.

    Each run uses the same seed and data as a single ``train`` call with that
    placement would. Runs are written to ``<output_dir>/<index>_<label>``.
    """
    num_layers = config.model.num_layers
    rows = []
    for index, placement in enumerate(placements):
        layers = list(range(1, num_layers + 1)) if placement == ALL_LAYERS else parse_layer_set(placement)
        label = placement_label(placement)
        model_config = LebertConfig.model_validate({**config.model.model_dump(), "adapter_layers": layers})
        run_config = RunConfig.model_validate(
            {
                **config.model_dump(),
                "model": model_config.model_dump(),
                "output_dir": str(Path(config.output_dir) / f"{index}_{label}"),
            }
        )
        logger.info(f"ablation run {index}: {label} {layers}")
        result = train(run_config, corpus, word_vectors, trie, dev_corpus, save=save)
        row = AblationRow(placement=label, layers=layers, best_step=result.best_step)
        if result.best_scores is not None:
            row.dev_span_f1 = float(result.best_scores.span_f1)
            row.dev_typed_f1 = float(result.best_scores.typed_f1)
        if test_corpus is not None:
            scores, _ = evaluate(result.model, result.featurizer, test_corpus)
            row.test_span_f1 = float(scores.span_f1)
            row.test_type_acc = float(scores.type_acc)
            row.test_typed_f1 = float(scores.typed_f1)
        rows.append(row)
    if save:
        path = ensure_dir(config.output_dir) / ABLATION_FILE
        with open(path, "w", encoding="utf-8", newline="") as f:
            write_ablation_table(rows, f)
    return rows


def _cell(value: object) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.2f}"
    return str(value)


def write_ablation_table(rows: Sequence[AblationRow], stream: TextIO) -> None:
    """Write the ablation rows as TSV; an empty layer set is written as ``-``."""
    writer = csv.writer(stream, delimiter="\t", lineterminator="\n")
    writer.writerow(ABLATION_COLUMNS)
    for row in rows:
        values = row.model_dump()
        values["layers"] = ",".join(str(k) for k in row.layers) or "-"
        writer.writerow([_cell(values[c]) for c in ABLATION_COLUMNS])


GRADCHECK_WORDS = ("美国", "美国人", "人民")
GRADCHECK_SENTENCE = (("美", "B-GPE"), ("国", "E-GPE"), ("人", "O"), ("民", "S-PART"))


def check_gradients(
    config: RunConfig,
    h: float = 1e-4,
    tol: float = 1e-4,
    max_coords_per_param: int | None = None,
) -> GradcheckReport:
    """Finite-difference check of the full NLL on a four-character sentence with three matched words.

    Dropout is switched off; every parameter of the model is checked.
    """
    model_config = LebertConfig.model_validate(
        {**config.model.model_dump(), "dropout": 0.0, "adapter_dropout": 0.0}
    )
    rng = component_rng(config.seed, "gradcheck")
    vectors = WordVectors(
        words=list(GRADCHECK_WORDS),
        vectors=rng.normal(0.0, 0.5, size=(len(GRADCHECK_WORDS), model_config.word_dim)),
    )
    trie = build_trie(vectors.words, min_length=model_config.min_match_len)
    chars = [c for c, _ in GRADCHECK_SENTENCE]
    labels = [label for _, label in GRADCHECK_SENTENCE]
    corpus = Corpus(
        sentences=[Sentence(chars=chars, labels=labels)],
        labels=Vocabulary.for_labels(labels).tokens,
    )
    featurizer = Featurizer.from_corpus(corpus, trie, model_config)
    model = LebertModel(
        model_config, len(featurizer.chars), featurizer.labels.tokens, vectors.vectors, config.seed
    )
    sentence = featurizer.encode(chars, labels)
    logger.info(
        f"gradient check over {len(model.named_params())} tensors, "
        f"{len(sentence.words.matches)} matched words"
    )
    return gradcheck(
        lambda: model.neg_log_likelihood([sentence]),
        model.named_params(),
        h=h,
        tol=tol,
        max_coords_per_param=max_coords_per_param,
        rng=rng,
    )
