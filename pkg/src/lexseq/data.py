"""Corpus and embedding readers, writers and featurization."""

import logging
from collections.abc import Iterable, Sequence
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import DataFormatError, SequenceTooLongError, VocabularyError
from .lebert import EncodedSentence
from .lexicon import LexiconTrie, assign_to_chars, build_trie, match_words
from .types import LebertConfig, OverflowPolicy, Split
from .vocab import Vocabulary

logger = logging.getLogger(__name__)


class Sentence(BaseModel):
    """Characters with optional gold labels."""

    chars: list[str]
    labels: list[str] | None = None

    @model_validator(mode="after")
    def _check_lengths(self) -> "Sentence":
        if not self.chars:
            raise ValueError("sentence is empty")
        if self.labels is not None and len(self.labels) != len(self.chars):
            raise ValueError(f"{len(self.chars)} chars but {len(self.labels)} labels")
        return self

    def __len__(self) -> int:
        return len(self.chars)

    @property
    def text(self) -> str:
        return "".join(self.chars)


class Corpus(BaseModel):
    """Sentences of one split with the label inventory they are checked against."""

    sentences: list[Sentence] = Field(default_factory=list)
    split: Split = Split.TRAIN
    labels: list[str] = Field(default_factory=list)

    def __len__(self) -> int:
        return len(self.sentences)


def _check_length(
    chars: list[str],
    labels: list[str],
    max_len: int | None,
    overflow: OverflowPolicy,
    where: str,
) -> list[tuple[list[str], list[str]]]:
    if max_len is None or len(chars) <= max_len:
        return [(chars, labels)]
    if overflow == OverflowPolicy.REJECT:
        raise SequenceTooLongError(f"{where}: sentence of {len(chars)} chars exceeds max_len {max_len}")
    if overflow == OverflowPolicy.TRUNCATE:
        logger.warning(f"{where}: truncating sentence of {len(chars)} chars to {max_len}")
        return [(chars[:max_len], labels[:max_len])]
    return [
        (chars[i : i + max_len], labels[i : i + max_len]) for i in range(0, len(chars), max_len)
    ]


def load_conll(
    path: str | Path,
    split: Split = Split.TRAIN,
    label_inventory: Sequence[str] | None = None,
    max_len: int | None = None,
    overflow: OverflowPolicy = OverflowPolicy.REJECT,
) -> Corpus:
    """Read a ``char<TAB>label`` corpus; blank lines separate sentences.

    Args:
        path: UTF-8 file.
        split: Split the corpus belongs to.
        label_inventory: Known labels; None derives the inventory from the file.
        max_len: Longest accepted sentence; None disables the check.
        overflow: What to do with longer sentences.

    Returns:
        The corpus.

    Raises:
        DataFormatError: On malformed lines or an empty file.
        VocabularyError: On a label missing from ``label_inventory``.
        SequenceTooLongError: On an over-length sentence with ``overflow=reject``.
    """
    path = Path(path)
    if not path.exists():
        raise DataFormatError("file not found", str(path))
    known = set(label_inventory) if label_inventory is not None else None
    sentences: list[Sentence] = []
    chars: list[str] = []
    labels: list[str] = []
    first_line = 0

    def flush() -> None:
        if not chars:
            return
        for piece_chars, piece_labels in _check_length(
            list(chars), list(labels), max_len, overflow, f"{path}:{first_line}"
        ):
            sentences.append(Sentence(chars=piece_chars, labels=piece_labels))
        chars.clear()
        labels.clear()

    with open(path, encoding="utf-8-sig") as f:
        for line_number, raw in enumerate(f, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                flush()
                continue
            fields = line.split("\t")
            if len(fields) != 2 or not fields[0] or not fields[1].strip():
                raise DataFormatError(
                    f"expected 'char<TAB>label', got {len(fields)} column(s)", str(path), line_number
                )
            if len(fields[0]) != 1:
                raise DataFormatError(
                    f"expected a single character, got {fields[0]!r}", str(path), line_number
                )
            label = fields[1].strip()
            if known is not None and label not in known:
                raise VocabularyError(f"{path}:{line_number}: unknown label {label!r}")
            if not chars:
                first_line = line_number
            chars.append(fields[0])
            labels.append(label)
    flush()

    if not sentences:
        raise DataFormatError("corpus is empty", str(path))
    inventory = (
        list(label_inventory)
        if label_inventory is not None
        else Vocabulary.for_labels(label for s in sentences for label in s.labels or []).tokens
    )
    logger.info(f"loaded {len(sentences)} {split.value} sentences from {path}")
    return Corpus(sentences=sentences, split=split, labels=inventory)


def write_conll(corpus: Corpus | Iterable[Sentence], path: str | Path) -> None:
    """Write labelled sentences in the format load_conll reads."""
    sentences = corpus.sentences if isinstance(corpus, Corpus) else corpus
    with open(path, "w", encoding="utf-8") as f:
        for sentence in sentences:
            if sentence.labels is None:
                raise ValueError("write_conll needs labelled sentences")
            for char, label in zip(sentence.chars, sentence.labels):
                f.write(f"{char}\t{label}\n")
            f.write("\n")


def read_lines(path: str | Path | None, lines: Iterable[str] | None = None) -> list[Sentence]:
    """Unlabelled sentences, one per non-blank line, from a file or an iterable."""
    if lines is None:
        if path is None:
            raise ValueError("read_lines needs a path or lines")
        with open(path, encoding="utf-8-sig") as f:
            lines = f.read().splitlines()
    return [Sentence(chars=list(line.strip())) for line in lines if line.strip()]


class WordVectors(BaseModel):
    """Pre-trained word vectors in file order; word ids are row indices."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    words: list[str]
    vectors: np.ndarray

    @model_validator(mode="after")
    def _check_shape(self) -> "WordVectors":
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.words):
            raise ValueError(f"{len(self.words)} words but vectors of shape {self.vectors.shape}")
        return self

    def __len__(self) -> int:
        return len(self.words)

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    @property
    def pad_id(self) -> int:
        return len(self.words)

    @property
    def table(self) -> np.ndarray:
        """Vectors with the zero PAD row appended."""
        return np.vstack([self.vectors, np.zeros((1, self.dim))])


def load_embeddings(
    path: str | Path, expected_dim: int | None = None, min_match_len: int = 2
) -> tuple[WordVectors, LexiconTrie]:
    """Read a text embedding file: a ``count dim`` header, then ``word v1 ... vdim`` lines.

    The lexicon is exactly the file's vocabulary; words shorter than
    ``min_match_len`` keep a row but are never matched.

    Raises:
        DataFormatError: On a bad header, a wrong float count, a duplicate
            word, a count mismatch or a dimension other than ``expected_dim``.
    """
    path = Path(path)
    if not path.exists():
        raise DataFormatError("file not found", str(path))
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines:
        raise DataFormatError("embedding file is empty", str(path))
    header = lines[0].split()
    try:
        count, dim = (int(v) for v in header)
    except ValueError as e:
        raise DataFormatError(f"header must be 'count dim', got {lines[0]!r}", str(path), 1) from e
    if expected_dim is not None and dim != expected_dim:
        raise DataFormatError(f"embedding dim {dim} does not match word_dim {expected_dim}", str(path), 1)

    words: list[str] = []
    rows: list[list[float]] = []
    seen: dict[str, int] = {}
    for line_number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        word, values = parts[0], parts[1:]
        if len(values) != dim:
            raise DataFormatError(f"expected {dim} values for {word!r}, got {len(values)}", str(path), line_number)
        if word in seen:
            raise DataFormatError(f"duplicate word {word!r} (first on line {seen[word]})", str(path), line_number)
        try:
            rows.append([float(v) for v in values])
        except ValueError as e:
            raise DataFormatError(f"non-numeric value for {word!r}", str(path), line_number) from e
        seen[word] = line_number
        words.append(word)
    if len(words) != count:
        raise DataFormatError(f"header announces {count} words, found {len(words)}", str(path))

    vectors = np.array(rows, dtype=np.float64).reshape(len(words), dim)
    trie = build_trie(words, min_length=min_match_len)
    logger.info(f"loaded {len(words)} word vectors of dim {dim} ({len(trie)} matchable) from {path}")
    return WordVectors(words=words, vectors=vectors), trie


def write_embeddings(vectors: WordVectors, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{len(vectors)} {vectors.dim}\n")
        for word, row in zip(vectors.words, vectors.vectors):
            f.write(word + " " + " ".join(repr(float(v)) for v in row) + "\n")


def load_lexicon(path: str | Path, min_match_len: int = 2) -> LexiconTrie:
    """Trie from an embedding file (detected by its ``count dim`` header) or a word list."""
    with open(path, encoding="utf-8") as f:
        first = f.readline().split()
    if len(first) == 2 and all(token.isdigit() for token in first):
        return load_embeddings(path, min_match_len=min_match_len)[1]
    with open(path, encoding="utf-8") as f:
        words = list(dict.fromkeys(line.strip() for line in f if line.strip()))
    return build_trie(words, min_length=min_match_len)


class Featurizer:
    """Turns sentences into model inputs: char ids, assigned words and label ids."""

    def __init__(
        self,
        chars: Vocabulary,
        labels: Vocabulary,
        trie: LexiconTrie,
        max_words_per_char: int = 5,
        min_match_len: int = 2,
    ):
        self.chars = chars
        self.labels = labels
        self.trie = trie
        self.max_words_per_char = max_words_per_char
        self.min_match_len = min_match_len

    @property
    def pad_id(self) -> int:
        return self.trie.vocab_size

    @classmethod
    def from_corpus(cls, corpus: Corpus, trie: LexiconTrie, config: LebertConfig) -> "Featurizer":
        return cls(
            Vocabulary.for_chars(c for s in corpus.sentences for c in s.chars),
            Vocabulary(corpus.labels),
            trie,
            config.max_words_per_char,
            config.min_match_len,
        )

    def encode(self, chars: Sequence[str], labels: Sequence[str] | None = None) -> EncodedSentence:
        chars = list(chars)
        matches = match_words(self.trie, chars, self.min_match_len)
        words = assign_to_chars(matches, len(chars), self.max_words_per_char, self.pad_id, chars)
        label_ids = self.labels.ids(labels) if labels is not None else None
        return EncodedSentence(
            words=words, char_ids=np.array(self.chars.ids(chars), dtype=np.int64), label_ids=label_ids
        )

    def encode_corpus(self, corpus: Corpus) -> list[EncodedSentence]:
        return [self.encode(s.chars, s.labels) for s in corpus.sentences]

    def decode_labels(self, label_ids: Sequence[int]) -> list[str]:
        return [self.labels.token(i) for i in label_ids]


def carve_dev(corpus: Corpus, fraction: float, seed: int) -> tuple[Corpus, Corpus]:
    """Split a seeded share of ``corpus`` off as a dev set; order is preserved in both parts."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"dev fraction must be in (0, 1), got {fraction}")
    if len(corpus) < 2:
        raise ValueError("need at least two sentences to carve a dev set")
    n_dev = min(len(corpus) - 1, max(1, round(fraction * len(corpus))))
    chosen = set(np.random.default_rng(seed).permutation(len(corpus))[:n_dev].tolist())
    train = [s for i, s in enumerate(corpus.sentences) if i not in chosen]
    dev = [s for i, s in enumerate(corpus.sentences) if i in chosen]
    logger.info(f"carved {len(dev)} dev sentences out of {len(corpus)}")
    return (
        Corpus(sentences=train, split=Split.TRAIN, labels=corpus.labels),
        Corpus(sentences=dev, split=Split.DEV, labels=corpus.labels),
    )


def split_for_length(chars: Sequence[str], max_len: int) -> list[list[str]]:
    """Consecutive chunks of at most ``max_len`` characters."""
    return [list(chars[i : i + max_len]) for i in range(0, len(chars), max_len)]
