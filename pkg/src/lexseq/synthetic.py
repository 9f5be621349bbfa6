"""Seeded synthetic BIOES corpora for smoke runs and tests.

Entity words are drawn from one character block and filler characters from
another, so every entity is recoverable from its characters. Multi-character
entities are lexicon words; the lexicon also holds a few filler bigrams that
never carry a label.
"""

import logging

import numpy as np
from pydantic import BaseModel, ConfigDict

from .data import Corpus, Sentence, WordVectors
from .lexicon import LexiconTrie, build_trie
from .metrics import Span, labels_from_spans
from .types import Split
from .vocab import Vocabulary

logger = logging.getLogger(__name__)

ENTITY_TYPES = ("PER", "LOC", "ORG")
ENTITY_BLOCK = 0x4E00
FILLER_BLOCK = 0x5E00
FILLER_POOL = 12


class SyntheticData(BaseModel):
    """A synthetic corpus with the word vectors and trie of its lexicon."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    corpus: Corpus
    word_vectors: WordVectors
    trie: LexiconTrie
    entities: dict[str, str]


def _disjoint_words(
    rng: np.random.Generator, block: int, count: int, lengths: tuple[int, int]
) -> list[str]:
    # no character is shared between two words
    pool = rng.permutation(count * lengths[1])
    words, used = [], 0
    for _ in range(count):
        length = int(rng.integers(lengths[0], lengths[1] + 1))
        words.append("".join(chr(block + int(k)) for k in pool[used : used + length]))
        used += length
    return words


def _filler_bigrams(rng: np.random.Generator, count: int, taken: set[str]) -> list[str]:
    words: list[str] = []
    while len(words) < count:
        first, second = rng.integers(0, FILLER_POOL, size=2)
        word = chr(FILLER_BLOCK + int(first)) + chr(FILLER_BLOCK + int(second))
        if word not in taken:
            taken.add(word)
            words.append(word)
    return words


def make_synthetic_corpus(
    seed: int = 0,
    n_sentences: int = 10,
    lexicon_size: int = 20,
    word_dim: int = 16,
    entities_per_sentence: tuple[int, int] = (1, 3),
    n_single: int = 3,
    min_match_len: int = 2,
) -> SyntheticData:
    """Generate a labelled corpus over a synthetic lexicon.

    Args:
        seed: Generator seed; equal seeds give equal data.
        n_sentences: Number of sentences.
        lexicon_size: Number of lexicon words (at least 4).
        word_dim: Width of the random word vectors.
        entities_per_sentence: Inclusive range of entities per sentence.
        n_single: Single-character entities (labelled ``S-``, never in the lexicon).
        min_match_len: Shortest lexicon word inserted into the trie.

    Returns:
        Corpus, word vectors, trie and the entity-to-type map.
    """
    if lexicon_size < 4:
        raise ValueError(f"lexicon_size must be at least 4, got {lexicon_size}")
    rng = np.random.default_rng(seed)
    n_distractors = max(1, lexicon_size // 4)
    entity_words = _disjoint_words(rng, ENTITY_BLOCK, lexicon_size - n_distractors + n_single, (2, 3))
    multi = entity_words[: lexicon_size - n_distractors]
    single = [word[0] for word in entity_words[lexicon_size - n_distractors :]]
    distractors = _filler_bigrams(rng, n_distractors, set())
    entities = {word: ENTITY_TYPES[i % len(ENTITY_TYPES)] for i, word in enumerate(multi + single)}
    candidates = multi + single

    sentences = []
    low, high = entities_per_sentence
    for _ in range(n_sentences):
        chars: list[str] = []
        spans: list[Span] = []
        for _ in range(int(rng.integers(low, high + 1))):
            filler = rng.integers(0, FILLER_POOL, size=int(rng.integers(1, 3)))
            chars.extend(chr(FILLER_BLOCK + int(k)) for k in filler)
            word = candidates[int(rng.integers(len(candidates)))]
            spans.append(Span(start=len(chars), end=len(chars) + len(word) - 1, type=entities[word]))
            chars.extend(word)
        chars.append(chr(FILLER_BLOCK + int(rng.integers(0, FILLER_POOL))))
        sentences.append(Sentence(chars=chars, labels=labels_from_spans(spans, len(chars))))

    words = multi + distractors
    vectors = rng.normal(0.0, 0.5, size=(len(words), word_dim))
    inventory = Vocabulary.for_labels(
        ["O"] + [f"{prefix}-{kind}" for prefix in "BIES" for kind in ENTITY_TYPES]
    ).tokens
    corpus = Corpus(sentences=sentences, split=Split.TRAIN, labels=inventory)
    logger.debug(f"synthetic corpus: {n_sentences} sentences, {len(words)} lexicon words, seed {seed}")
    return SyntheticData(
        corpus=corpus,
        word_vectors=WordVectors(words=words, vectors=vectors),
        trie=build_trie(words, min_length=min_match_len),
        entities=entities,
    )
