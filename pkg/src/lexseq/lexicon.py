"""Lexicon trie and char-words pair sequences.

A sentence is matched against the lexicon by walking the trie from every
start position; each matched word is then assigned to every character it
covers, giving each character a fixed-capacity list of word ids.

Example:
    >>> trie = build_trie(["美国", "美国人", "国人", "人民"])
    >>> [(m.start, m.end) for m in match_words(trie, list("美国人民"))]
    [(0, 1), (0, 2), (1, 2), (2, 3)]
"""

import logging
from collections.abc import Iterable, Iterator, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict

from .errors import VocabularyError

logger = logging.getLogger(__name__)


class TrieNode:
    """One character step of the trie."""

    __slots__ = ("children", "word_id")

    def __init__(self) -> None:
        self.children: dict[str, TrieNode] = {}
        self.word_id: int | None = None


class LexiconTrie:
    """Immutable prefix tree over a word vocabulary.

    Word ids are positions in the vocabulary the trie was built from, so they
    index the rows of the matching embedding table directly.
    """

    def __init__(self, vocab: Sequence[str], min_length: int = 1):
        """Build the trie.

        Args:
            vocab: Words in id order.
            min_length: Words shorter than this keep their id but are not inserted.

        Raises:
            ValueError: On empty or duplicate words.
        """
        self._root = TrieNode()
        self._surfaces: list[str] = list(vocab)
        self._ids: dict[str, int] = {}
        self.min_length = min_length
        self._size = 0
        for word_id, word in enumerate(self._surfaces):
            if not isinstance(word, str) or not word:
                raise ValueError(f"lexicon entry {word_id} is empty")
            if word in self._ids:
                raise ValueError(f"duplicate lexicon word {word!r} (ids {self._ids[word]} and {word_id})")
            self._ids[word] = word_id
            if len(word) < min_length:
                continue
            node = self._root
            for char in word:
                node = node.children.setdefault(char, TrieNode())
            node.word_id = word_id
            self._size += 1

    def __len__(self) -> int:
        """Number of words reachable in the trie."""
        return self._size

    def __contains__(self, word: object) -> bool:
        if not isinstance(word, str) or not word:
            return False
        node: TrieNode | None = self._root
        for char in word:
            node = node.children.get(char) if node is not None else None
            if node is None:
                return False
        return node is not None and node.word_id is not None

    def __iter__(self) -> Iterator[str]:
        return (w for w in self._surfaces if len(w) >= self.min_length)

    @property
    def vocab_size(self) -> int:
        """Number of word ids, including words too short to be matched."""
        return len(self._surfaces)

    @property
    def surfaces(self) -> list[str]:
        return list(self._surfaces)

    def surface(self, word_id: int) -> str:
        if not 0 <= word_id < len(self._surfaces):
            raise VocabularyError(f"word id {word_id} outside lexicon of {len(self._surfaces)}")
        return self._surfaces[word_id]

    def word_id(self, word: str) -> int | None:
        return self._ids.get(word)

    def walk(self, chars: Sequence[str], start: int) -> Iterator[tuple[int, int]]:
        """Yield ``(end, word_id)`` for every word beginning at ``start``, shortest first."""
        node = self._root
        for end in range(start, len(chars)):
            next_node = node.children.get(chars[end])
            if next_node is None:
                return
            node = next_node
            if node.word_id is not None:
                yield end, node.word_id


class MatchedWord(BaseModel):
    """A lexicon word found in a sentence; ``end`` is inclusive."""

    model_config = ConfigDict(frozen=True)

    word_id: int
    start: int
    end: int

    @property
    def length(self) -> int:
        return self.end - self.start + 1


class CharWordsSeq:
    """A sentence as (character, assigned words) pairs with padding metadata."""

    def __init__(
        self,
        chars: Sequence[str],
        word_ids: np.ndarray,
        mask: np.ndarray,
        matches: Sequence[MatchedWord] = (),
    ):
        """Initialize the sequence.

        Args:
            chars: Characters of the sentence.
            word_ids: Integer array ``[n, m_max]``; padded slots hold the PAD id.
            mask: Boolean array ``[n, m_max]``; True marks a real word.
            matches: The matches the assignment was built from.
        """
        self.chars = list(chars)
        self.word_ids = np.asarray(word_ids, dtype=np.int64)
        self.mask = np.asarray(mask, dtype=bool)
        self.matches = list(matches)

    def __len__(self) -> int:
        return len(self.chars)

    @property
    def capacity(self) -> int:
        return int(self.word_ids.shape[1])

    def words_at(self, position: int) -> list[int]:
        """Real word ids assigned to ``position``, in slot order."""
        return [int(w) for w, real in zip(self.word_ids[position], self.mask[position]) if real]

    def __repr__(self) -> str:
        return f"CharWordsSeq(n={len(self.chars)}, capacity={self.capacity}, words={int(self.mask.sum())})"


def build_trie(vocab: Iterable[str], min_length: int = 1) -> LexiconTrie:
    """Build an immutable trie from a word vocabulary.

    Args:
        vocab: Words; the position of each word is its id.
        min_length: Shortest word inserted.

    Returns:
        The trie.
    """
    trie = LexiconTrie(list(vocab), min_length=min_length)
    logger.debug(f"built lexicon trie with {len(trie)} words")
    return trie


def match_words(
    trie: LexiconTrie, chars: Sequence[str], min_length: int = 2
) -> list[MatchedWord]:
    """Find every lexicon word occurring in ``chars``.

    Args:
        trie: Lexicon.
        chars: Sentence characters.
        min_length: Shortest match reported.

    Returns:
        Matches ordered by (start, length).
    """
    matches = []
    for start in range(len(chars)):
        for end, word_id in trie.walk(chars, start):
            if end - start + 1 >= min_length:
                matches.append(MatchedWord(word_id=word_id, start=start, end=end))
    return matches


def assign_to_chars(
    matches: Sequence[MatchedWord],
    n: int,
    m_max: int = 5,
    pad_id: int = 0,
    chars: Sequence[str] | None = None,
) -> CharWordsSeq:
    """Assign each matched word to every character it covers.

    When a position is covered by more than ``m_max`` words, the earlier
    and then longer words are kept. Kept words stay in (start, length) order.

    Args:
        matches: Matches within ``[0, n)``.
        n: Sentence length.
        m_max: Word slots per character.
        pad_id: Id written into empty slots.
        chars: Characters of the sentence, kept on the result.

    Returns:
        The char-words pair sequence.
    """
    if m_max < 1:
        raise ValueError(f"m_max must be positive, got {m_max}")
    covering: list[list[MatchedWord]] = [[] for _ in range(n)]
    for match in matches:
        if match.start < 0 or match.end >= n or match.start > match.end:
            raise ValueError(f"match span ({match.start}, {match.end}) outside sentence of {n}")
        for position in range(match.start, match.end + 1):
            covering[position].append(match)

    word_ids = np.full((n, m_max), pad_id, dtype=np.int64)
    mask = np.zeros((n, m_max), dtype=bool)
    for position, words in enumerate(covering):
        if len(words) > m_max:
            words = sorted(words, key=lambda m: (m.start, -m.length))[:m_max]
        words = sorted(words, key=lambda m: (m.start, m.length))
        for slot, match in enumerate(words):
            word_ids[position, slot] = match.word_id
            mask[position, slot] = True

    return CharWordsSeq(chars if chars is not None else [""] * n, word_ids, mask, matches)
