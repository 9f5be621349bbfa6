"""Token and label vocabularies."""

from collections.abc import Iterable, Sequence

from .errors import VocabularyError

UNK_TOKEN = "[UNK]"
CLS_TOKEN = "[CLS]"
SEP_TOKEN = "[SEP]"
SPECIAL_TOKENS = (UNK_TOKEN, CLS_TOKEN, SEP_TOKEN)
UNK_ID, CLS_ID, SEP_ID = 0, 1, 2

OUTSIDE_LABEL = "O"


class Vocabulary:
    """Bidirectional mapping between strings and dense ids."""

    def __init__(self, tokens: Sequence[str], unknown: str | None = None):
        """Initialize the vocabulary.

        Args:
            tokens: Tokens in id order; must be unique.
            unknown: Token returned for unseen strings; None makes lookups strict.
        """
        self.tokens = list(tokens)
        self._ids = {token: i for i, token in enumerate(self.tokens)}
        if len(self._ids) != len(self.tokens):
            raise ValueError("vocabulary tokens must be unique")
        if unknown is not None and unknown not in self._ids:
            raise ValueError(f"unknown token {unknown!r} is not in the vocabulary")
        self.unknown = unknown

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: object) -> bool:
        return token in self._ids

    def id(self, token: str) -> int:
        if token in self._ids:
            return self._ids[token]
        if self.unknown is None:
            raise VocabularyError(f"{token!r} is not in the vocabulary")
        return self._ids[self.unknown]

    def ids(self, tokens: Iterable[str]) -> list[int]:
        return [self.id(t) for t in tokens]

    def token(self, index: int) -> str:
        if not 0 <= index < len(self.tokens):
            raise VocabularyError(f"id {index} outside vocabulary of {len(self.tokens)}")
        return self.tokens[index]

    @classmethod
    def for_chars(cls, chars: Iterable[str]) -> "Vocabulary":
        """Character vocabulary with the special tokens first, then first-seen order."""
        seen = dict.fromkeys(SPECIAL_TOKENS)
        for char in chars:
            seen.setdefault(char)
        return cls(list(seen), unknown=UNK_TOKEN)

    @classmethod
    def for_labels(cls, labels: Iterable[str]) -> "Vocabulary":
        """Strict label inventory: ``O`` first (when present), then sorted."""
        unique = set(labels)
        ordered = ([OUTSIDE_LABEL] if OUTSIDE_LABEL in unique else []) + sorted(
            unique - {OUTSIDE_LABEL}
        )
        return cls(ordered)
