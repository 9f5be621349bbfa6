"""Lexicon-enhanced transformer tagger.

The model embeds a character sequence, runs it through ``num_layers``
transformer layers and applies a lexicon adapter after every layer listed in
``adapter_layers`` (``0`` meaning directly after the embedder). A CRF head
scores label sequences over the final hidden states.

Every component draws its initial parameters from its own named generator,
so the embedder and transformer layers of a model are identical whatever the
adapter placement.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .adapter import LexiconAdapter, WordEmbedding
from .crf import CRF
from .encoder import Embedder, TransformerLayer
from .errors import CheckpointError, ShapeError, SequenceTooLongError
from .lexicon import CharWordsSeq
from .numerics import Component, Param, Tensor, component_rng, no_grad
from .optim import ParamGroupEntry
from .types import LebertConfig, ParamGroup
from .vocab import CLS_ID, SEP_ID

logger = logging.getLogger(__name__)


@dataclass
class EncodedSentence:
    """A sentence converted to model inputs.

    Attributes:
        words: Char-words pair sequence; ``words.chars`` holds the characters.
        char_ids: Character ids ``[n]``.
        label_ids: Gold label ids ``[n]`` or None when unlabelled.
    """

    words: CharWordsSeq
    char_ids: np.ndarray
    label_ids: list[int] | None = None

    def __len__(self) -> int:
        return len(self.char_ids)

    @property
    def chars(self) -> list[str]:
        return self.words.chars


class LebertModel(Component):
    """Embedder, transformer stack, lexicon adapters and CRF head."""

    def __init__(
        self,
        config: LebertConfig,
        vocab_size: int,
        labels: Sequence[str],
        word_vectors: np.ndarray,
        seed: int = 42,
    ):
        """Initialize the model.

        Args:
            config: Model configuration.
            vocab_size: Size of the character vocabulary.
            labels: Label inventory in id order.
            word_vectors: Pre-trained word vectors ``[|D|, d_w]`` without PAD.
            seed: Initialization seed.
        """
        super().__init__()
        word_vectors = np.asarray(word_vectors, dtype=np.float64)
        if word_vectors.ndim != 2 or word_vectors.shape[1] != config.word_dim:
            raise ShapeError(
                f"word vectors must be [|D|, {config.word_dim}], got {word_vectors.shape}"
            )
        self.config = config
        self.seed = seed
        self.labels = list(labels)
        std = config.initializer_range

        self.embedder = self.add_child(
            "embedder", Embedder(config, vocab_size, component_rng(seed, "embedder"))
        )
        self.layers: list[TransformerLayer] = [
            self.add_child(f"layer{k}", TransformerLayer(config, component_rng(seed, f"layer{k}")))
            for k in range(1, config.num_layers + 1)
        ]
        self.words = self.add_child(
            "words", WordEmbedding(word_vectors, trainable=config.train_word_emb)
        )
        self.adapters: dict[int, LexiconAdapter] = {
            k: self.add_child(
                f"adapter{k}", LexiconAdapter(config, self.words, component_rng(seed, f"adapter{k}"))
            )
            for k in config.adapter_layers
        }
        self.crf = self.add_child(
            "crf",
            CRF(
                self.labels,
                config.hidden_size,
                component_rng(seed, "crf"),
                std=std,
                constrain=config.constrain_transitions,
            ),
        )
        self.apply_freeze()
        logger.debug(
            f"built model: {config.num_layers} layers, adapters after {sorted(self.adapters)}, "
            f"{len(self.labels)} labels, {len(self.params())} tensors"
        )

    @property
    def pad_id(self) -> int:
        return self.words.pad_id

    def apply_freeze(self) -> None:
        """Mark parameters excluded from training as frozen."""
        for param in self.params():
            if param.group == ParamGroup.BERT:
                param.frozen = self.config.freeze_bert
        self.words.table.frozen = not self.config.train_word_emb

    def _inputs(self, sentence: EncodedSentence) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        char_ids = np.asarray(sentence.char_ids, dtype=np.int64)
        word_ids = sentence.words.word_ids
        mask = sentence.words.mask
        if word_ids.shape[0] != len(char_ids):
            raise ShapeError(f"{word_ids.shape[0]} word rows for {len(char_ids)} characters")
        if not self.config.add_special_tokens:
            return char_ids, word_ids, mask
        pad_row = np.full((1, word_ids.shape[1]), self.pad_id, dtype=np.int64)
        empty = np.zeros((1, mask.shape[1]), dtype=bool)
        return (
            np.concatenate([[CLS_ID], char_ids, [SEP_ID]]),
            np.vstack([pad_row, word_ids, pad_row]),
            np.vstack([empty, mask, empty]),
        )

    def forward(
        self,
        sentence: EncodedSentence,
        train: bool = False,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        """Hidden states ``[n, d_c]`` of the last layer.

        Raises:
            SequenceTooLongError: If the sentence, specials included, exceeds ``max_len``.
        """
        token_ids, word_ids, mask = self._inputs(sentence)
        if len(token_ids) > self.config.max_len:
            raise SequenceTooLongError(
                f"sentence of {len(token_ids)} tokens exceeds max_len {self.config.max_len}"
            )
        if len(sentence) == 0:
            raise ShapeError("cannot encode an empty sentence")
        h = self.embedder(token_ids, train=train, rng=rng)
        if 0 in self.adapters:
            h = self.adapters[0](h, word_ids, mask, train, rng)
        for k, layer in enumerate(self.layers, start=1):
            h = layer(h, train, rng)
            if k in self.adapters:
                h = self.adapters[k](h, word_ids, mask, train, rng)
        if self.config.add_special_tokens:
            h = h[1:-1]
        return h

    def emissions(
        self,
        sentence: EncodedSentence,
        train: bool = False,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        return self.crf.emissions(self.forward(sentence, train, rng))

    def neg_log_likelihood(
        self,
        batch: Sequence[EncodedSentence],
        train: bool = False,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        """Summed negative log-likelihood of the gold labels of a batch."""
        pairs = []
        for sentence in batch:
            if sentence.label_ids is None:
                raise ValueError("neg_log_likelihood needs labelled sentences")
            pairs.append((self.emissions(sentence, train, rng), sentence.label_ids))
        return self.crf.nll_loss(pairs)

    def predict(self, sentence: EncodedSentence) -> tuple[list[int], float]:
        """Viterbi label ids and path score, dropout off."""
        with no_grad():
            return self.crf.viterbi(self.emissions(sentence))

    def snapshot(self) -> dict[str, np.ndarray]:
        """Copy of every parameter value keyed by dotted name."""
        return {name: param.data.copy() for name, param in self.named_params().items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        """Overwrite parameter values from a snapshot of an identically shaped model."""
        named = self.named_params()
        missing = sorted(set(named) - set(state))
        unexpected = sorted(set(state) - set(named))
        if missing or unexpected:
            raise CheckpointError(f"parameter mismatch: missing {missing}, unexpected {unexpected}")
        for name, param in named.items():
            values = np.asarray(state[name], dtype=np.float64)
            if values.shape != param.shape:
                raise CheckpointError(
                    f"parameter {name} has shape {values.shape}, expected {param.shape}"
                )
            param.data = values.copy()


def trainable_params(model: LebertModel) -> list[ParamGroupEntry]:
    """Group the model's trainable parameters by learning rate.

    The BERT group (embedder and transformer layers) is left out entirely
    when ``freeze_bert`` is set; the word table is left out when
    ``train_word_emb`` is off. Adapters, the word table and the CRF head
    form the adapter group.
    """
    config = model.config
    bert: list[Param] = []
    adapter: list[Param] = []
    for param in model.params():
        if param.frozen:
            continue
        (bert if param.group == ParamGroup.BERT else adapter).append(param)
    groups = []
    if bert and not config.freeze_bert:
        groups.append(ParamGroupEntry(ParamGroup.BERT, config.lr_bert, bert))
    if adapter:
        groups.append(ParamGroupEntry(ParamGroup.ADAPTER, config.lr_adapter, adapter))
    return groups
