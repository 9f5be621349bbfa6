"""Lexicon adapter: inject matched-word features into character hidden states.

For every character the assigned words are embedded, projected into the
character space (``v = W2 tanh(W1 x + b1) + b2``), weighted by bilinear
attention against the character state (``softmax(h W_attn V^T)``), summed and
added to the character state, followed by dropout and layer norm.
"""

import numpy as np

from .errors import ShapeError
from .numerics import (
    Component,
    Tensor,
    dropout,
    einsum,
    embedding,
    layer_norm,
    softmax,
    tanh,
    truncated_normal,
)
from .types import LebertConfig, ParamGroup


class WordEmbedding(Component):
    """Word vector table with a trailing all-zero PAD row."""

    def __init__(self, vectors: np.ndarray, trainable: bool = True):
        """Initialize the table.

        Args:
            vectors: Pre-trained vectors ``[|D|, d_w]`` in word-id order, PAD excluded.
            trainable: Whether the optimizer may update the table.
        """
        super().__init__()
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2:
            raise ShapeError(f"word vectors must be 2-D, got shape {vectors.shape}")
        self.pad_id = vectors.shape[0]
        self.dim = vectors.shape[1]
        table = np.vstack([vectors, np.zeros((1, self.dim))])
        self.table = self.add_param("table", table, ParamGroup.ADAPTER)
        self.table.frozen = not trainable

    def __call__(self, word_ids: np.ndarray) -> Tensor:
        return embedding(self.table, word_ids)


class LexiconAdapter(Component):
    """One adapter placement; owns its projection, attention and layer-norm parameters."""

    def __init__(
        self, config: LebertConfig, words: WordEmbedding, rng: np.random.Generator
    ):
        """Initialize the adapter.

        Args:
            config: Model configuration.
            words: Shared word table; not registered as a child.
            rng: Generator for initialization.
        """
        super().__init__()
        d_c, d_w = config.hidden_size, words.dim
        std = config.initializer_range
        group = ParamGroup.ADAPTER
        self.config = config
        self.words = words
        self.w1 = self.add_param("w1", truncated_normal(rng, (d_w, d_c), std), group)
        self.b1 = self.add_param("b1", np.zeros(d_c), group)
        self.w2 = self.add_param("w2", truncated_normal(rng, (d_c, d_c), std), group)
        self.b2 = self.add_param("b2", np.zeros(d_c), group)
        self.w_attn = self.add_param("w_attn", truncated_normal(rng, (d_c, d_c), std), group)
        self.ln_gamma = self.add_param("ln_gamma", np.ones(d_c), group)
        self.ln_beta = self.add_param("ln_beta", np.zeros(d_c), group)

    def project_words(self, x: Tensor) -> Tensor:
        """Map word vectors ``[..., d_w]`` to ``[..., d_c]``."""
        lead = x.shape[:-1]
        flat = x.reshape((int(np.prod(lead, dtype=np.int64)), x.shape[-1]))
        hidden = tanh(flat @ self.w1 + self.b1)
        projected = hidden @ self.w2 + self.b2
        return projected.reshape((*lead, projected.shape[-1]))

    def attend(self, h: Tensor, v: Tensor, mask: np.ndarray) -> tuple[Tensor, Tensor]:
        """Bilinear char-to-word attention.

        Args:
            h: Character states ``[n, d_c]``.
            v: Projected words ``[n, m, d_c]``.
            mask: Boolean ``[n, m]``; True marks a real word.

        Returns:
            Weights ``[n, m]`` (zero on padding, zero rows for word-less
            characters) and the weighted sums ``[n, d_c]``.
        """
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != v.shape[:2] or h.shape[0] != v.shape[0]:
            raise ShapeError(f"attend shapes h={h.shape} v={v.shape} mask={mask.shape}")
        has_word = mask.any(axis=-1)
        safe_mask = mask.copy()
        safe_mask[~has_word, 0] = True
        logits = einsum("nd,nmd->nm", h @ self.w_attn, v)
        weights = softmax(logits, mask=safe_mask)
        if not has_word.all():
            weights = weights * has_word[:, None].astype(np.float64)
        return weights, einsum("nm,nmd->nd", weights, v)

    def __call__(
        self,
        h: Tensor,
        word_ids: np.ndarray,
        mask: np.ndarray,
        train: bool = False,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        """LN(dropout(h + z)) for character states ``[n, d_c]`` and word ids ``[n, m]``."""
        v = self.project_words(self.words(word_ids))
        _, z = self.attend(h, v, mask)
        injected = dropout(h + z, self.config.adapter_dropout, rng, train)
        return layer_norm(injected, self.ln_gamma, self.ln_beta, self.config.layer_norm_eps)
