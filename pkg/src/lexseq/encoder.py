"""Input embedder and post-norm transformer layers."""

import math

import numpy as np

from .errors import ShapeError, VocabularyError
from .numerics import (
    Component,
    Tensor,
    dropout,
    einsum,
    embedding,
    layer_norm,
    relu,
    softmax,
    truncated_normal,
)
from .types import LebertConfig


class Embedder(Component):
    """Token + segment + position embeddings, followed by layer norm and dropout."""

    def __init__(self, config: LebertConfig, vocab_size: int, rng: np.random.Generator):
        """Initialize the embedder.

        Args:
            config: Model configuration.
            vocab_size: Rows of the token table.
            rng: Generator for initialization.
        """
        super().__init__()
        d = config.hidden_size
        std = config.initializer_range
        self.config = config
        self.token = self.add_param("token", truncated_normal(rng, (vocab_size, d), std))
        self.position = self.add_param("position", truncated_normal(rng, (config.max_len, d), std))
        self.segment = self.add_param(
            "segment", truncated_normal(rng, (config.num_segments, d), std)
        )
        self.ln_gamma = self.add_param("ln_gamma", np.ones(d))
        self.ln_beta = self.add_param("ln_beta", np.zeros(d))

    def __call__(
        self,
        token_ids: np.ndarray,
        segment_ids: np.ndarray | None = None,
        position_ids: np.ndarray | None = None,
        train: bool = False,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        """Embed a sentence.

        Args:
            token_ids: Integer ids ``[n]``.
            segment_ids: Segment ids ``[n]``; zeros when omitted.
            position_ids: Position ids ``[n]``; ``0..n-1`` when omitted.
            train: Apply dropout.
            rng: Generator for dropout.

        Returns:
            Tensor ``[n, d_c]``.
        """
        token_ids = np.asarray(token_ids, dtype=np.int64)
        n = len(token_ids)
        if segment_ids is None:
            segment_ids = np.zeros(n, dtype=np.int64)
        if position_ids is None:
            position_ids = np.arange(n)
        if n > self.config.max_len or (len(position_ids) and max(position_ids) >= self.config.max_len):
            raise VocabularyError(f"position id beyond max_len {self.config.max_len}")
        if len(segment_ids) != n or len(position_ids) != n:
            raise ShapeError("token, segment and position ids must have the same length")
        summed = (
            embedding(self.token, token_ids)
            + embedding(self.position, position_ids)
            + embedding(self.segment, segment_ids)
        )
        normed = layer_norm(summed, self.ln_gamma, self.ln_beta, self.config.layer_norm_eps)
        return dropout(normed, self.config.dropout, rng, train)


class TransformerLayer(Component):
    """Bidirectional multi-head self-attention and ReLU feed-forward, post-norm residuals."""

    def __init__(self, config: LebertConfig, rng: np.random.Generator):
        super().__init__()
        d, d_ff = config.hidden_size, config.ffn_dim
        std = config.initializer_range
        self.config = config
        self.num_heads = config.num_heads
        self.head_dim = d // config.num_heads
        self.q_weight = self.add_param("q_weight", truncated_normal(rng, (d, d), std))
        self.q_bias = self.add_param("q_bias", np.zeros(d))
        self.k_weight = self.add_param("k_weight", truncated_normal(rng, (d, d), std))
        self.k_bias = self.add_param("k_bias", np.zeros(d))
        self.v_weight = self.add_param("v_weight", truncated_normal(rng, (d, d), std))
        self.v_bias = self.add_param("v_bias", np.zeros(d))
        self.o_weight = self.add_param("o_weight", truncated_normal(rng, (d, d), std))
        self.o_bias = self.add_param("o_bias", np.zeros(d))
        self.attn_ln_gamma = self.add_param("attn_ln_gamma", np.ones(d))
        self.attn_ln_beta = self.add_param("attn_ln_beta", np.zeros(d))
        self.ffn_in = self.add_param("ffn_in", truncated_normal(rng, (d, d_ff), std))
        self.ffn_in_bias = self.add_param("ffn_in_bias", np.zeros(d_ff))
        self.ffn_out = self.add_param("ffn_out", truncated_normal(rng, (d_ff, d), std))
        self.ffn_out_bias = self.add_param("ffn_out_bias", np.zeros(d))
        self.ffn_ln_gamma = self.add_param("ffn_ln_gamma", np.ones(d))
        self.ffn_ln_beta = self.add_param("ffn_ln_beta", np.zeros(d))

    def attention(
        self, x: Tensor, train: bool = False, rng: np.random.Generator | None = None
    ) -> Tensor:
        """Multi-head scaled dot-product attention, output projection included."""
        n, d = x.shape
        heads, k = self.num_heads, self.head_dim
        q = (x @ self.q_weight + self.q_bias).reshape((n, heads, k))
        key = (x @ self.k_weight + self.k_bias).reshape((n, heads, k))
        value = (x @ self.v_weight + self.v_bias).reshape((n, heads, k))
        scores = einsum("ihk,jhk->hij", q, key) * (1.0 / math.sqrt(k))
        probs = dropout(softmax(scores), self.config.dropout, rng, train)
        context = einsum("hij,jhk->ihk", probs, value).reshape((n, d))
        return context @ self.o_weight + self.o_bias

    def feed_forward(self, x: Tensor) -> Tensor:
        return relu(x @ self.ffn_in + self.ffn_in_bias) @ self.ffn_out + self.ffn_out_bias

    def __call__(
        self, x: Tensor, train: bool = False, rng: np.random.Generator | None = None
    ) -> Tensor:
        """G = LN(H + MHAttn(H)); H' = LN(G + FFN(G))."""
        eps = self.config.layer_norm_eps
        attended = dropout(self.attention(x, train, rng), self.config.dropout, rng, train)
        g = layer_norm(x + attended, self.attn_ln_gamma, self.attn_ln_beta, eps)
        fed = dropout(self.feed_forward(g), self.config.dropout, rng, train)
        return layer_norm(g + fed, self.ffn_ln_gamma, self.ffn_ln_beta, eps)
