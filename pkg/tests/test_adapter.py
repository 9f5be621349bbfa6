"""Tests for the lexicon adapter."""

import numpy as np
import pytest

from lexseq.adapter import LexiconAdapter, WordEmbedding
from lexseq.errors import VocabularyError
from lexseq.lexicon import assign_to_chars, match_words
from lexseq.numerics import Tensor, gradcheck
from lexseq.types import LebertConfig, ParamGroup


def _ln(x: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    centered = x - x.mean(axis=-1, keepdims=True)
    return centered / np.sqrt((centered**2).mean(axis=-1, keepdims=True) + eps)


def _adapter(config: LebertConfig, n_words: int = 4, seed: int = 0) -> LexiconAdapter:
    rng = np.random.default_rng(seed)
    words = WordEmbedding(rng.normal(size=(n_words, config.word_dim)))
    return LexiconAdapter(config, words, rng)


@pytest.fixture
def tiny_config() -> LebertConfig:
    """d_w=3, d_c=2 adapter configuration."""
    return LebertConfig(hidden_size=2, num_heads=1, word_dim=3, adapter_dropout=0.0, initializer_range=0.5)


def test_word_embedding_appends_zero_pad_row():
    """Test the PAD row id and value."""
    words = WordEmbedding(np.ones((3, 4)), trainable=False)
    assert words.pad_id == 3
    assert words.table.shape == (4, 4)
    assert not words.table.data[3].any()
    assert words.table.frozen
    assert words.table.group == ParamGroup.ADAPTER


def test_project_words_zero_first_layer_gives_b2(tiny_config):
    """Test W1=0, b1=0 makes the projection equal b2."""
    adapter = _adapter(tiny_config)
    adapter.w1.data[:] = 0.0
    adapter.b1.data[:] = 0.0
    adapter.b2.data[:] = [0.25, -1.5]
    out = adapter.project_words(Tensor(np.random.default_rng(1).normal(size=(5, 3))))
    np.testing.assert_allclose(out.data, np.tile([0.25, -1.5], (5, 1)))


def test_project_words_zero_second_layer_gives_b2(tiny_config):
    """Test W2=0 makes the projection equal b2 for any input."""
    adapter = _adapter(tiny_config)
    adapter.w2.data[:] = 0.0
    out = adapter.project_words(Tensor(np.random.default_rng(2).normal(size=(2, 4, 3))))
    np.testing.assert_allclose(out.data, np.broadcast_to(adapter.b2.data, (2, 4, 2)))


def test_project_words_matches_loop_oracle(tiny_config):
    """Test v = W2 tanh(W1 x + b1) + b2 against loops."""
    adapter = _adapter(tiny_config, seed=3)
    adapter.b1.data[:] = [0.1, -0.2]
    adapter.b2.data[:] = [0.3, 0.4]
    x = np.random.default_rng(4).normal(size=3)
    hidden = [
        np.tanh(sum(x[i] * adapter.w1.data[i, j] for i in range(3)) + adapter.b1.data[j])
        for j in range(2)
    ]
    expected = [
        sum(hidden[i] * adapter.w2.data[i, j] for i in range(2)) + adapter.b2.data[j]
        for j in range(2)
    ]
    np.testing.assert_allclose(adapter.project_words(Tensor(x[None, :])).data[0], expected, atol=1e-12)


def test_attend_single_word_gets_full_weight(tiny_config):
    """Test a lone real word gets weight one for any W_attn."""
    adapter = _adapter(tiny_config)
    v = Tensor(np.array([[[3.0, -1.0]]]))
    weights, z = adapter.attend(Tensor([[0.5, 2.0]]), v, np.array([[True]]))
    np.testing.assert_array_equal(weights.data, [[1.0]])
    np.testing.assert_allclose(z.data, [[3.0, -1.0]])


def test_attend_hand_example(tiny_config):
    """Test h=[1,0], W_attn=I, V=[[2,0],[0,2]]."""
    adapter = _adapter(tiny_config)
    adapter.w_attn.data[:] = np.eye(2)
    v = Tensor(np.array([[[2.0, 0.0], [0.0, 2.0]]]))
    weights, z = adapter.attend(Tensor([[1.0, 0.0]]), v, np.array([[True, True]]))
    np.testing.assert_allclose(weights.data, [[0.8808, 0.1192]], atol=1e-4)
    a = weights.data[0]
    np.testing.assert_allclose(z.data, [a[0] * np.array([2.0, 0.0]) + a[1] * np.array([0.0, 2.0])])


def test_attend_all_masked_gives_zero(tiny_config):
    """Test a character without words gets z = 0 and zero weights."""
    adapter = _adapter(tiny_config)
    v = Tensor(np.random.default_rng(5).normal(size=(2, 3, 2)))
    mask = np.array([[False, False, False], [True, False, False]])
    weights, z = adapter.attend(Tensor(np.ones((2, 2))), v, mask)
    assert not weights.data[0].any()
    assert not z.data[0].any()
    assert weights.data[1].tolist() == [1.0, 0.0, 0.0]


def test_attend_matches_softmax_oracle(tiny_config):
    """Test weights on 1,000 random instances against a brute-force masked softmax."""
    adapter = _adapter(tiny_config)
    rng = np.random.default_rng(6)
    for _ in range(1000):
        m = int(rng.integers(1, 6))
        h = rng.normal(size=(1, 2))
        v = rng.normal(size=(1, m, 2))
        mask = rng.random((1, m)) < 0.7
        mask[0, int(rng.integers(m))] = True
        weights, _ = adapter.attend(Tensor(h), Tensor(v), mask)
        logits = [float(h[0] @ adapter.w_attn.data @ v[0, j]) for j in range(m)]
        exps = [np.exp(logits[j]) if mask[0, j] else 0.0 for j in range(m)]
        np.testing.assert_allclose(weights.data[0], np.array(exps) / sum(exps), atol=1e-12)
        assert (weights.data[0][~mask[0]] == 0.0).all()


def test_attend_permuting_words_permutes_weights(tiny_config):
    """Test permutation equivariance of the word list."""
    adapter = _adapter(tiny_config)
    rng = np.random.default_rng(7)
    h, v = rng.normal(size=(1, 2)), rng.normal(size=(1, 4, 2))
    mask = np.ones((1, 4), dtype=bool)
    perm = np.array([2, 0, 3, 1])
    base, z1 = adapter.attend(Tensor(h), Tensor(v), mask)
    permuted, z2 = adapter.attend(Tensor(h), Tensor(v[:, perm]), mask)
    np.testing.assert_allclose(permuted.data[0], base.data[0][perm], atol=1e-12)
    np.testing.assert_allclose(z2.data, z1.data, atol=1e-12)


def test_adapter_without_words_is_layer_norm(tiny_config):
    """Test all-masked input with identity affine gives LN(h)."""
    adapter = _adapter(tiny_config)
    h = np.array([[1.0, 3.0], [-2.0, 0.5]])
    out = adapter(Tensor(h), np.full((2, 2), 4), np.zeros((2, 2), dtype=bool))
    np.testing.assert_allclose(out.data, _ln(h), atol=1e-9)


def test_adapter_with_zero_projection_is_layer_norm(tiny_config):
    """Test W2=0 and b2=0 remove the injection."""
    adapter = _adapter(tiny_config)
    adapter.w2.data[:] = 0.0
    adapter.b2.data[:] = 0.0
    h = np.array([[1.0, 3.0], [-2.0, 0.5]])
    out = adapter(Tensor(h), np.array([[0, 1], [2, 4]]), np.array([[True, True], [True, False]]))
    np.testing.assert_allclose(out.data, _ln(h), atol=1e-9)


def test_adapter_rejects_bad_word_id(tiny_config):
    """Test word ids beyond the table are refused."""
    adapter = _adapter(tiny_config)
    with pytest.raises(VocabularyError):
        adapter(Tensor(np.ones((1, 2))), np.array([[9]]), np.array([[True]]))


def test_pad_rows_never_influence_output(fig3_trie, fig3_vectors):
    """Test perturbing the PAD row leaves the output bit-identical."""
    config = LebertConfig(hidden_size=8, num_heads=2, word_dim=6, adapter_dropout=0.0)
    words = WordEmbedding(fig3_vectors.vectors)
    adapter = LexiconAdapter(config, words, np.random.default_rng(0))
    chars = list("美国人民的")
    pairs = assign_to_chars(match_words(fig3_trie, chars), len(chars), 5, words.pad_id, chars)
    h = Tensor(np.random.default_rng(1).normal(size=(5, 8)))
    before = adapter(h, pairs.word_ids, pairs.mask).data
    words.table.data[words.pad_id] = np.random.default_rng(2).normal(size=6) * 100
    after = adapter(h, pairs.word_ids, pairs.mask).data
    assert np.array_equal(before, after)


def test_fig3_position_weights(fig3_trie, fig3_vectors):
    """Test the 国 position: three real weights summing to one, PAD weights zero."""
    config = LebertConfig(hidden_size=8, num_heads=2, word_dim=6, adapter_dropout=0.0)
    words = WordEmbedding(fig3_vectors.vectors)
    adapter = LexiconAdapter(config, words, np.random.default_rng(0))
    chars = list("美国人民")
    pairs = assign_to_chars(match_words(fig3_trie, chars), 4, 5, words.pad_id, chars)
    h = Tensor(np.random.default_rng(3).normal(size=(4, 8)))
    v = adapter.project_words(words(pairs.word_ids))
    weights, _ = adapter.attend(h, v, pairs.mask)
    row = weights.data[1]
    assert (row[3:] == 0.0).all()
    assert row[:3].sum() == pytest.approx(1.0, abs=1e-12)
    assert np.isfinite(adapter(h, pairs.word_ids, pairs.mask).data).all()


def test_adapter_gradcheck(fig3_trie, fig3_vectors):
    """Test gradients through projection, attention, injection and the word table."""
    config = LebertConfig(
        hidden_size=8, num_heads=2, word_dim=6, adapter_dropout=0.0, initializer_range=0.3
    )
    words = WordEmbedding(fig3_vectors.vectors)
    adapter = LexiconAdapter(config, words, np.random.default_rng(4))
    chars = list("美国人民")
    pairs = assign_to_chars(match_words(fig3_trie, chars), 4, 5, words.pad_id, chars)
    h = Tensor(np.random.default_rng(5).normal(size=(4, 8)))
    weights = np.random.default_rng(6).normal(size=(4, 8))
    params = {**adapter.named_params(), "table": words.table}
    report = gradcheck(lambda: (adapter(h, pairs.word_ids, pairs.mask) * weights).sum(), params)
    assert report.passed, report


def test_adapter_params_are_adapter_group(tiny_config):
    """Test every adapter parameter is in the adapter group and the word table is not a child."""
    adapter = _adapter(tiny_config)
    params = adapter.named_params()
    assert set(params) == {"w1", "b1", "w2", "b2", "w_attn", "ln_gamma", "ln_beta"}
    assert {p.group for p in params.values()} == {ParamGroup.ADAPTER}
    assert adapter.w1.shape == (3, 2)
