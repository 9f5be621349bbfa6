"""Tests for the assembled lexicon-enhanced model."""

import numpy as np
import pytest
from pydantic import ValidationError

from lexseq.data import Featurizer
from lexseq.encoder import Embedder, TransformerLayer
from lexseq.errors import CheckpointError, SequenceTooLongError, ShapeError
from lexseq.lebert import LebertModel, trainable_params
from lexseq.numerics import component_rng, layer_norm
from lexseq.optim import Adam
from lexseq.types import LebertConfig, ParamGroup


def _build(config: LebertConfig, corpus, trie, vectors, seed: int = 42):
    featurizer = Featurizer.from_corpus(corpus, trie, config)
    model = LebertModel(config, len(featurizer.chars), featurizer.labels.tokens, vectors.vectors, seed)
    return model, featurizer


def _with(config: LebertConfig, **changes) -> LebertConfig:
    return LebertConfig.model_validate({**config.model_dump(), **changes})


def test_param_names_and_groups(small_model_config, gpe_corpus, fig3_trie, fig3_vectors):
    """Test the component tree and learning-rate groups."""
    model, _ = _build(small_model_config, gpe_corpus, fig3_trie, fig3_vectors)
    names = model.named_params()
    assert "embedder.token" in names
    assert "layer2.ffn_out" in names
    assert "adapter1.w_attn" in names
    assert "words.table" in names
    assert "crf.transitions" in names
    assert not any(name.startswith("adapter2") for name in names)
    bert = {n for n, p in names.items() if p.group == ParamGroup.BERT}
    assert all(n.startswith(("embedder.", "layer")) for n in bert)


def test_empty_placement_equals_plain_encoder(small_model_config, gpe_corpus, fig3_trie, fig3_vectors):
    """Test adapter_layers={} is bit-identical to an encoder stack without adapters."""
    config = _with(small_model_config, adapter_layers=[])
    model, featurizer = _build(config, gpe_corpus, fig3_trie, fig3_vectors, seed=5)
    sentence = featurizer.encode(list("美国人民"))
    embedder = Embedder(config, len(featurizer.chars), component_rng(5, "embedder"))
    layers = [TransformerLayer(config, component_rng(5, f"layer{k}")) for k in (1, 2)]
    h = embedder(sentence.char_ids)
    for layer in layers:
        h = layer(h)
    assert np.array_equal(model.forward(sentence).data, h.data)


def test_encoder_weights_do_not_depend_on_placement(small_model_config, gpe_corpus, fig3_trie, fig3_vectors):
    """Test the BERT group is identical whatever the adapter placement."""
    plain, _ = _build(_with(small_model_config, adapter_layers=[]), gpe_corpus, fig3_trie, fig3_vectors)
    multi, _ = _build(_with(small_model_config, adapter_layers=[0, 1, 2]), gpe_corpus, fig3_trie, fig3_vectors)
    plain_params, multi_params = plain.named_params(), multi.named_params()
    for name, param in plain_params.items():
        if param.group == ParamGroup.BERT:
            assert np.array_equal(param.data, multi_params[name].data)
    assert sorted(multi.adapters) == [0, 1, 2]


def test_adapter_after_first_layer_matches_composition(small_model_config, gpe_corpus, fig3_trie, fig3_vectors):
    """Test {1} with L=2 is embed -> layer1 -> adapter -> layer2."""
    model, featurizer = _build(small_model_config, gpe_corpus, fig3_trie, fig3_vectors)
    sentence = featurizer.encode(list("美国人民"))
    h = model.embedder(sentence.char_ids)
    h = model.layers[0](h)
    h = model.adapters[1](h, sentence.words.word_ids, sentence.words.mask)
    h = model.layers[1](h)
    assert np.array_equal(model.forward(sentence).data, h.data)


def test_zero_injection_reduces_to_extra_layer_norm(small_model_config, gpe_corpus, fig3_trie, fig3_vectors):
    """Test W2=0 and b2=0 leave only the adapter's layer norm."""
    model, featurizer = _build(small_model_config, gpe_corpus, fig3_trie, fig3_vectors)
    adapter = model.adapters[1]
    adapter.w2.data[:] = 0.0
    adapter.b2.data[:] = 0.0
    sentence = featurizer.encode(list("美国人民"))
    h = model.layers[0](model.embedder(sentence.char_ids))
    h = layer_norm(h, adapter.ln_gamma, adapter.ln_beta, small_model_config.layer_norm_eps)
    h = model.layers[1](h)
    np.testing.assert_allclose(model.forward(sentence).data, h.data, atol=1e-12)


def test_placement_validation():
    """Test placements inside [0, L] are accepted and others rejected."""
    config = LebertConfig(num_layers=12, hidden_size=16, adapter_layers={1, 3, 6, 9})
    assert config.adapter_layers == [1, 3, 6, 9]
    assert LebertConfig(adapter_layers="0,2").adapter_layers == [0, 2]
    assert LebertConfig(adapter_layers="{}").adapter_layers == []
    with pytest.raises(ValidationError):
        LebertConfig(num_layers=12, hidden_size=16, adapter_layers=[13])


def test_default_groups_and_learning_rates(small_model_config, gpe_corpus, fig3_trie, fig3_vectors):
    """Test two groups with lr 1e-5 and 1e-4 by default."""
    config = LebertConfig(hidden_size=8, num_heads=2, word_dim=6)
    model, _ = _build(config, gpe_corpus, fig3_trie, fig3_vectors)
    groups = trainable_params(model)
    assert [(g.group, g.lr) for g in groups] == [(ParamGroup.BERT, 1e-5), (ParamGroup.ADAPTER, 1e-4)]
    assert all(g.params for g in groups)
    adapter_ids = {id(p) for p in groups[1].params}
    assert id(model.words.table) in adapter_ids
    assert id(model.crf.weight) in adapter_ids


def test_freeze_bert_excludes_group(small_model_config, gpe_corpus, fig3_trie, fig3_vectors):
    """Test freeze_bert drops the BERT group and keeps it bit-stable over 100 steps."""
    config = _with(small_model_config, freeze_bert=True)
    model, featurizer = _build(config, gpe_corpus, fig3_trie, fig3_vectors)
    groups = trainable_params(model)
    assert [g.group for g in groups] == [ParamGroup.ADAPTER]
    before = {n: p.data.copy() for n, p in model.named_params().items() if p.group == ParamGroup.BERT}
    optimizer = Adam(groups)
    batch = featurizer.encode_corpus(gpe_corpus)
    for _ in range(100):
        optimizer.zero_grad()
        model.neg_log_likelihood(batch).backward()
        optimizer.step()
    for name, values in before.items():
        assert np.array_equal(model.named_params()[name].data, values)


def test_word_table_frozen_without_fine_tuning(small_model_config, gpe_corpus, fig3_trie, fig3_vectors):
    """Test train_word_emb=false keeps the word table bit-stable."""
    config = _with(small_model_config, train_word_emb=False)
    model, featurizer = _build(config, gpe_corpus, fig3_trie, fig3_vectors)
    groups = trainable_params(model)
    assert all(id(model.words.table) != id(p) for g in groups for p in g.params)
    before = model.words.table.data.copy()
    optimizer = Adam(groups)
    for _ in range(10):
        optimizer.zero_grad()
        model.neg_log_likelihood(featurizer.encode_corpus(gpe_corpus)).backward()
        optimizer.step()
    assert np.array_equal(model.words.table.data, before)


def test_determinism_under_fixed_seed(small_model_config, gpe_corpus, fig3_trie, fig3_vectors):
    """Test equal seeds give bit-identical losses."""
    losses = []
    for _ in range(2):
        model, featurizer = _build(small_model_config, gpe_corpus, fig3_trie, fig3_vectors, seed=9)
        losses.append(model.neg_log_likelihood(featurizer.encode_corpus(gpe_corpus)).item())
    assert losses[0] == losses[1]


def test_over_length_sentence_rejected(small_model_config, gpe_corpus, fig3_trie, fig3_vectors):
    """Test sentences beyond max_len raise."""
    model, featurizer = _build(small_model_config, gpe_corpus, fig3_trie, fig3_vectors)
    with pytest.raises(SequenceTooLongError):
        model.forward(featurizer.encode(list("美国人民") * 5))


def test_special_tokens_keep_one_row_per_character(small_model_config, gpe_corpus, fig3_trie, fig3_vectors):
    """Test [CLS]/[SEP] take positions but no output rows."""
    config = _with(small_model_config, add_special_tokens=True, max_len=6)
    model, featurizer = _build(config, gpe_corpus, fig3_trie, fig3_vectors)
    assert model.forward(featurizer.encode(list("美国人民"))).shape == (4, 8)
    with pytest.raises(SequenceTooLongError):
        model.forward(featurizer.encode(list("美国人民人")))


def test_predict_returns_label_ids(small_model_config, gpe_corpus, fig3_trie, fig3_vectors):
    """Test Viterbi output length and range."""
    model, featurizer = _build(small_model_config, gpe_corpus, fig3_trie, fig3_vectors)
    path, score = model.predict(featurizer.encode(list("美国人民")))
    assert len(path) == 4
    assert all(0 <= i < len(featurizer.labels) for i in path)
    assert np.isfinite(score)


def test_word_vector_shape_checked(small_model_config):
    """Test vectors of the wrong width are refused."""
    with pytest.raises(ShapeError):
        LebertModel(small_model_config, 5, ["O"], np.zeros((3, 7)))


def test_load_state_mismatch(small_model_config, gpe_corpus, fig3_trie, fig3_vectors):
    """Test snapshots of another architecture are refused."""
    model, _ = _build(small_model_config, gpe_corpus, fig3_trie, fig3_vectors)
    state = model.snapshot()
    state.pop("crf.bias")
    with pytest.raises(CheckpointError):
        model.load_state(state)
    state = model.snapshot()
    state["crf.bias"] = np.zeros(99)
    with pytest.raises(CheckpointError):
        model.load_state(state)
