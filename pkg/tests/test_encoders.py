"""Encoder configs, weight init, forward passes, freezing, persistence."""

import numpy as np
import pytest

from febench import ComputationRecord, Tensor, backward
from febench import ops
from febench.encoders import (Encoder, EncoderConfig, EncoderWeights,
                              WeightMismatchError, encoder_forward,
                              expected_shapes, init_weights, load_weights,
                              param_count, preset_config, save_weights)
from febench.text import EmbeddingTable, Vocabulary


def tiny_config(**overrides):
    base = dict(kind="transformer", hidden=8, vocab_size=12, layers=1,
                heads=2, max_positions=10)
    base.update(overrides)
    return EncoderConfig(**base)


class TestConfig:
    def test_ff_defaults_to_four_h(self):
        assert tiny_config().ff_size == 32

    def test_heads_must_divide_hidden(self):
        with pytest.raises(ValueError, match="divisible"):
            tiny_config(heads=3)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            EncoderConfig(kind="recurrent", hidden=8, vocab_size=10)


class TestParamCount:
    def test_static(self):
        config = EncoderConfig(kind="static", hidden=8, vocab_size=100)
        assert param_count(config) == 800

    def test_embeddings_only_transformer(self):
        """(100 + 16) x 8 token/position rows plus 2 x 8 embedding norm."""
        config = EncoderConfig(kind="transformer", hidden=8, vocab_size=100,
                               layers=0, heads=2, max_positions=16)
        assert param_count(config) == 944

    def test_blocks_scale_linearly_in_layers(self):
        one = param_count(tiny_config(layers=1))
        two = param_count(tiny_config(layers=2))
        zero = param_count(tiny_config(layers=0))
        assert two - one == one - zero

    def test_matches_actual_tensor_sizes(self):
        config = tiny_config(layers=2)
        weights = init_weights(config, seed=0)
        total = sum(t.size for t in weights.tensors.values())
        assert total == param_count(config)


class TestInitWeights:
    def test_deterministic(self):
        a = init_weights(tiny_config(), seed=3)
        b = init_weights(tiny_config(), seed=3)
        assert a.byte_image() == b.byte_image()

    def test_seeds_differ(self):
        a = init_weights(tiny_config(), seed=3)
        b = init_weights(tiny_config(), seed=4)
        assert a.byte_image() != b.byte_image()

    def test_norm_scales_are_ones_biases_zero(self):
        weights = init_weights(tiny_config(), seed=0)
        for name, t in weights.tensors.items():
            if name.endswith("norm.scale"):
                np.testing.assert_array_equal(t.data, 1.0)
            elif name.endswith((".bias", "norm.offset")):
                np.testing.assert_array_equal(t.data, 0.0)

    def test_weights_are_float32(self):
        weights = init_weights(tiny_config(), seed=0)
        assert all(t.dtype == np.float32 for t in weights.tensors.values())


class TestWeightValidation:
    def test_missing_tensor(self):
        config = tiny_config()
        arrays = {n: np.zeros(s, dtype=np.float32)
                  for n, s in expected_shapes(config).items()}
        arrays.pop("embedding_norm.scale")
        with pytest.raises(WeightMismatchError, match="missing"):
            EncoderWeights.from_arrays(config, arrays)

    def test_extra_tensor(self):
        config = tiny_config()
        arrays = {n: np.zeros(s, dtype=np.float32)
                  for n, s in expected_shapes(config).items()}
        arrays["stray"] = np.zeros(3, dtype=np.float32)
        with pytest.raises(WeightMismatchError, match="unexpected"):
            EncoderWeights.from_arrays(config, arrays)

    def test_wrong_shape(self):
        config = tiny_config()
        arrays = {n: np.zeros(s, dtype=np.float32)
                  for n, s in expected_shapes(config).items()}
        arrays["token_embedding"] = np.zeros((12, 9), dtype=np.float32)
        with pytest.raises(WeightMismatchError, match="token_embedding"):
            EncoderWeights.from_arrays(config, arrays)


class TestForward:
    def test_static_returns_table_rows(self):
        config = EncoderConfig(kind="static", hidden=4, vocab_size=6)
        weights = init_weights(config, seed=1)
        ids = np.array([2, 5, 0, 3])
        with ComputationRecord():
            out = encoder_forward(config, weights, ids, valid_length=4)
        np.testing.assert_array_equal(out.data,
                                      weights.tensors["token_embedding"].data[ids])

    def test_zero_layer_transformer_is_normalized_embedding(self):
        config = tiny_config(layers=0)
        weights = init_weights(config, seed=2)
        ids = np.array([2, 4, 7, 3, 0])
        with ComputationRecord():
            out = encoder_forward(config, weights, ids, valid_length=4)
        summed = (weights.tensors["token_embedding"].data[ids]
                  + weights.tensors["position_embedding"].data[:5])
        mean = summed.mean(axis=-1, keepdims=True)
        var = summed.var(axis=-1, keepdims=True)
        expected = (summed - mean) / np.sqrt(var + 1e-12)
        np.testing.assert_allclose(out.data, expected, rtol=1e-5, atol=1e-6)

    def test_output_shape(self):
        config = tiny_config(layers=2)
        weights = init_weights(config, seed=0)
        with ComputationRecord():
            out = encoder_forward(config, weights, np.arange(10) % 12,
                                  valid_length=6)
        assert out.shape == (10, 8)

    def test_sequence_longer_than_positions_rejected(self):
        config = tiny_config()
        weights = init_weights(config, seed=0)
        from febench import ShapeMismatchError
        with pytest.raises(ShapeMismatchError, match="positions"):
            with ComputationRecord():
                encoder_forward(config, weights, np.zeros(11, dtype=np.int64), 5)

    def test_padding_rows_do_not_change_valid_prefix(self):
        """Swapping PAD-position token ids leaves rows before valid_length intact."""
        config = tiny_config(layers=2)
        weights = init_weights(config, seed=6)
        ids_a = np.array([2, 4, 5, 3, 0, 0, 0, 0])
        ids_b = np.array([2, 4, 5, 3, 9, 9, 9, 9])
        with ComputationRecord():
            out_a = encoder_forward(config, weights, ids_a, valid_length=4)
            out_b = encoder_forward(config, weights, ids_b, valid_length=4)
        np.testing.assert_allclose(out_a.data[:4], out_b.data[:4],
                                   rtol=1e-5, atol=1e-6)


class TestFreezing:
    def test_frozen_encoder_absent_from_gradient_map(self):
        config = tiny_config()
        encoder = Encoder.build(config, seed=0)
        encoder.set_trainable(False)
        probe = Tensor(np.ones((8, 1), dtype=np.float32), requires_grad=True)
        with ComputationRecord():
            hidden = encoder.forward(np.array([2, 5, 3, 0]), valid_length=3)
            assert not hidden.requires_grad
            grads = backward(ops.sum_all(ops.matmul(hidden, probe)))
        encoder_tids = {t.tid for t in encoder.weights.tensors.values()}
        assert encoder_tids.isdisjoint(grads)
        assert probe.tid in grads

    def test_trainable_encoder_fully_in_gradient_map(self):
        config = tiny_config()
        encoder = Encoder.build(config, seed=0)
        encoder.set_trainable(True)
        with ComputationRecord():
            hidden = encoder.forward(np.array([2, 5, 3, 0]), valid_length=3)
            grads = backward(ops.sum_all(ops.tanh(hidden)))
        for name, t in encoder.weights.tensors.items():
            assert t.tid in grads, name

    def test_freeze_toggle_updates_config(self):
        encoder = Encoder.build(tiny_config(), seed=0)
        encoder.set_trainable(False)
        assert encoder.frozen and encoder.config.frozen
        encoder.set_trainable(True)
        assert not encoder.frozen and not encoder.config.frozen


class TestPresets:
    @pytest.mark.parametrize("name,hidden,layers,heads", [
        ("tiny", 128, 2, 2), ("L-2", 768, 2, 12),
        ("L-12", 128, 12, 2), ("base", 768, 12, 12)])
    def test_grid_dimensions(self, name, hidden, layers, heads):
        config = preset_config(name, vocab_size=50)
        assert (config.hidden, config.layers, config.heads) == (hidden, layers, heads)
        assert config.ff_size == 4 * hidden
        assert config.max_positions == 200

    def test_static_preset(self):
        config = preset_config("static", vocab_size=50)
        assert config.kind == "static"

    def test_unknown_preset(self):
        with pytest.raises(ValueError, match="unknown preset"):
            preset_config("huge", vocab_size=50)


class TestPersistence:
    def test_round_trip_bit_exact(self, tmp_path):
        config = tiny_config(layers=2)
        weights = init_weights(config, seed=11)
        path = tmp_path / "enc.feb"
        save_weights(weights, path)
        loaded = load_weights(path, config)
        assert loaded.byte_image() == weights.byte_image()

    def test_load_raw_arrays(self, tmp_path):
        weights = init_weights(tiny_config(), seed=11)
        path = tmp_path / "enc.feb"
        save_weights(weights, path)
        arrays = load_weights(path)
        assert set(arrays) == set(weights.tensors)

    def test_load_against_wrong_config(self, tmp_path):
        weights = init_weights(tiny_config(layers=1), seed=0)
        path = tmp_path / "enc.feb"
        save_weights(weights, path)
        with pytest.raises(WeightMismatchError):
            load_weights(path, tiny_config(layers=2))


class TestEmbeddingTableEncoder:
    def test_wraps_table_rows(self):
        vocab = Vocabulary({"<pad>": 0, "<unk>": 1, "<cls>": 2, "<sep>": 3,
                            "cat": 4})
        matrix = np.zeros((5, 3), dtype=np.float32)
        matrix[4] = [1.0, 2.0, 3.0]
        encoder = Encoder.from_embedding_table(
            EmbeddingTable(vocab=vocab, matrix=matrix), frozen=True)
        with ComputationRecord():
            out = encoder.forward(np.array([4, 0]), valid_length=2)
        np.testing.assert_array_equal(out.data[0], [1.0, 2.0, 3.0])
        assert encoder.frozen
