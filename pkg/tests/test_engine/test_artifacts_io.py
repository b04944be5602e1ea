"""
Token streams, weights and the CAPT tensor container
"""

import numpy as np
import pytest

from config.model_config import ModelConfig
from engine.core.tokens import Modality, TokenStream, synthetic_stream
from engine.core.weights import ModelWeights, init_weights
from engine.errors import ConfigurationError, FormatError
from engine.infrastructure import decode_tensors, encode_tensors, read_tensors, write_tensors


class TestTokenStream:

    def test_from_segments(self):
        stream = TokenStream.from_segments([1, 2, 3], [40, 41])
        assert stream.n_visual == 3
        assert stream.n_text == 2
        assert stream.positions == (0, 1, 2, 3, 4)
        assert stream.modality[-1] is Modality.TEXT

    def test_select_keeps_original_positions(self):
        stream = TokenStream.from_segments([1, 2, 3, 4], [40])
        reduced = stream.select([4, 0, 2])
        assert reduced.ids == (1, 3, 40)
        assert reduced.positions == (0, 2, 4)

    def test_append_continues_after_last_position(self):
        stream = TokenStream.from_segments([1, 2, 3], [40]).select([0, 3])
        grown = stream.append(7)
        assert grown.positions == (0, 3, 4)
        assert grown.modality[-1] is Modality.TEXT

    def test_rejects_duplicate_positions(self):
        with pytest.raises(ConfigurationError):
            TokenStream.build([1, 2], [Modality.VISUAL, Modality.TEXT], [3, 3])

    def test_rejects_length_mismatch(self):
        with pytest.raises(ConfigurationError):
            TokenStream((1, 2), (Modality.VISUAL,), (0, 1))

    def test_dict_form(self):
        stream = TokenStream.from_segments([5, 6], [33])
        assert TokenStream.from_dict(stream.to_dict()) == stream

    def test_synthetic_stream_vocabulary_halves(self):
        stream = synthetic_stream(np.random.default_rng(0), 20, 10, 64)
        assert all(i < 32 for i in stream.ids[:20])
        assert all(32 <= i < 64 for i in stream.ids[20:])


class TestWeights:

    def test_same_seed_identical(self):
        config = ModelConfig(n_layers=2, seed=11)
        first = init_weights(config).to_tensors()
        second = init_weights(config).to_tensors()
        assert list(first) == list(second)
        for name in first:
            np.testing.assert_array_equal(first[name], second[name])

    def test_different_seeds_differ(self):
        a = init_weights(ModelConfig(n_layers=1, seed=1))
        b = init_weights(ModelConfig(n_layers=1, seed=2))
        assert not np.array_equal(a.embedding, b.embedding)

    def test_default_shapes(self):
        weights = init_weights(ModelConfig())
        assert weights.layers[0].w_down.shape == (256, 64)
        assert len(weights.layers) == 8
        bound = 1.0 / np.sqrt(64)
        assert np.all(np.abs(weights.layers[0].w_q) <= bound)

    def test_from_tensors_missing_tensor(self):
        config = ModelConfig(n_layers=2)
        tensors = init_weights(config).to_tensors()
        del tensors["layer.1.w_up"]
        with pytest.raises(ConfigurationError, match="layer.1.w_up"):
            ModelWeights.from_tensors(config, tensors)

    def test_from_tensors_wrong_shape(self):
        config = ModelConfig(n_layers=1)
        tensors = init_weights(config).to_tensors()
        tensors["final_norm"] = np.ones(3, dtype=np.float32)
        with pytest.raises(ConfigurationError):
            ModelWeights.from_tensors(config, tensors)


class TestTensorContainer:

    def test_write_then_read(self, tmp_path):
        tensors = {
            "a": np.arange(6, dtype=np.float32).reshape(2, 3),
            "b.scalar_row": np.array([0.5], dtype=np.float32),
        }
        sha = write_tensors(tmp_path / "t.capt", tensors)
        assert len(sha) == 64
        loaded = read_tensors(tmp_path / "t.capt")
        assert list(loaded) == ["a", "b.scalar_row"]
        np.testing.assert_array_equal(loaded["a"], tensors["a"])

    def test_header_layout(self):
        data = encode_tensors({"x": np.zeros((1, 2), dtype=np.float32)})
        assert data[:4] == b"CAPT"
        assert data[4:6] == (1).to_bytes(2, "little")
        assert data[6:10] == (1).to_bytes(4, "little")

    def test_same_tensors_same_bytes(self):
        weights = init_weights(ModelConfig(n_layers=1, seed=5)).to_tensors()
        assert encode_tensors(weights) == encode_tensors(dict(weights))

    def test_bad_magic(self):
        data = bytearray(encode_tensors({"x": np.ones(2, dtype=np.float32)}))
        data[:4] = b"NOPE"
        with pytest.raises(FormatError):
            decode_tensors(bytes(data))

    def test_truncated_payload(self):
        data = encode_tensors({"x": np.ones(8, dtype=np.float32)})
        with pytest.raises(FormatError):
            decode_tensors(data[:-4])

    def test_trailing_bytes(self):
        data = encode_tensors({"x": np.ones(2, dtype=np.float32)})
        with pytest.raises(FormatError):
            decode_tensors(data + b"\x00")

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_tensors(tmp_path / "absent.capt")
