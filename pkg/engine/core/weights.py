"""
Model weights

Dense weight tensors of the toy decoder and their seeded initialization.
Tensor names are the keys of the CAPT container:

    embedding, modality_embedding, unembedding, final_norm,
    layer.<L>.w_q | w_k | w_v | w_o | w_gate | w_up | w_down | attn_norm | ffn_norm
"""

import math
from dataclasses import dataclass
from typing import Dict, List

import numpy as np

from config.model_config import ModelConfig

from ..errors import ConfigurationError
from .numeric import DTYPE, ensure_finite

LAYER_TENSORS = ("w_q", "w_k", "w_v", "w_o", "w_gate", "w_up", "w_down", "attn_norm", "ffn_norm")


@dataclass
class LayerWeights:
    """One decoder layer. Projections map row vectors: x @ W."""
    w_q: np.ndarray      # (d, d)
    w_k: np.ndarray      # (d, d)
    w_v: np.ndarray      # (d, d), head h owns columns [h*d_head, (h+1)*d_head)
    w_o: np.ndarray      # (d, d), head h owns rows [h*d_head, (h+1)*d_head)
    w_gate: np.ndarray   # (d, d_ff)
    w_up: np.ndarray     # (d, d_ff)
    w_down: np.ndarray   # (d_ff, d)
    attn_norm: np.ndarray  # (d,)
    ffn_norm: np.ndarray   # (d,)

    def value_head(self, head: int, d_head: int) -> np.ndarray:
        """W_{V,h}: (d, d_head)"""
        return self.w_v[:, head * d_head:(head + 1) * d_head]

    def output_head(self, head: int, d_head: int) -> np.ndarray:
        """W_{O,h}: (d_head, d)"""
        return self.w_o[head * d_head:(head + 1) * d_head, :]

    def shapes(self, d: int, d_ff: int) -> Dict[str, tuple]:
        return {
            "w_q": (d, d), "w_k": (d, d), "w_v": (d, d), "w_o": (d, d),
            "w_gate": (d, d_ff), "w_up": (d, d_ff), "w_down": (d_ff, d),
            "attn_norm": (d,), "ffn_norm": (d,),
        }


@dataclass
class ModelWeights:
    config: ModelConfig
    embedding: np.ndarray           # (vocab, d)
    modality_embedding: np.ndarray  # (2, d): row 0 visual, row 1 text
    unembedding: np.ndarray         # (d, vocab)
    final_norm: np.ndarray          # (d,)
    layers: List[LayerWeights]

    def validate(self) -> 'ModelWeights':
        cfg = self.config
        d, vocab = cfg.d_model, cfg.vocab_size
        expected = {
            "embedding": (vocab, d),
            "modality_embedding": (2, d),
            "unembedding": (d, vocab),
            "final_norm": (d,),
        }
        for name, shape in expected.items():
            self._check(name, getattr(self, name), shape)
        if len(self.layers) != cfg.n_layers:
            raise ConfigurationError(
                f"weights hold {len(self.layers)} layers, config expects {cfg.n_layers}"
            )
        for index, layer in enumerate(self.layers):
            for name, shape in layer.shapes(d, cfg.d_ff).items():
                self._check(f"layer.{index}.{name}", getattr(layer, name), shape)
        return self

    @staticmethod
    def _check(name: str, tensor: np.ndarray, shape: tuple) -> None:
        if tensor.shape != shape:
            raise ConfigurationError(f"{name}: expected shape {shape}, got {tensor.shape}")
        if tensor.dtype != DTYPE:
            raise ConfigurationError(f"{name}: expected float32, got {tensor.dtype}")
        ensure_finite(tensor, name)

    def to_tensors(self) -> Dict[str, np.ndarray]:
        """Ordered name -> tensor mapping for the CAPT container"""
        tensors = {
            "embedding": self.embedding,
            "modality_embedding": self.modality_embedding,
            "unembedding": self.unembedding,
            "final_norm": self.final_norm,
        }
        for index, layer in enumerate(self.layers):
            for name in LAYER_TENSORS:
                tensors[f"layer.{index}.{name}"] = getattr(layer, name)
        return tensors

    @classmethod
    def from_tensors(cls, config: ModelConfig, tensors: Dict[str, np.ndarray]) -> 'ModelWeights':
        try:
            layers = [
                LayerWeights(**{name: tensors[f"layer.{index}.{name}"] for name in LAYER_TENSORS})
                for index in range(config.n_layers)
            ]
            weights = cls(
                config=config,
                embedding=tensors["embedding"],
                modality_embedding=tensors["modality_embedding"],
                unembedding=tensors["unembedding"],
                final_norm=tensors["final_norm"],
                layers=layers,
            )
        except KeyError as exc:
            raise ConfigurationError(f"weight file lacks tensor {exc.args[0]!r}") from None
        return weights.validate()


def init_weights(config: ModelConfig) -> ModelWeights:
    """
    Deterministic weights from config.seed

    Matrices are uniform in [-1/sqrt(d), 1/sqrt(d)]; norm scales are ones.
    Tensors are drawn in container order, so equal seeds give bit-identical weights.
    """
    rng = np.random.default_rng(config.seed)
    d, d_ff, vocab = config.d_model, config.d_ff, config.vocab_size
    bound = 1.0 / math.sqrt(d)

    def uniform(*shape: int) -> np.ndarray:
        return rng.uniform(-bound, bound, size=shape).astype(DTYPE)

    embedding = uniform(vocab, d)
    modality_embedding = uniform(2, d)
    unembedding = uniform(d, vocab)
    final_norm = np.ones(d, dtype=DTYPE)
    layers = []
    for _ in range(config.n_layers):
        layers.append(LayerWeights(
            w_q=uniform(d, d),
            w_k=uniform(d, d),
            w_v=uniform(d, d),
            w_o=uniform(d, d),
            w_gate=uniform(d, d_ff),
            w_up=uniform(d, d_ff),
            w_down=uniform(d_ff, d),
            attn_norm=np.ones(d, dtype=DTYPE),
            ffn_norm=np.ones(d, dtype=DTYPE),
        ))
    return ModelWeights(config, embedding, modality_embedding, unembedding, final_norm, layers)
