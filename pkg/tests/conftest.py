"""
Shared fixtures: a small seeded model, a prompt and a calibration set
"""

import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

# Add project root to path for imports
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from config.model_config import ModelConfig  # noqa: E402
from engine.core.model import DecoderModel  # noqa: E402
from engine.core.tokens import synthetic_stream  # noqa: E402
from engine.core.weights import ModelWeights, init_weights  # noqa: E402

N_IMG = 12
N_TXT = 4


@pytest.fixture
def small_config():
    return ModelConfig(n_layers=4, d_model=32, d_ff=64, n_heads=4, vocab_size=64,
                       max_seq=128, seed=3)


@pytest.fixture
def small_weights(small_config):
    return init_weights(small_config)


@pytest.fixture
def small_model(small_weights):
    return DecoderModel(small_weights)


@pytest.fixture
def prompt(small_config):
    return synthetic_stream(np.random.default_rng(7), N_IMG, N_TXT, small_config.vocab_size)


@pytest.fixture
def calib_streams(small_config):
    rng = np.random.default_rng(1)
    return [synthetic_stream(rng, N_IMG, N_TXT, small_config.vocab_size) for _ in range(6)]


@pytest.fixture
def scaled_weights():
    """
    Factory: copy of the weights with named layer tensors multiplied by a factor

    Usage:
        weights = scaled_weights(small_weights, ("w_down",), 0.0)
    """
    def build(weights: ModelWeights, names, factor: float, layers=None) -> ModelWeights:
        targets = range(len(weights.layers)) if layers is None else layers
        new_layers = list(weights.layers)
        for index in targets:
            changes = {
                name: (getattr(new_layers[index], name) * factor).astype(np.float32)
                for name in names
            }
            new_layers[index] = replace(new_layers[index], **changes)
        return replace(weights, layers=new_layers)
    return build
