"""
Core decoder components

The decoder itself and its execution plans live in engine.core.model and engine.core.plan;
they depend on the block implementations and are imported from there directly.
"""

from .numeric import (
    DTYPE,
    UNDEFINED_SIMILARITY,
    OpCounter,
    cosine_sim,
    l2_norm,
    matmul,
    rms_norm,
    row_cosines,
    softmax,
)
from .tokens import Modality, TokenStream, synthetic_stream
from .weights import LayerWeights, ModelWeights, init_weights
from .kv_cache import KvCache, LayerCache

__all__ = [
    'DTYPE',
    'UNDEFINED_SIMILARITY',
    'OpCounter',
    'cosine_sim',
    'l2_norm',
    'matmul',
    'rms_norm',
    'row_cosines',
    'softmax',
    'Modality',
    'TokenStream',
    'synthetic_stream',
    'LayerWeights',
    'ModelWeights',
    'init_weights',
    'KvCache',
    'LayerCache',
]
