"""
SwiGLU feed-forward block

The dense FFN: three products (gate, up, down) per token, no bias terms, so FFN(0) = 0.
"""

from typing import Optional, Sequence

import numpy as np

from ..core.numeric import DTYPE, OpCounter, matmul, rms_norm, silu
from ..core.tokens import Modality
from ..core.weights import LayerWeights
from ..interfaces.ffn_block import IFeedForwardBlock


def ffn_swiglu(
    x: np.ndarray, layer: LayerWeights, counter: Optional[OpCounter] = None
) -> np.ndarray:
    """
    down(silu(gate(x)) * up(x))

    Accepts one d-vector or an (n, d) matrix; adds exactly 3*d*d_ff mul-adds per token.
    """
    single = np.ndim(x) == 1
    rows = np.atleast_2d(np.asarray(x, dtype=DTYPE))
    gate = matmul(rows, layer.w_gate, counter)
    up = matmul(rows, layer.w_up, counter)
    mixed = (silu(gate).astype(np.float64) * up.astype(np.float64)).astype(DTYPE)
    out = matmul(mixed, layer.w_down, counter)
    return out[0] if single else out


class SwiGLUBlock(IFeedForwardBlock):
    """Dense residual block: y = x + ffn_swiglu(rmsnorm(x))"""

    def __init__(self, layer: LayerWeights, norm_eps: float = 1e-6):
        self.layer = layer
        self.norm_eps = norm_eps

    def apply(self, hidden: np.ndarray, modality: Sequence[Modality],
              counter: Optional[OpCounter] = None) -> np.ndarray:
        if hidden.shape[0] == 0:
            return hidden.astype(DTYPE)
        normed = rms_norm(hidden, self.layer.ffn_norm, self.norm_eps)
        update = ffn_swiglu(normed, self.layer, counter)
        return (hidden.astype(np.float64) + update.astype(np.float64)).astype(DTYPE)

    def get_block_name(self) -> str:
        return "SwiGLU (dense)"
