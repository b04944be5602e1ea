"""FFN residual block implementations"""

from .swiglu import SwiGLUBlock, ffn_swiglu
from .hadamard import AlphaVector, HadamardBlock, SkipBlock, apply_hadamard

__all__ = [
    'SwiGLUBlock',
    'ffn_swiglu',
    'AlphaVector',
    'HadamardBlock',
    'SkipBlock',
    'apply_hadamard',
]
