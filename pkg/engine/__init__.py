"""
CAPA inference engine

Toy decoder-only transformer with per-layer FFN execution modes, a KV cache and
pluggable visual-token pruning.

Subpackages:
- core: numeric kernels, tokens, weights, KV cache, execution plans, the decoder
- interfaces: FFN residual block and pruning policy interfaces
- implementations: SwiGLU, Hadamard and skip residual blocks
- infrastructure: CAPT tensor container I/O
"""

__version__ = "0.1.0"

from .errors import (
    CapaError,
    ConfigurationError,
    SequenceTooLongError,
    ProbeError,
    CalibrationError,
    DistributionError,
    FormatError,
    StageError,
)

__all__ = [
    'CapaError',
    'ConfigurationError',
    'SequenceTooLongError',
    'ProbeError',
    'CalibrationError',
    'DistributionError',
    'FormatError',
    'StageError',
]
