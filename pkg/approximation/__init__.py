"""
FFN approximation

This package measures how close each residual FFN block is to the identity and replaces
redundant blocks with a calibrated element-wise scaling.

Components:
- ffn_profile: per-layer, per-modality linearity profile and layer selection
- hadamard: moment accumulation and closed-form alpha calibration
- parallel: fixed-chunk worker pool honouring CAPA_THREADS
"""

__version__ = "0.1.0"

from .ffn_profile import (
    LayerProfile,
    LayerSelection,
    RedundancyProfile,
    build_profile,
    layer_similarity,
    select_layers,
)
from .hadamard import (
    CalibMoments,
    ReconstructionError,
    accumulate,
    calibrate_layers,
    collect_moments,
    reconstruction_errors,
    solve_alpha,
    squared_error,
)
from .parallel import chunked_map, worker_count

__all__ = [
    'LayerProfile',
    'LayerSelection',
    'RedundancyProfile',
    'build_profile',
    'layer_similarity',
    'select_layers',
    'CalibMoments',
    'ReconstructionError',
    'accumulate',
    'calibrate_layers',
    'collect_moments',
    'reconstruction_errors',
    'solve_alpha',
    'squared_error',
    'chunked_map',
    'worker_count',
]
