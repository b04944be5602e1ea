"""
Hadamard calibration

Fits y ~= x * alpha per dimension by ordinary least squares over a calibration set:

    alpha_k = sum_n x_nk y_nk / sum_n x_nk^2

x is the residual entering the FFN block and y the block's output, both captured from a
dense forward pass. Only second-order moments are kept, so samples can be streamed.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from engine.core.model import DecoderModel
from engine.core.numeric import ACC_DTYPE, ensure_finite
from engine.core.plan import LayerExecPlan, ProbeRequest
from engine.core.tokens import TokenStream
from engine.errors import CalibrationError, ConfigurationError
from engine.implementations.hadamard import AlphaVector
from engine.interfaces.ffn_block import HadamardScope

from .ffn_profile import LayerSelection
from .parallel import chunked_map

logger = logging.getLogger(__name__)

DEFAULT_EPSILON = 1e-8


@dataclass
class CalibMoments:
    """
    Running second-order moments of one layer (float64)

    sum_yy is kept so reconstruction errors need no second pass.
    """
    layer: int
    sum_xy: np.ndarray
    sum_xx: np.ndarray
    sum_yy: np.ndarray
    n_samples: int = 0

    def __post_init__(self):
        self.sum_xy = np.asarray(self.sum_xy, dtype=ACC_DTYPE)
        self.sum_xx = np.asarray(self.sum_xx, dtype=ACC_DTYPE)
        self.sum_yy = np.asarray(self.sum_yy, dtype=ACC_DTYPE)
        if not (self.sum_xy.shape == self.sum_xx.shape == self.sum_yy.shape) \
                or self.sum_xy.ndim != 1:
            raise ConfigurationError("moment vectors must share one length")
        if np.any(self.sum_xx < 0) or np.any(self.sum_yy < 0):
            raise ConfigurationError("squared-sum moments cannot be negative")

    @classmethod
    def zeros(cls, layer: int, d: int) -> 'CalibMoments':
        return cls(layer, np.zeros(d), np.zeros(d), np.zeros(d))

    @property
    def dim(self) -> int:
        return self.sum_xy.shape[0]

    def merge(self, other: 'CalibMoments') -> 'CalibMoments':
        if other.dim != self.dim:
            raise ConfigurationError(f"cannot merge moments of length {self.dim} and {other.dim}")
        return CalibMoments(
            self.layer,
            self.sum_xy + other.sum_xy,
            self.sum_xx + other.sum_xx,
            self.sum_yy + other.sum_yy,
            self.n_samples + other.n_samples,
        )


def accumulate(moments: CalibMoments, x: np.ndarray, y: np.ndarray) -> CalibMoments:
    """
    Add samples to the moments

    Args:
        x, y: one d-vector each, or (n, d) matrices of n samples

    Returns:
        New moments; the input is left untouched

    Raises:
        ConfigurationError: length mismatch or non-finite samples
    """
    xs = np.atleast_2d(np.asarray(x, dtype=ACC_DTYPE))
    ys = np.atleast_2d(np.asarray(y, dtype=ACC_DTYPE))
    if xs.shape != ys.shape or xs.shape[1] != moments.dim:
        raise ConfigurationError(
            f"sample shapes {xs.shape} and {ys.shape} do not match moments of length {moments.dim}"
        )
    ensure_finite(xs, "calibration x")
    ensure_finite(ys, "calibration y")
    return CalibMoments(
        moments.layer,
        moments.sum_xy + np.einsum("nk,nk->k", xs, ys),
        moments.sum_xx + np.einsum("nk,nk->k", xs, xs),
        moments.sum_yy + np.einsum("nk,nk->k", ys, ys),
        moments.n_samples + xs.shape[0],
    )


def solve_alpha(moments: CalibMoments, epsilon: float = DEFAULT_EPSILON) -> AlphaVector:
    """
    Closed-form OLS scaling vector

    Dimensions with sum_xx <= epsilon fall back to alpha_k = 1 (identity passthrough)
    and are flagged in fallback_mask.
    """
    if moments.n_samples < 1:
        raise CalibrationError(f"layer {moments.layer}: no calibration samples")
    guarded = moments.sum_xx > epsilon
    alpha = np.ones(moments.dim, dtype=ACC_DTYPE)
    alpha[guarded] = moments.sum_xy[guarded] / moments.sum_xx[guarded]
    return AlphaVector(moments.layer, alpha, fallback_mask=~guarded)


@dataclass(frozen=True)
class ReconstructionError:
    """Mean squared error per element of hadamard and skip mode on the calibration set"""
    layer: int
    mse_hadamard: float
    mse_skip: float
    n_samples: int


def squared_error(moments: CalibMoments, alpha: np.ndarray) -> float:
    """sum_n sum_k (alpha_k x_nk - y_nk)^2 from the moments"""
    a = np.asarray(alpha, dtype=ACC_DTYPE)
    per_dim = moments.sum_yy - 2.0 * a * moments.sum_xy + a * a * moments.sum_xx
    return float(np.sum(per_dim))


def reconstruction_errors(
    moments: Dict[int, CalibMoments],
    alphas: Dict[int, AlphaVector],
) -> List[ReconstructionError]:
    """Hadamard-mode vs skip-mode error of every calibrated layer, ordered by layer"""
    report = []
    for layer in sorted(moments):
        m = moments[layer]
        if layer not in alphas:
            raise CalibrationError(f"no alpha for layer {layer}")
        denominator = max(m.n_samples * m.dim, 1)
        report.append(ReconstructionError(
            layer,
            squared_error(m, alphas[layer].alpha) / denominator,
            squared_error(m, np.ones(m.dim)) / denominator,
            m.n_samples,
        ))
    return report


def _moments_chunk(
    model: DecoderModel,
    layers: Sequence[int],
    scope: HadamardScope,
    streams: Sequence[TokenStream],
) -> Dict[int, CalibMoments]:
    d = model.config.d_model
    partial = {layer: CalibMoments.zeros(layer, d) for layer in layers}
    plan = LayerExecPlan.vanilla(model.config.n_layers)
    probes = ProbeRequest(layers=frozenset(layers), hidden_states=True, attention=False)
    for stream in streams:
        trace = model.forward(stream, plan, probes)
        for layer in layers:
            probe = trace.probe(layer)
            rows, _ = scope.split_rows(probe.modality)
            if rows:
                partial[layer] = accumulate(
                    partial[layer], probe.ffn_input[rows], probe.ffn_output[rows]
                )
    return partial


def collect_moments(
    model: DecoderModel,
    layers: Iterable[int],
    calib: Sequence[TokenStream],
    scope: Union[HadamardScope, str] = HadamardScope.VISUAL_ONLY,
    chunk_size: int = 8,
    max_workers: Optional[int] = None,
) -> Dict[int, CalibMoments]:
    """
    Moments of every layer over the calibration set, merged in chunk order

    Raises:
        CalibrationError: empty calibration set, or no token inside the scope
    """
    targets = sorted(set(layers))
    if not targets:
        raise CalibrationError("no layers to calibrate")
    if not calib:
        raise CalibrationError("empty calibration set")
    scope = HadamardScope.parse(scope)
    partials = chunked_map(
        lambda chunk: _moments_chunk(model, targets, scope, chunk),
        list(calib), chunk_size, max_workers,
    )
    merged = {layer: CalibMoments.zeros(layer, model.config.d_model) for layer in targets}
    for partial in partials:
        for layer in targets:
            merged[layer] = merged[layer].merge(partial[layer])
    empty = [layer for layer in targets if merged[layer].n_samples == 0]
    if empty:
        raise CalibrationError(f"no {scope.value} tokens reached layers {empty}")
    return merged


def calibrate_layers(
    model: DecoderModel,
    selection: Union[LayerSelection, Iterable[int]],
    calib: Sequence[TokenStream],
    scope: Union[HadamardScope, str] = HadamardScope.VISUAL_ONLY,
    epsilon: float = DEFAULT_EPSILON,
    chunk_size: int = 8,
    max_workers: Optional[int] = None,
) -> List[AlphaVector]:
    """
    One AlphaVector per selected layer, ordered by layer

    The probe pass runs the model fully dense; scope decides which tokens feed the moments.
    """
    moments = collect_moments(model, selection, calib, scope, chunk_size, max_workers)
    alphas = []
    for layer, m in moments.items():
        alpha = solve_alpha(m, epsilon)
        logger.info("[Calibration] layer %d: %d samples, %d fallback dims",
                    layer, m.n_samples, int(alpha.fallback_mask.sum()))
        alphas.append(alpha)
    return alphas
