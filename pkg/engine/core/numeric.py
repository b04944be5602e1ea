"""
Numeric kernels

Dense kernels used by the decoder: matrix product, softmax, norms, cosine similarity
and RMS normalization. Tensors are float32, row-major; products and reductions
accumulate in float64 and are rounded back to float32.
"""

import enum
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from ..errors import ConfigurationError

DTYPE = np.float32
ACC_DTYPE = np.float64

# Norm below which a cosine is undefined
COSINE_EPS = 1e-12

# Tensor2D: np.ndarray of shape (rows, cols), dtype float32, C-contiguous
Tensor2D = np.ndarray


class Undefined(enum.Enum):
    """Tagged value for a cosine of a (near-)zero vector; never NaN"""
    SIMILARITY = "undefined-similarity"

    def __repr__(self) -> str:
        return "UNDEFINED_SIMILARITY"


UNDEFINED_SIMILARITY = Undefined.SIMILARITY

Similarity = Union[float, Undefined]


@dataclass
class OpCounter:
    """
    Multiply-accumulate counter

    Monotonically non-decreasing within a run; reset only through reset().
    One mul-add counts as two FLOPs.
    """
    mul_adds: int = 0

    def add(self, count: int) -> None:
        if count < 0:
            raise ConfigurationError(f"mul-add increment must be non-negative, got {count}")
        self.mul_adds += int(count)

    def reset(self) -> None:
        self.mul_adds = 0

    @property
    def flops(self) -> int:
        return 2 * self.mul_adds


def as_tensor2d(data, rows: Optional[int] = None, cols: Optional[int] = None) -> Tensor2D:
    """Coerce data to a contiguous float32 matrix, optionally checking its shape"""
    tensor = np.ascontiguousarray(data, dtype=DTYPE)
    if tensor.ndim != 2:
        raise ConfigurationError(f"expected a 2-D tensor, got shape {tensor.shape}")
    if rows is not None and tensor.shape[0] != rows:
        raise ConfigurationError(f"expected {rows} rows, got {tensor.shape[0]}")
    if cols is not None and tensor.shape[1] != cols:
        raise ConfigurationError(f"expected {cols} columns, got {tensor.shape[1]}")
    return tensor


def ensure_finite(tensor: np.ndarray, name: str) -> np.ndarray:
    if not np.all(np.isfinite(tensor)):
        raise ConfigurationError(f"{name} contains NaN or Inf")
    return tensor


def matmul(a: Tensor2D, b: Tensor2D, counter: Optional[OpCounter] = None) -> Tensor2D:
    """
    Matrix product a @ b

    Args:
        a: (m, k) matrix
        b: (k, n) matrix
        counter: incremented by exactly m*k*n mul-adds when given

    Returns:
        (m, n) float32 matrix

    Raises:
        ConfigurationError: inner dimensions disagree or an operand is not 2-D
    """
    if a.ndim != 2 or b.ndim != 2:
        raise ConfigurationError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    m, k = a.shape
    k_b, n = b.shape
    if k != k_b:
        raise ConfigurationError(f"matmul dimension mismatch: ({m}x{k}) @ ({k_b}x{n})")
    product = np.matmul(a.astype(ACC_DTYPE), b.astype(ACC_DTYPE))
    if counter is not None:
        counter.add(m * k * n)
    return product.astype(DTYPE)


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """
    Numerically stable softmax along one axis

    Entries equal to -inf act as masked positions and receive probability 0.
    The result is float64; callers storing attention cast it to float32.

    Raises:
        ConfigurationError: empty input, NaN, or a slice with every entry masked
    """
    values = np.asarray(logits, dtype=ACC_DTYPE)
    if values.size == 0 or values.shape[axis] == 0:
        raise ConfigurationError("softmax of an empty vector")
    if np.any(np.isnan(values)) or np.any(values == np.inf):
        raise ConfigurationError("softmax input contains NaN or +Inf")
    peak = np.max(values, axis=axis, keepdims=True)
    if np.any(np.isneginf(peak)):
        raise ConfigurationError("softmax slice with every position masked")
    shifted = np.exp(values - peak)
    return shifted / np.sum(shifted, axis=axis, keepdims=True)


def l2_norm(v: np.ndarray) -> float:
    vec = np.asarray(v, dtype=ACC_DTYPE).ravel()
    return float(np.sqrt(np.dot(vec, vec)))


def cosine_sim(x: np.ndarray, y: np.ndarray) -> Similarity:
    """
    Cosine similarity clamped to [-1, 1]

    Returns UNDEFINED_SIMILARITY when either norm is below COSINE_EPS.
    """
    xv = np.asarray(x, dtype=ACC_DTYPE).ravel()
    yv = np.asarray(y, dtype=ACC_DTYPE).ravel()
    if xv.shape != yv.shape:
        raise ConfigurationError(f"cosine_sim length mismatch: {xv.size} vs {yv.size}")
    nx = float(np.sqrt(np.dot(xv, xv)))
    ny = float(np.sqrt(np.dot(yv, yv)))
    if nx < COSINE_EPS or ny < COSINE_EPS:
        return UNDEFINED_SIMILARITY
    value = float(np.dot(xv, yv)) / (nx * ny)
    return min(1.0, max(-1.0, value))


def row_cosines(x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Row-wise cosine_sim for two (n, d) matrices

    Returns:
        (values, defined): float64 cosines (0.0 where undefined) and a boolean mask
        of rows whose cosine is defined
    """
    xm = np.asarray(x, dtype=ACC_DTYPE)
    ym = np.asarray(y, dtype=ACC_DTYPE)
    if xm.shape != ym.shape:
        raise ConfigurationError(f"row_cosines shape mismatch: {xm.shape} vs {ym.shape}")
    nx = np.sqrt(np.einsum("ij,ij->i", xm, xm))
    ny = np.sqrt(np.einsum("ij,ij->i", ym, ym))
    defined = (nx >= COSINE_EPS) & (ny >= COSINE_EPS)
    dots = np.einsum("ij,ij->i", xm, ym)
    values = np.zeros(xm.shape[0], dtype=ACC_DTYPE)
    values[defined] = dots[defined] / (nx[defined] * ny[defined])
    return np.clip(values, -1.0, 1.0), defined


def rms_norm(x: np.ndarray, scale: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """RMS normalization over the last axis followed by an element-wise scale"""
    xm = np.asarray(x, dtype=ACC_DTYPE)
    rms = np.sqrt(np.mean(xm * xm, axis=-1, keepdims=True) + eps)
    return (xm / rms * np.asarray(scale, dtype=ACC_DTYPE)).astype(DTYPE)


def silu(x: np.ndarray) -> np.ndarray:
    xm = np.asarray(x, dtype=ACC_DTYPE)
    return (xm / (1.0 + np.exp(-xm))).astype(DTYPE)
