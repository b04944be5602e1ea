"""
Hadamard FFN approximation

Replaces a residual FFN block with an element-wise scaling y = x * alpha for the rows in
scope. Rows outside the scope still run the dense block.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..core.numeric import DTYPE, OpCounter
from ..core.tokens import Modality
from ..errors import ConfigurationError
from ..interfaces.ffn_block import HadamardScope, IFeedForwardBlock


@dataclass
class AlphaVector:
    """
    Calibrated scaling vector of one layer

    fallback_mask marks dimensions where the denominator guard fired (alpha_k = 1).
    """
    layer: int
    alpha: np.ndarray
    fallback_mask: np.ndarray = field(default=None)

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=DTYPE)
        if self.alpha.ndim != 1:
            raise ConfigurationError(f"alpha for layer {self.layer} must be a vector")
        if not np.all(np.isfinite(self.alpha)):
            raise ConfigurationError(f"alpha for layer {self.layer} is not finite")
        if self.fallback_mask is None:
            self.fallback_mask = np.zeros(self.alpha.shape, dtype=bool)
        self.fallback_mask = np.asarray(self.fallback_mask, dtype=bool)
        if self.fallback_mask.shape != self.alpha.shape:
            raise ConfigurationError("fallback_mask and alpha differ in length")

    @property
    def dim(self) -> int:
        return self.alpha.shape[0]


def apply_hadamard(
    x: np.ndarray, alpha: np.ndarray, counter: Optional[OpCounter] = None
) -> np.ndarray:
    """x * alpha row-wise; adds d mul-adds per token"""
    values = np.asarray(x, dtype=DTYPE)
    scale = np.asarray(alpha, dtype=DTYPE)
    if values.shape[-1] != scale.shape[0]:
        raise ConfigurationError(
            f"hadamard length mismatch: x has {values.shape[-1]}, alpha has {scale.shape[0]}"
        )
    if counter is not None:
        counter.add(values.size)
    return values * scale


class _ScopedBlock(IFeedForwardBlock):
    """Runs an in-scope rule on the scoped rows and the dense block on the others"""

    def __init__(self, scope: HadamardScope, dense: IFeedForwardBlock):
        self.scope = scope
        self.dense = dense

    def _in_scope(self, rows: np.ndarray, counter: Optional[OpCounter]) -> np.ndarray:
        raise NotImplementedError

    def apply(self, hidden: np.ndarray, modality: Sequence[Modality],
              counter: Optional[OpCounter] = None) -> np.ndarray:
        inside, outside = self.scope.split_rows(modality)
        out = np.empty_like(hidden, dtype=DTYPE)
        if inside:
            out[inside] = self._in_scope(hidden[inside], counter)
        if outside:
            out[outside] = self.dense.apply(
                hidden[outside], [modality[i] for i in outside], counter
            )
        return out


class HadamardBlock(_ScopedBlock):

    def __init__(self, alpha: AlphaVector, scope: HadamardScope, dense: IFeedForwardBlock):
        super().__init__(scope, dense)
        self.alpha = alpha

    def _in_scope(self, rows: np.ndarray, counter: Optional[OpCounter]) -> np.ndarray:
        return apply_hadamard(rows, self.alpha.alpha, counter)

    def get_block_name(self) -> str:
        return f"Hadamard ({self.scope.value})"


class SkipBlock(_ScopedBlock):

    def _in_scope(self, rows: np.ndarray, counter: Optional[OpCounter]) -> np.ndarray:
        return rows.astype(DTYPE)

    def get_block_name(self) -> str:
        return f"Skip ({self.scope.value})"
