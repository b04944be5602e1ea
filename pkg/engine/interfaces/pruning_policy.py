"""
Pruning Policy Interface

Defines how the decoder decides which visual tokens survive a prune point.
Implementations live in the pruning package; the model only sees this interface.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import TYPE_CHECKING, List, Sequence

import numpy as np

from ..core.tokens import Modality
from ..core.weights import LayerWeights
from ..errors import ConfigurationError

if TYPE_CHECKING:
    from pruning.contribution import ContributionRecord
    from pruning.keep_set import KeepSet


@dataclass(frozen=True)
class PruneContext:
    """
    Everything a policy may look at when scoring the keys of one layer

    attention: (H, n_keys) probabilities of the current query over the cached keys
    values: (H, n_keys, d_head) cached value rows, x_i W_{V,h} with x_i the normalized input
    positions, modality: original position and modality of each key row
    """
    layer: int
    layer_weights: LayerWeights
    attention: np.ndarray
    values: np.ndarray
    positions: Sequence[int]
    modality: Sequence[Modality]

    def __post_init__(self):
        if self.attention.ndim != 2 or self.values.ndim != 3:
            raise ConfigurationError("attention must be (H, n) and values (H, n, d_head)")
        if self.attention.shape[0] != self.values.shape[0]:
            raise ConfigurationError(
                f"head count mismatch: attention has {self.attention.shape[0]}, "
                f"values have {self.values.shape[0]}"
            )
        n_keys = self.attention.shape[1]
        if self.values.shape[1] != n_keys or len(self.positions) != n_keys \
                or len(self.modality) != n_keys:
            raise ConfigurationError(f"prune context rows disagree with {n_keys} keys")

    @property
    def n_heads(self) -> int:
        return self.attention.shape[0]

    @property
    def d_head(self) -> int:
        return self.values.shape[2]

    @property
    def n_keys(self) -> int:
        return self.attention.shape[1]

    def visual_rows(self) -> List[int]:
        return [i for i, m in enumerate(self.modality) if m is Modality.VISUAL]


class IPruningPolicy(ABC):
    """
    Interface for visual-token pruning policies

    Implementations:
    - ContributionTopK: top-k by attention contribution C_i
    - AttentionTopK: top-k by head-mean attention probability
    - UniformStride: fixed-stride sampling of the visual tokens
    """

    @abstractmethod
    def score(self, context: PruneContext) -> List['ContributionRecord']:
        """Per-key contribution diagnostics, one record per key row"""
        pass

    @abstractmethod
    def select(self, context: PruneContext, keep_ratio: float) -> 'KeepSet':
        """
        Choose the surviving key rows

        Returns:
            KeepSet over the row indices of context (all text rows plus k visual rows)
        """
        pass

    @abstractmethod
    def get_policy_name(self) -> str:
        pass
