"""
Feed-Forward Block Interface

Defines how a layer turns the residual stream entering its FFN sub-block into the
post-residual output y = x + FFN(norm(x)), or an approximation of it.
"""

import enum
from abc import ABC, abstractmethod
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..core.numeric import OpCounter
from ..core.tokens import Modality


class FfnMode(str, enum.Enum):
    DENSE = "dense"
    HADAMARD = "hadamard"
    SKIP = "skip"


class HadamardScope(str, enum.Enum):
    """Which tokens bypass the dense FFN in an approximated layer"""
    VISUAL_ONLY = "visual_only"
    ALL_TOKENS = "all_tokens"

    @classmethod
    def parse(cls, value: str) -> 'HadamardScope':
        aliases = {"visual": cls.VISUAL_ONLY, "all": cls.ALL_TOKENS}
        return aliases.get(value) or cls(value)

    def split_rows(self, modality: Sequence[Modality]) -> Tuple[List[int], List[int]]:
        """(rows inside the scope, rows outside it)"""
        if self is HadamardScope.ALL_TOKENS:
            return list(range(len(modality))), []
        inside = [i for i, m in enumerate(modality) if m is Modality.VISUAL]
        outside = [i for i, m in enumerate(modality) if m is not Modality.VISUAL]
        return inside, outside


class IFeedForwardBlock(ABC):
    """
    Interface for the FFN residual block of one layer

    Implementations:
    - SwiGLUBlock: dense block, y = x + down(silu(gate(n)) * up(n)), n = rmsnorm(x)
    - HadamardBlock: y = x * alpha for in-scope rows, dense for the rest
    - SkipBlock: y = x for in-scope rows, dense for the rest
    """

    @abstractmethod
    def apply(
        self,
        hidden: np.ndarray,
        modality: Sequence[Modality],
        counter: Optional[OpCounter] = None,
    ) -> np.ndarray:
        """
        Compute the post-residual output for every row

        Args:
            hidden: (n, d) residual stream entering the FFN sub-block
            modality: modality of each row
            counter: mul-add counter for the dense products and Hadamard scalings

        Returns:
            (n, d) float32 post-residual output
        """
        pass

    @abstractmethod
    def get_block_name(self) -> str:
        pass
