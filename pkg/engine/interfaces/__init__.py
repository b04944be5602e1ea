"""Engine interfaces"""

from .ffn_block import FfnMode, HadamardScope, IFeedForwardBlock
from .pruning_policy import IPruningPolicy, PruneContext

__all__ = [
    'FfnMode',
    'HadamardScope',
    'IFeedForwardBlock',
    'IPruningPolicy',
    'PruneContext',
]
