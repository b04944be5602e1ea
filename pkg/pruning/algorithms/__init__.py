"""Pruning policy implementations"""

from .contribution_topk import ContributionTopKPolicy
from .attention_topk import AttentionTopKPolicy
from .uniform_stride import UniformStridePolicy

__all__ = [
    'ContributionTopKPolicy',
    'AttentionTopKPolicy',
    'UniformStridePolicy',
]
