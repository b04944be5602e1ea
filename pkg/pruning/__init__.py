"""
Visual-token pruning

This package scores visual tokens by their attention contribution and implements the
pruning policies the decoder can run at a prune point.

Components:
- contribution: C_i scoring, ContributionRecord and the three ranking rules
- keep_set: KeepSet and the keep-count rounding rule
- cache_pruning: eviction of pruned rows from a KvCache
- algorithms: IPruningPolicy implementations (contribution, attention, uniform)
"""

__version__ = "0.1.0"

from .keep_set import KeepSet, keep_count, stride_indices
from .contribution import (
    ContributionRecord,
    attention_contribution,
    contribution_records,
    contribution_scores,
    head_contributions,
    rank_by_attention,
    rank_by_contribution,
    uniform_stride,
)
from .cache_pruning import prune_cache
from .policy_factory import POLICY_NAMES, PolicyFactory, create_policy

__all__ = [
    'KeepSet',
    'keep_count',
    'stride_indices',
    'ContributionRecord',
    'attention_contribution',
    'contribution_records',
    'contribution_scores',
    'head_contributions',
    'rank_by_attention',
    'rank_by_contribution',
    'uniform_stride',
    'prune_cache',
    'POLICY_NAMES',
    'PolicyFactory',
    'create_policy',
]
