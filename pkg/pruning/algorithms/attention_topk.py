"""
Attention Top-k Policy

Raw attention baseline: keeps the visual tokens the current query attends to most,
averaged over heads.
"""

from typing import List

from engine.interfaces.pruning_policy import IPruningPolicy, PruneContext

from ..contribution import ContributionRecord, contribution_records, rank_by_attention
from ..keep_set import KeepSet


class AttentionTopKPolicy(IPruningPolicy):
    """Head-mean attention ranking; records still report C_i for diagnostics"""

    def score(self, context: PruneContext) -> List[ContributionRecord]:
        return contribution_records(context)

    def select(self, context: PruneContext, keep_ratio: float) -> KeepSet:
        return rank_by_attention(context.attention, keep_ratio, context.modality)

    def get_policy_name(self) -> str:
        return "attention"
