"""
Contribution Top-k Policy

Keeps the visual tokens whose attention contribution C_i to the current query is largest.
"""

from typing import List

from engine.interfaces.pruning_policy import IPruningPolicy, PruneContext

from ..contribution import ContributionRecord, contribution_records, rank_by_contribution
from ..keep_set import KeepSet


class ContributionTopKPolicy(IPruningPolicy):
    """
    Attention-contribution pruning

    Selection Logic:
    - Score every key by C_i = || sum_h A_{i,h} v_{i,h} W_{O,h} ||
    - Keep the top-k visual keys, smaller index first on ties
    - Keep every text key

    Usage:
        policy = ContributionTopKPolicy()
        keep = policy.select(context, keep_ratio=0.25)
    """

    def score(self, context: PruneContext) -> List[ContributionRecord]:
        return contribution_records(context)

    def select(self, context: PruneContext, keep_ratio: float) -> KeepSet:
        return rank_by_contribution(self.score(context), keep_ratio)

    def get_policy_name(self) -> str:
        return "contribution"
