"""
Uniform Stride Policy

Content-blind baseline: samples the visual tokens at a fixed stride.
"""

from typing import List

from engine.interfaces.pruning_policy import IPruningPolicy, PruneContext

from ..contribution import ContributionRecord, contribution_records
from ..keep_set import KeepSet, keep_count, stride_indices


class UniformStridePolicy(IPruningPolicy):

    def score(self, context: PruneContext) -> List[ContributionRecord]:
        return contribution_records(context)

    def select(self, context: PruneContext, keep_ratio: float) -> KeepSet:
        visual = context.visual_rows()
        k = keep_count(keep_ratio, len(visual))
        chosen = [visual[j] for j in stride_indices(len(visual), k)]
        return KeepSet.from_choice(chosen, context.modality, keep_ratio)

    def get_policy_name(self) -> str:
        return "uniform"
