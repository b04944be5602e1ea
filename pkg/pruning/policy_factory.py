"""
Policy Factory

Creates pruning policies by name.
"""

from typing import Dict, Tuple

from engine.errors import ConfigurationError
from engine.interfaces.pruning_policy import IPruningPolicy

from .algorithms.attention_topk import AttentionTopKPolicy
from .algorithms.contribution_topk import ContributionTopKPolicy
from .algorithms.uniform_stride import UniformStridePolicy

POLICY_NAMES: Tuple[str, ...] = ("contribution", "attention", "uniform")


class PolicyFactory:
    """
    Factory for pruning policies

    Policies are stateless, so one instance per name is shared.

    Usage:
        factory = PolicyFactory()
        policy = factory.create_policy("contribution")
    """

    _classes = {
        "contribution": ContributionTopKPolicy,
        "attention": AttentionTopKPolicy,
        "uniform": UniformStridePolicy,
    }

    def __init__(self):
        self._policy_cache: Dict[str, IPruningPolicy] = {}

    def create_policy(self, name: str) -> IPruningPolicy:
        """
        Raises:
            ConfigurationError: unknown policy name
        """
        if name not in self._policy_cache:
            try:
                self._policy_cache[name] = self._classes[name]()
            except KeyError:
                raise ConfigurationError(
                    f"Unknown pruning policy: {name!r} (expected one of {', '.join(POLICY_NAMES)})"
                ) from None
        return self._policy_cache[name]


_default_factory = PolicyFactory()


def create_policy(name: str) -> IPruningPolicy:
    return _default_factory.create_policy(name)
