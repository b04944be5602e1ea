"""
Keep sets, pruning policies and cache eviction
"""

import pytest

from engine.core.tokens import Modality
from engine.errors import ConfigurationError
from pruning.cache_pruning import prune_cache
from pruning.keep_set import KeepSet, keep_count, stride_indices
from pruning.policy_factory import POLICY_NAMES, PolicyFactory, create_policy


class TestKeepCount:

    @pytest.mark.parametrize("ratio,n,expected", [
        (0.25, 8, 2),
        (0.5, 5, 2),      # round half to even
        (0.3, 5, 2),      # round(1.5) = 2
        (0.01, 10, 1),    # never below one
        (1.0, 7, 7),
    ])
    def test_rounding_rule(self, ratio, n, expected):
        assert keep_count(ratio, n) == expected

    def test_no_visual_tokens(self):
        with pytest.raises(ConfigurationError):
            keep_count(0.5, 0)

    def test_stride_indices(self):
        assert stride_indices(10, 3) == (0, 3, 6)
        with pytest.raises(ConfigurationError):
            stride_indices(3, 4)


class TestKeepSet:

    def test_from_choice_adds_text_rows(self):
        modality = [Modality.VISUAL, Modality.TEXT, Modality.VISUAL, Modality.VISUAL]
        keep = KeepSet.from_choice([3], modality, 0.5)
        assert keep.indices == (1, 3)
        assert keep.n_visual_kept == 1
        assert 3 in keep and 0 not in keep
        assert keep.positions([10, 11, 12, 13]) == (11, 13)

    def test_rejects_text_choice(self):
        with pytest.raises(ConfigurationError):
            KeepSet.from_choice([1], [Modality.VISUAL, Modality.TEXT], 0.5)

    def test_rejects_unsorted_indices(self):
        with pytest.raises(ConfigurationError):
            KeepSet((2, 1), 0.5, 4, 2)


class TestPolicies:

    def test_factory_caches_instances(self):
        factory = PolicyFactory()
        assert factory.create_policy("attention") is factory.create_policy("attention")

    def test_unknown_policy(self):
        with pytest.raises(ConfigurationError, match="Unknown pruning policy"):
            create_policy("random")

    def test_names(self):
        assert [create_policy(name).get_policy_name() for name in POLICY_NAMES] == \
            list(POLICY_NAMES)

    @pytest.mark.parametrize("ratio", [0.1, 0.25, 0.5, 1.0])
    def test_equal_cardinality(self, small_model, prompt, ratio):
        probe = small_model.forward(prompt).probe(1)
        context = probe.prune_context(small_model.weights.layers[1])
        sizes = set()
        for name in POLICY_NAMES:
            keep = create_policy(name).select(context, ratio)
            assert all(i in keep for i in range(12, 16))
            sizes.add((len(keep), keep.n_visual_kept))
        assert len(sizes) == 1

    def test_score_returns_one_record_per_key(self, small_model, prompt):
        probe = small_model.forward(prompt).probe(2)
        context = probe.prune_context(small_model.weights.layers[2])
        for name in POLICY_NAMES:
            records = create_policy(name).score(context)
            assert [r.token_index for r in records] == list(range(16))


class TestCachePruning:

    def test_full_keep_returns_same_cache(self, small_model, prompt):
        cache = small_model.forward(prompt).cache
        keep = KeepSet(tuple(range(16)), 1.0, 16, 12)
        assert prune_cache(cache, keep, 2) is cache

    def test_cardinality_after_eviction(self, small_model, prompt):
        cache = small_model.forward(prompt).cache
        keep = KeepSet.from_choice([0, 5], list(prompt.modality), 0.25)
        pruned = prune_cache(cache, keep, 2)
        assert pruned.row_counts() == [16, 16, 4 + 2, 4 + 2]
        assert pruned.layers[2].positions == [0, 5, 12, 13, 14, 15]
        assert pruned.evicted == [p for p in range(12) if p not in (0, 5)]
        assert cache.row_counts() == [16, 16, 16, 16]

    def test_keep_set_size_mismatch(self, small_model, prompt):
        cache = small_model.forward(prompt).cache
        with pytest.raises(ConfigurationError):
            prune_cache(cache, KeepSet((0, 1), 0.5, 4, 2), 2)

    def test_bad_from_layer(self, small_model, prompt):
        cache = small_model.forward(prompt).cache
        with pytest.raises(ConfigurationError):
            prune_cache(cache, KeepSet(tuple(range(16)), 1.0, 16, 12), 9)
