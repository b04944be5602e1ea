"""
Hellinger distance and per-step divergence traces
"""

import numpy as np
import pytest

from analyzer.divergence import (
    DivergenceTrace,
    hellinger,
    probabilities,
    ratio_sweep,
    recompute_divergence,
    reference_run,
    trace_divergence,
)
from engine.core.plan import LayerExecPlan, PrunePoint, PruneStage
from engine.errors import ConfigurationError, DistributionError
from pruning.policy_factory import create_policy


def pruned_plan(keep_ratio=0.25, layer=1, **kwargs):
    point = PrunePoint(layer, keep_ratio, create_policy("contribution"), **kwargs)
    return LayerExecPlan.vanilla(4).with_prune_points([point])


class TestHellinger:

    def test_known_values(self):
        assert hellinger([0.5, 0.5], [0.5, 0.5]) == 0.0
        assert hellinger([1.0, 0.0], [0.0, 1.0]) == pytest.approx(1.0)
        assert hellinger([0.5, 0.5], [1.0, 0.0]) == pytest.approx(0.5412, abs=1e-4)

    def test_metric_properties(self):
        rng = np.random.default_rng(0)
        for _ in range(10000):
            p, q, r = rng.dirichlet(np.ones(256), size=3)
            pq = hellinger(p, q)
            assert 0.0 <= pq <= 1.0
            assert pq == pytest.approx(hellinger(q, p), abs=1e-12)
            assert pq <= hellinger(p, r) + hellinger(r, q) + 1e-12
            assert hellinger(p, p) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(DistributionError):
            hellinger([0.5, 0.5], [1.0, 0.0, 0.0])

    def test_negative_entry(self):
        with pytest.raises(DistributionError):
            hellinger([1.5, -0.5], [0.5, 0.5])

    def test_not_normalized(self):
        with pytest.raises(DistributionError):
            hellinger([0.5, 0.6], [0.5, 0.5])

    def test_probabilities_sum_to_one(self):
        logits = np.random.default_rng(1).standard_normal(64) * 30
        assert probabilities(logits).sum() == pytest.approx(1.0)


class TestDivergenceTrace:

    def test_values_outside_unit_interval(self):
        with pytest.raises(DistributionError):
            DivergenceTrace("bad", [0.2, 1.5])

    def test_rows(self):
        trace = DivergenceTrace("attention", [0.0, 0.25])
        assert trace.rows() == [[0, "attention", 0.0], [1, "attention", 0.25]]
        assert trace.max == 0.25


class TestTraceDivergence:

    def test_vanilla_against_itself(self, small_model, prompt):
        trace = trace_divergence(small_model, None, prompt, 6)
        assert trace.values == [0.0] * 6
        assert trace.prune_step is None

    def test_full_keep_ratio_is_zero(self, small_model, prompt):
        trace = trace_divergence(small_model, pruned_plan(1.0), prompt, 6)
        assert trace.values == [0.0] * 6
        assert trace.prune_step == 0

    def test_pruning_diverges(self, small_model, prompt):
        trace = trace_divergence(small_model, pruned_plan(0.25), prompt, 4)
        assert len(trace.values) == 4
        assert trace.values[0] > 0.0

    def test_decode_prune_step_recorded(self, small_model, prompt):
        plan = pruned_plan(0.25, stage=PruneStage.DECODE, step=2)
        trace = trace_divergence(small_model, plan, prompt, 5)
        assert trace.prune_step == 2
        assert trace.values[:2] == [0.0, 0.0]

    def test_reference_too_short(self, small_model, prompt):
        reference = reference_run(small_model, prompt, 2)
        with pytest.raises(ConfigurationError):
            trace_divergence(small_model, pruned_plan(), prompt, 4, reference=reference)

    def test_recomputed_trace_matches_cached_trace(self, small_model, prompt):
        plan = pruned_plan(0.25)
        reference = reference_run(small_model, prompt, 5)
        cached = trace_divergence(small_model, plan, prompt, 5, reference=reference)
        scratch = recompute_divergence(small_model, plan, prompt, 5, reference=reference)
        np.testing.assert_allclose(scratch.values, cached.values, atol=1e-4)

    def test_recompute_rejects_decode_pruning(self, small_model, prompt):
        plan = pruned_plan(0.25, stage=PruneStage.DECODE, step=2)
        with pytest.raises(ConfigurationError):
            recompute_divergence(small_model, plan, prompt, 4)


class TestRatioSweep:

    def test_grid_shape(self, small_model, prompt):
        points = ratio_sweep(small_model, prompt, 3, ["contribution", "attention"],
                             [0.25, 1.0], prune_layer=1)
        assert [(p.policy, p.keep_ratio) for p in points] == [
            ("contribution", 0.25), ("contribution", 1.0),
            ("attention", 0.25), ("attention", 1.0),
        ]
        full = [p for p in points if p.keep_ratio == 1.0]
        assert all(p.mean_hellinger == 0.0 and p.max_hellinger == 0.0 for p in full)
