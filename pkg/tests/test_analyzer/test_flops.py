"""
Analytical FLOPs model against fixed constants and the instrumented forward pass
"""

import itertools

import numpy as np
import pytest
import sympy as sp

from analyzer.flops import (
    COMPONENTS,
    CostSpec,
    attention_speedup,
    cost_formulas,
    cost_report,
    ffn_flops,
    hadamard_flops,
    linear_speedup,
    llava7b_spec,
    pipeline_report,
    reduction_factor,
    sequence_lengths,
)
from engine.core.plan import LayerExecPlan, PrunePoint
from engine.errors import ConfigurationError
from engine.implementations.hadamard import AlphaVector
from engine.interfaces.ffn_block import FfnMode, HadamardScope
from pruning.policy_factory import create_policy


LLAVA_VANILLA = 4252017623040
LLAVA_CAPA = 1233584062464


class TestFormulas:

    def test_ffn_flops(self):
        assert ffn_flops(4096, 11008) == 270532608
        assert ffn_flops(64, 256) == 98304

    def test_hadamard_flops(self):
        assert hadamard_flops(4096) == 4096

    def test_reduction_factor(self):
        assert reduction_factor(4096, 11008) == 66048
        assert reduction_factor(64, 256) == 6 * 256

    def test_formulas_are_symbolic(self):
        formulas = cost_formulas()
        assert set(formulas) == set(COMPONENTS)
        d, n = sp.symbols("d N", integer=True, nonnegative=True)
        assert sp.simplify(formulas["attn_proj"] - 4 * d ** 2 * n) == 0

    def test_speedups(self):
        assert sequence_lengths(576, 0, 0.75) == (576, 144)
        assert linear_speedup(576, 0, 0.75) == 4
        assert attention_speedup(576, 0, 0.75) == 16
        assert linear_speedup(576, 64, 0.0) == 1

    def test_speedup_monotone_in_rho(self):
        values = [linear_speedup(576, 64, rho) for rho in (0.0, 0.25, 0.5, 0.75, 0.9)]
        assert values == sorted(values)

    def test_bad_rho(self):
        with pytest.raises(ConfigurationError):
            sequence_lengths(576, 0, 1.0)


class TestLlavaConfig:

    def test_vanilla_total(self):
        vanilla = cost_report(llava7b_spec(rho=0.0, approximated=()))
        assert vanilla.total_mul_adds == LLAVA_VANILLA
        assert vanilla.ffn_share == pytest.approx(0.6515, abs=1e-4)
        assert vanilla.speedups() == (1, 1)

    def test_pruned_and_approximated_total(self):
        capa = cost_report(llava7b_spec())
        vanilla = cost_report(llava7b_spec(rho=0.0, approximated=()))
        assert capa.total_mul_adds == LLAVA_CAPA
        assert capa.reduction_vs(vanilla) == pytest.approx(0.70988, abs=1e-5)
        assert 0.70 <= capa.reduction_vs(vanilla) <= 0.85

    def test_shares_sum_to_one(self):
        shares = cost_report(llava7b_spec()).shares()
        assert sum(shares.values()) == pytest.approx(1.0)

    def test_more_pruning_costs_less(self):
        totals = [cost_report(llava7b_spec(rho=rho)).total_mul_adds
                  for rho in (0.0, 0.5, 0.75, 0.9)]
        assert totals == sorted(totals, reverse=True)

    def test_summary_mentions_reduction(self):
        capa = cost_report(llava7b_spec())
        lines = capa.summary(cost_report(llava7b_spec(rho=0.0, approximated=())))
        assert "reduction=0.709883" in lines
        assert "linear_speedup=40/13" in lines


class TestCostSpec:

    def test_layer_lengths_shrink_after_prune_layer(self):
        spec = CostSpec(32, 64, 4, 4, 12, 4, prune_points=((1, 0.25),))
        assert spec.layer_lengths() == [(12, 4), (12, 4), (3, 4), (3, 4)]

    def test_rejects_mode_count_mismatch(self):
        with pytest.raises(ConfigurationError):
            CostSpec(32, 64, 4, 4, 12, 4, ffn_modes=(FfnMode.DENSE,))

    def test_rejects_empty_sequence(self):
        with pytest.raises(ConfigurationError):
            CostSpec(32, 64, 4, 4, 0, 0)

    def test_rejects_duplicate_prune_layers(self):
        with pytest.raises(ConfigurationError):
            CostSpec(32, 64, 4, 4, 12, 4, prune_points=((1, 0.5), (1, 0.25)))


PLAN_GRID = list(itertools.product(
    (FfnMode.DENSE, FfnMode.SKIP, FfnMode.HADAMARD),
    (False, True),
    (HadamardScope.VISUAL_ONLY, HadamardScope.ALL_TOKENS),
))


class TestMatchesInstrumentedPass:

    @pytest.mark.parametrize("mode,pruned,scope", PLAN_GRID)
    def test_report_equals_counter(self, small_model, small_config, prompt, mode, pruned,
                                   scope):
        approximated = [] if mode is FfnMode.DENSE else [1, 3]
        alphas = {layer: AlphaVector(layer, np.ones(32)) for layer in approximated} \
            if mode is FfnMode.HADAMARD else {}
        plan = LayerExecPlan.build(4, approximated, mode, scope, alphas=alphas)
        if pruned:
            plan = plan.with_prune_points([PrunePoint(1, 0.25, create_policy("contribution"))])
        trace = small_model.forward(prompt, plan)
        report = pipeline_report(small_config, plan, prompt)
        assert report.total_mul_adds == trace.counter.mul_adds
        assert report.total_flops == 2 * trace.counter.mul_adds
