"""
Decoder model tests

Forward, decode and generate against the identity plan, the no-cache oracle and the
instrumented op counts.
"""

import numpy as np
import pytest

from engine.core.model import DecoderModel, greedy
from engine.core.numeric import OpCounter
from engine.core.plan import LayerExecPlan, PrunePoint, PruneStage, ProbeRequest
from engine.core.tokens import Modality, TokenStream
from engine.errors import ConfigurationError, ProbeError, SequenceTooLongError
from engine.implementations.hadamard import AlphaVector
from engine.implementations.swiglu import SwiGLUBlock, ffn_swiglu
from engine.interfaces.ffn_block import FfnMode, HadamardScope
from pruning.policy_factory import create_policy


def prune_plan(n_layers, layer=1, keep_ratio=0.25, policy="contribution", **kwargs):
    point = PrunePoint(layer, keep_ratio, create_policy(policy), **kwargs)
    return LayerExecPlan.vanilla(n_layers).with_prune_points([point])


class TestForward:

    def test_vanilla_plan_equals_default(self, small_model, prompt):
        default = small_model.forward(prompt)
        explicit = small_model.forward(prompt, LayerExecPlan.vanilla(4))
        np.testing.assert_array_equal(default.logits, explicit.logits)

    def test_full_keep_ratio_is_bit_exact(self, small_model, prompt):
        vanilla = small_model.forward(prompt)
        pruned = small_model.forward(prompt, prune_plan(4, keep_ratio=1.0))
        np.testing.assert_array_equal(vanilla.logits, pruned.logits)
        assert pruned.cache.row_counts() == vanilla.cache.row_counts()

    def test_attention_rows_are_distributions(self, small_model, prompt):
        trace = small_model.forward(prompt)
        for layer in range(4):
            rows = trace.probe(layer).attention.astype(np.float64)
            assert rows.shape == (4, len(prompt))
            np.testing.assert_allclose(rows.sum(axis=1), 1.0, atol=1e-5)

    def test_causality(self, small_model, prompt):
        t = 10
        ids = list(prompt.ids)
        ids[t] = (ids[t] + 1) % 32
        changed = TokenStream.build(ids, prompt.modality)
        before = small_model.forward(prompt).logits
        after = small_model.forward(changed).logits
        np.testing.assert_array_equal(before[:t], after[:t])
        assert not np.array_equal(before[t], after[t])

    def test_pruning_shrinks_later_layers(self, small_model, prompt):
        trace = small_model.forward(prompt, prune_plan(4, layer=1, keep_ratio=0.25))
        counts = trace.cache.row_counts()
        assert counts[:2] == [16, 16]
        assert counts[2:] == [4 + 3, 4 + 3]
        event = trace.prune_events[0]
        assert event.layer == 1
        assert event.n_visual_kept == 3
        assert len(trace.positions) == 7
        assert trace.cache.pruned_from == 2

    def test_prune_needs_text_query(self, small_model):
        stream = TokenStream.from_segments([1, 2, 3, 4], [])
        with pytest.raises(ConfigurationError):
            small_model.forward(stream, prune_plan(4, keep_ratio=0.5))

    def test_uncalibrated_hadamard_layer(self, small_model, prompt):
        plan = LayerExecPlan.build(4, [2])
        with pytest.raises(ConfigurationError, match="uncalibrated"):
            small_model.forward(prompt, plan)

    def test_sequence_too_long(self, small_model):
        stream = TokenStream.from_segments([1] * 120, [40] * 10)
        with pytest.raises(SequenceTooLongError):
            small_model.forward(stream)

    def test_unprobed_layer(self, small_model, prompt):
        trace = small_model.forward(prompt, None, ProbeRequest.at(1))
        trace.probe(1)
        with pytest.raises(ProbeError):
            trace.probe(0)

    def test_ffn_token_independence(self, small_model, prompt):
        order = np.random.default_rng(0).permutation(len(prompt))
        permuted = TokenStream.build(
            [prompt.ids[i] for i in order],
            [prompt.modality[i] for i in order],
            [prompt.positions[i] for i in order],
        )
        probes = ProbeRequest(bidirectional=True, attention=False)
        base = small_model.forward(prompt, None, probes)
        moved = small_model.forward(permuted, None, probes)
        for layer in range(4):
            np.testing.assert_allclose(moved.probe(layer).ffn_output,
                                       base.probe(layer).ffn_output[order], atol=1e-5)

    def test_vanilla_counter_matches_formula(self, small_model, small_config, prompt):
        n, d, d_ff = len(prompt), small_config.d_model, small_config.d_ff
        per_layer = 4 * n * d * d + 2 * n * n * d + 3 * d * d_ff * n
        trace = small_model.forward(prompt)
        assert trace.counter.mul_adds == small_config.n_layers * per_layer


class TestSwiGLU:

    def test_zero_input_gives_zero(self, small_weights):
        out = ffn_swiglu(np.zeros(32, dtype=np.float32), small_weights.layers[0])
        np.testing.assert_array_equal(out, np.zeros(32))

    def test_counter_per_token(self):
        from config.model_config import ModelConfig
        from engine.core.weights import init_weights
        layer = init_weights(ModelConfig(n_layers=1)).layers[0]
        counter = OpCounter()
        out = ffn_swiglu(np.ones(64, dtype=np.float32), layer, counter)
        assert out.shape == (64,)
        assert counter.mul_adds == 49152

    def test_block_permutes_with_rows(self, small_weights):
        rng = np.random.default_rng(1)
        hidden = rng.standard_normal((6, 32)).astype(np.float32)
        block = SwiGLUBlock(small_weights.layers[0])
        order = rng.permutation(6)
        out = block.apply(hidden, [Modality.VISUAL] * 6)
        moved = block.apply(hidden[order], [Modality.VISUAL] * 6)
        np.testing.assert_allclose(moved, out[order], atol=1e-6)


class TestDecode:

    def test_identity_plan_bit_exact_over_32_steps(self, small_model, prompt):
        vanilla = small_model.generate(prompt, None, 32)
        identity = small_model.generate(prompt, prune_plan(4, keep_ratio=1.0), 32)
        assert identity.tokens == vanilla.tokens
        for mine, theirs in zip(identity.logits, vanilla.logits):
            np.testing.assert_array_equal(mine, theirs)

    def test_greedy_generation_deterministic(self, small_model, prompt):
        first = small_model.generate(prompt, None, 6)
        second = small_model.generate(prompt, None, 6)
        assert first.tokens == second.tokens

    def test_cache_matches_from_scratch_forward(self, small_model, prompt):
        result = small_model.generate(prompt, None, 8)
        stream = prompt
        for t in range(1, 8):
            stream = stream.append(result.tokens[t - 1])
            scratch = small_model.forward(stream, None, ProbeRequest.none()).last_logits
            np.testing.assert_allclose(result.logits[t], scratch, atol=1e-5)

    def test_pruned_decode_matches_replayed_forward(self, small_model, prompt):
        plan = prune_plan(4, layer=1, keep_ratio=0.25)
        result = small_model.generate(prompt, plan, 6)
        kept = {event.layer: set(event.kept_positions) for event in result.prefill.prune_events}
        stream = prompt
        for t in range(1, 6):
            stream = stream.append(result.tokens[t - 1])
            for positions in kept.values():
                positions.add(stream.positions[-1])
            scratch = small_model.forward(stream, plan, ProbeRequest.none(), keep_override=kept)
            np.testing.assert_allclose(result.logits[t], scratch.last_logits, atol=1e-5)

    def test_decoded_tokens_take_fresh_original_positions(self, small_model, prompt):
        result = small_model.generate(prompt, prune_plan(4, layer=1, keep_ratio=0.25), 4)
        cache = result.steps[-1].cache
        assert cache.row_counts()[:2] == [19, 19]
        assert cache.row_counts()[2:] == [3 + 4 + 3, 3 + 4 + 3]
        for layer in cache.layers:
            assert list(layer.positions) == sorted(set(layer.positions))
            assert layer.positions[-3:] == [16, 17, 18]

    def test_forced_tokens(self, small_model, prompt):
        result = small_model.generate(prompt, None, 3, forced=[40, 41, 42])
        assert result.tokens == [40, 41, 42]
        assert len(result.logits) == 3
        assert result.logits[0].shape == (64,)
        assert greedy(result.logits[0]) == small_model.generate(prompt, None, 1).tokens[0]

    def test_decode_stage_pruning(self, small_model, prompt):
        point = PrunePoint(1, 0.25, create_policy("contribution"), PruneStage.DECODE, 2)
        plan = LayerExecPlan.vanilla(4).with_prune_points([point])
        result = small_model.generate(prompt, plan, 5)
        events = [step.prune_event for step in result.steps]
        assert events[0] is None and events[2] is None
        assert events[1] is not None and events[1].step == 2
        cache = result.steps[1].cache
        assert cache.layers[1].n_rows == 16 + 2
        assert cache.layers[2].n_rows == 4 + 3 + 2
        assert cache.pruned_from == 2
        assert len(cache.evicted) == 9
        later = result.steps[2]
        assert later.contributions
        assert all(r.position not in cache.evicted for r in later.contributions)

    def test_cache_plan_layer_mismatch(self, small_model, prompt):
        trace = small_model.forward(prompt)
        with pytest.raises(ConfigurationError):
            small_model.decode_step(trace.cache, 3, LayerExecPlan.vanilla(3))

    def test_decode_does_not_mutate_cache(self, small_model, prompt):
        trace = small_model.forward(prompt)
        before = trace.cache.row_counts()
        small_model.decode_step(trace.cache, 40)
        assert trace.cache.row_counts() == before
        assert trace.cache.steps == 0


class TestBlocks:

    def test_block_override_replaces_dense_block(self, small_weights, prompt):
        class Identity(SwiGLUBlock):
            def apply(self, hidden, modality, counter=None):
                return hidden.astype(np.float32)

        model = DecoderModel(small_weights, {0: Identity(small_weights.layers[0])})
        trace = model.forward(prompt)
        np.testing.assert_array_equal(trace.probe(0).ffn_output, trace.probe(0).ffn_input)

    def test_override_for_missing_layer(self, small_weights):
        with pytest.raises(ConfigurationError):
            DecoderModel(small_weights, {9: SwiGLUBlock(small_weights.layers[0])})

    def test_unit_alpha_hadamard_passes_visual_rows(self, small_model, prompt):
        alpha = AlphaVector(2, np.ones(32))
        plan = LayerExecPlan.build(4, [2], FfnMode.HADAMARD, HadamardScope.VISUAL_ONLY,
                                   alphas={2: alpha})
        skip = LayerExecPlan.build(4, [2], FfnMode.SKIP, HadamardScope.VISUAL_ONLY)
        np.testing.assert_array_equal(small_model.forward(prompt, plan).logits,
                                      small_model.forward(prompt, skip).logits)
