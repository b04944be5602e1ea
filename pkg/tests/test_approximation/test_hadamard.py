"""
Hadamard calibration: moments, closed-form alpha and the planted-diagonal recovery
"""

from dataclasses import replace

import numpy as np
import pytest

from approximation.hadamard import (
    CalibMoments,
    accumulate,
    calibrate_layers,
    collect_moments,
    reconstruction_errors,
    solve_alpha,
    squared_error,
)
from engine.core.model import DecoderModel
from engine.core.numeric import OpCounter
from engine.core.plan import LayerExecPlan
from engine.core.weights import init_weights
from engine.errors import CalibrationError, ConfigurationError
from engine.implementations.hadamard import AlphaVector, apply_hadamard
from engine.interfaces.ffn_block import FfnMode, HadamardScope, IFeedForwardBlock


def moments_of(x, y, layer=0):
    return accumulate(CalibMoments.zeros(layer, x.shape[-1]), x, y)


class DiagonalBlock(IFeedForwardBlock):
    """FFN replaced by an exact element-wise map"""

    def __init__(self, diagonal):
        self.diagonal = np.asarray(diagonal, dtype=np.float32)

    def apply(self, hidden, modality, counter=None):
        return (hidden * self.diagonal).astype(np.float32)

    def get_block_name(self):
        return "Diagonal"


class TestMoments:

    def test_single_sample(self):
        m = moments_of(np.array([1.0, 2.0]), np.array([3.0, 4.0]))
        np.testing.assert_array_equal(m.sum_xy, [3.0, 8.0])
        np.testing.assert_array_equal(m.sum_xx, [1.0, 4.0])
        np.testing.assert_array_equal(m.sum_yy, [9.0, 16.0])
        assert m.n_samples == 1

    def test_two_samples(self):
        m = moments_of(np.array([[1.0, 0.0], [2.0, -1.0]]), np.array([[1.0, 1.0], [1.0, 2.0]]))
        np.testing.assert_array_equal(m.sum_xy, [3.0, -2.0])
        np.testing.assert_array_equal(m.sum_xx, [5.0, 1.0])
        assert m.n_samples == 2

    def test_batch_equals_streamed(self):
        rng = np.random.default_rng(0)
        x, y = rng.standard_normal((100, 8)), rng.standard_normal((100, 8))
        streamed = CalibMoments.zeros(0, 8)
        for row in range(100):
            streamed = accumulate(streamed, x[row], y[row])
        batch = moments_of(x, y)
        np.testing.assert_allclose(streamed.sum_xy, batch.sum_xy, rtol=1e-12)
        np.testing.assert_allclose(streamed.sum_xx, batch.sum_xx, rtol=1e-12)
        assert streamed.n_samples == batch.n_samples == 100

    def test_merge(self):
        rng = np.random.default_rng(1)
        x, y = rng.standard_normal((10, 4)), rng.standard_normal((10, 4))
        merged = moments_of(x[:4], y[:4]).merge(moments_of(x[4:], y[4:]))
        whole = moments_of(x, y)
        np.testing.assert_allclose(merged.sum_xy, whole.sum_xy, rtol=1e-12)
        assert merged.n_samples == 10

    def test_input_untouched(self):
        base = CalibMoments.zeros(0, 2)
        accumulate(base, np.ones(2), np.ones(2))
        assert base.n_samples == 0
        assert not base.sum_xx.any()

    def test_shape_mismatch(self):
        with pytest.raises(ConfigurationError):
            accumulate(CalibMoments.zeros(0, 3), np.ones(2), np.ones(2))

    def test_non_finite_sample(self):
        with pytest.raises(ConfigurationError):
            accumulate(CalibMoments.zeros(0, 2), np.array([1.0, np.nan]), np.ones(2))


class TestSolveAlpha:

    def test_doubling_map(self):
        x = np.random.default_rng(2).standard_normal((20, 5))
        np.testing.assert_allclose(solve_alpha(moments_of(x, 2.0 * x)).alpha, 2.0, rtol=1e-6)

    def test_identity_map(self):
        x = np.random.default_rng(3).standard_normal((20, 5))
        alpha = solve_alpha(moments_of(x, x))
        np.testing.assert_allclose(alpha.alpha, 1.0, rtol=1e-6)
        assert not alpha.fallback_mask.any()

    def test_zero_column_falls_back_to_one(self):
        x = np.random.default_rng(4).standard_normal((20, 3))
        x[:, 1] = 0.0
        alpha = solve_alpha(moments_of(x, 3.0 * x + 1.0))
        assert alpha.alpha[1] == 1.0
        assert list(alpha.fallback_mask) == [False, True, False]

    def test_no_samples(self):
        with pytest.raises(CalibrationError):
            solve_alpha(CalibMoments.zeros(0, 4))

    def test_least_squares_optimality(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            x = rng.standard_normal((256, 64))
            y = rng.standard_normal((256, 64)) + 0.5 * x
            m = moments_of(x, y)
            best = m.sum_xy / m.sum_xx
            np.testing.assert_allclose(solve_alpha(m).alpha, best, rtol=1e-6)
            optimum = squared_error(m, best)
            for k in rng.choice(64, size=20, replace=False):
                for step in (1e-3, -1e-3, 1e-2, -1e-2):
                    moved = best.copy()
                    moved[k] += step
                    assert squared_error(m, moved) > optimum

    def test_scale_covariance(self):
        rng = np.random.default_rng(6)
        x, y = rng.standard_normal((50, 6)), rng.standard_normal((50, 6))
        base = solve_alpha(moments_of(x, y)).alpha.astype(np.float64)
        np.testing.assert_allclose(solve_alpha(moments_of(4.0 * x, y)).alpha, base / 4.0,
                                   rtol=1e-5)
        np.testing.assert_allclose(solve_alpha(moments_of(x, 3.0 * y)).alpha, base * 3.0,
                                   rtol=1e-5)

    @pytest.mark.parametrize("seed", range(10))
    def test_never_worse_than_skip(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((64, 16))
        y = x * rng.uniform(0.2, 1.8, 16) + 0.3 * rng.standard_normal((64, 16))
        m = moments_of(x, y)
        error = squared_error(m, solve_alpha(m).alpha)
        assert error <= squared_error(m, np.ones(16)) * (1.0 + 1e-9) + 1e-9


class TestApplyHadamard:

    def test_counts_one_mul_add_per_element(self):
        counter = OpCounter()
        out = apply_hadamard(np.ones((3, 64)), np.full(64, 2.0), counter)
        assert counter.mul_adds == 192
        np.testing.assert_array_equal(out, 2.0)

    def test_length_mismatch(self):
        with pytest.raises(ConfigurationError):
            apply_hadamard(np.ones((2, 4)), np.ones(3))

    def test_non_finite_alpha(self):
        with pytest.raises(ConfigurationError):
            AlphaVector(0, np.array([1.0, np.inf]))


class TestCalibrateLayers:

    def test_recovers_planted_diagonal(self, small_weights, calib_streams, prompt):
        diagonal = np.random.default_rng(8).uniform(0.5, 1.5, 32)
        model = DecoderModel(small_weights, {2: DiagonalBlock(diagonal)})
        (alpha,) = calibrate_layers(model, [2], calib_streams, scope="all")
        assert alpha.layer == 2
        np.testing.assert_allclose(alpha.alpha, diagonal, rtol=1e-4)
        plan = LayerExecPlan.build(4, [2], FfnMode.HADAMARD, HadamardScope.ALL_TOKENS,
                                   alphas={2: alpha})
        np.testing.assert_allclose(model.forward(prompt, plan).logits,
                                   model.forward(prompt).logits, atol=1e-4)

    def test_residual_only_layer_gives_unit_alpha(self, small_weights, scaled_weights,
                                                   calib_streams):
        model = DecoderModel(scaled_weights(small_weights, ("w_down",), 0.0))
        alphas = calibrate_layers(model, [0, 3], calib_streams[:2])
        assert [a.layer for a in alphas] == [0, 3]
        for alpha in alphas:
            np.testing.assert_allclose(alpha.alpha, 1.0, rtol=1e-6)

    def test_repeatable(self, small_model, calib_streams):
        first = calibrate_layers(small_model, [1, 2], calib_streams)
        second = calibrate_layers(small_model, [1, 2], calib_streams)
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a.alpha, b.alpha)

    def test_scope_changes_sample_count(self, small_model, calib_streams):
        visual = collect_moments(small_model, [1], calib_streams, "visual")
        everything = collect_moments(small_model, [1], calib_streams, "all")
        assert visual[1].n_samples == 6 * 12
        assert everything[1].n_samples == 6 * 16

    def test_reconstruction_report(self, small_model, calib_streams):
        moments = collect_moments(small_model, [0, 2], calib_streams)
        alphas = {a.layer: a for a in calibrate_layers(small_model, [0, 2], calib_streams)}
        report = reconstruction_errors(moments, alphas)
        assert [r.layer for r in report] == [0, 2]
        for row in report:
            assert row.mse_hadamard <= row.mse_skip * (1.0 + 1e-6)
        with pytest.raises(CalibrationError):
            reconstruction_errors(moments, {0: alphas[0]})

    @pytest.mark.parametrize("scope", ["visual", "all"])
    @pytest.mark.parametrize("seed", range(10))
    def test_hadamard_never_worse_than_skip_on_seeded_models(self, small_config,
                                                              calib_streams, seed, scope):
        model = DecoderModel(init_weights(replace(small_config, seed=seed)))
        layers = list(range(small_config.n_layers))
        moments = collect_moments(model, layers, calib_streams, scope)
        alphas = {a.layer: a for a in calibrate_layers(model, layers, calib_streams, scope)}
        report = reconstruction_errors(moments, alphas)
        assert [r.layer for r in report] == layers
        for row in report:
            assert row.mse_hadamard <= row.mse_skip + 1e-9

    def test_empty_calibration_set(self, small_model):
        with pytest.raises(CalibrationError):
            calibrate_layers(small_model, [1], [])

    def test_no_layers(self, small_model, calib_streams):
        with pytest.raises(CalibrationError):
            calibrate_layers(small_model, [], calib_streams)

    def test_bad_thread_setting(self, small_model, calib_streams, monkeypatch):
        monkeypatch.setenv("CAPA_THREADS", "many")
        with pytest.raises(ConfigurationError):
            calibrate_layers(small_model, [1], calib_streams)
