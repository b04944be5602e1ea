"""
Numeric kernel tests
"""

import math

import numpy as np
import pytest

from engine.core.numeric import (
    UNDEFINED_SIMILARITY,
    OpCounter,
    cosine_sim,
    l2_norm,
    matmul,
    rms_norm,
    row_cosines,
    softmax,
)
from engine.errors import ConfigurationError


class TestMatmul:

    def test_hand_computed_product(self):
        a = np.array([[1, 2], [3, 4]], dtype=np.float32)
        b = np.array([[5], [6]], dtype=np.float32)
        np.testing.assert_array_equal(matmul(a, b), [[17], [39]])

    def test_identity_and_zeros(self):
        rng = np.random.default_rng(0)
        b = rng.standard_normal((2, 5)).astype(np.float32)
        np.testing.assert_array_equal(matmul(np.eye(2, dtype=np.float32), b), b)
        other = rng.standard_normal((3, 4)).astype(np.float32)
        zeros = matmul(np.zeros((2, 3), dtype=np.float32), other)
        np.testing.assert_array_equal(zeros, np.zeros((2, 4)))

    def test_counter_adds_m_k_n(self):
        counter = OpCounter()
        matmul(np.ones((3, 5), dtype=np.float32), np.ones((5, 7), dtype=np.float32), counter)
        assert counter.mul_adds == 3 * 5 * 7
        assert counter.flops == 2 * 3 * 5 * 7

    def test_dimension_mismatch(self):
        with pytest.raises(ConfigurationError):
            matmul(np.ones((2, 3), dtype=np.float32), np.ones((4, 2), dtype=np.float32))

    def test_associativity(self):
        rng = np.random.default_rng(1)
        a, b, c = (rng.standard_normal(shape).astype(np.float32)
                   for shape in ((4, 6), (6, 5), (5, 3)))
        np.testing.assert_allclose(matmul(matmul(a, b), c), matmul(a, matmul(b, c)),
                                   rtol=1e-4, atol=1e-5)


class TestSoftmax:

    def test_uniform(self):
        np.testing.assert_allclose(softmax(np.zeros(4)), [0.25] * 4, atol=1e-12)

    def test_closed_form(self):
        c = 1.7
        np.testing.assert_allclose(softmax(np.array([c, c + math.log(2.0)])),
                                   [1 / 3, 2 / 3], atol=1e-12)

    def test_large_logits_do_not_overflow(self):
        probs = softmax(np.array([1000.0, 0.0]))
        assert np.all(np.isfinite(probs))
        assert probs[0] == pytest.approx(1.0)
        assert probs[1] == pytest.approx(0.0, abs=1e-300)

    def test_shift_invariance(self):
        rng = np.random.default_rng(2)
        logits = rng.standard_normal(32)
        base = softmax(logits)
        assert base.sum() == pytest.approx(1.0, abs=1e-6)
        assert np.max(np.abs(softmax(logits + 12.5) - base)) < 1e-6

    def test_masked_entries_get_zero(self):
        probs = softmax(np.array([0.0, -np.inf, 0.0]))
        np.testing.assert_allclose(probs, [0.5, 0.0, 0.5])

    def test_empty_vector(self):
        with pytest.raises(ConfigurationError):
            softmax(np.array([]))


class TestNorms:

    def test_l2_norm(self):
        assert l2_norm(np.zeros(8)) == 0.0
        assert l2_norm(np.array([3.0, 4.0])) == pytest.approx(5.0)
        v = np.random.default_rng(3).standard_normal(16)
        assert l2_norm(v) == pytest.approx(math.sqrt(sum(x * x for x in v)), rel=1e-6)

    def test_cosine_examples(self):
        x = np.array([0.3, -1.2, 4.0])
        assert cosine_sim(x, x) == pytest.approx(1.0)
        assert cosine_sim(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(0.0)
        assert cosine_sim(np.array([1.0, 1.0]), np.array([2.0, 2.0])) == pytest.approx(1.0)

    def test_cosine_of_zero_vector_is_undefined(self):
        assert cosine_sim(np.zeros(3), np.ones(3)) is UNDEFINED_SIMILARITY

    def test_cosine_symmetric_and_bounded(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            x, y = rng.standard_normal(8), rng.standard_normal(8)
            assert cosine_sim(x, y) == cosine_sim(y, x)
            assert -1.0 <= cosine_sim(x, y) <= 1.0

    def test_row_cosines_match_cosine_sim(self):
        rng = np.random.default_rng(5)
        x, y = rng.standard_normal((5, 6)), rng.standard_normal((5, 6))
        y[2] = 0.0
        values, defined = row_cosines(x, y)
        assert list(defined) == [True, True, False, True, True]
        for i in (0, 1, 3, 4):
            assert values[i] == pytest.approx(cosine_sim(x[i], y[i]), abs=1e-12)

    def test_rms_norm_unit_rms(self):
        x = np.random.default_rng(6).standard_normal((3, 16))
        out = rms_norm(x, np.ones(16)).astype(np.float64)
        np.testing.assert_allclose(np.sqrt(np.mean(out * out, axis=-1)), 1.0, rtol=1e-4)


def test_counter_rejects_negative_increment():
    counter = OpCounter()
    with pytest.raises(ConfigurationError):
        counter.add(-1)
    counter.add(5)
    counter.reset()
    assert counter.mul_adds == 0
