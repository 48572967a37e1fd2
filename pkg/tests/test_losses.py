"""Softmax / cross-entropy / gradient: examples and oracle checks."""

import math

import numpy as np
import pytest

from alsmooth.labeling import context_label, hard_label, uniform_smooth_label
from alsmooth.losses import cross_entropy, cross_entropy_grad, log_softmax, softmax


def fd_gradient(logits, target, step=1e-5):
    """Central finite differences of the loss in each logit coordinate."""
    logits = np.asarray(logits, dtype=np.float64)
    grad = np.zeros_like(logits)
    for i in range(logits.size):
        hi = logits.copy()
        lo = logits.copy()
        hi[i] += step
        lo[i] -= step
        grad[i] = (cross_entropy(hi, target) - cross_entropy(lo, target)) / (2 * step)
    return grad


def entropy(probs):
    probs = np.asarray(probs, dtype=np.float64)
    nz = probs[probs > 0]
    return float(-(nz * np.log(nz)).sum())


class TestSoftmax:
    def test_uniform_for_equal_logits(self):
        np.testing.assert_array_equal(softmax([3.0, 3.0, 3.0, 3.0]), [0.25, 0.25, 0.25, 0.25])

    def test_shift_invariance_bitwise(self):
        # With exactly representable sums the max shift cancels the constant
        # before any exp, so outputs match bit for bit.
        rng = np.random.default_rng(1)
        z = rng.integers(-8, 8, size=9) / 4.0
        for c in (1.0, -7.5, 123.0):
            assert np.array_equal(softmax(z), softmax(z + c))

    def test_shift_invariance_general(self):
        rng = np.random.default_rng(2)
        z = rng.normal(size=9)
        for c in (0.3, -17.77, 90.1):
            np.testing.assert_allclose(softmax(z), softmax(z + c), rtol=0, atol=1e-12)

    def test_exact_exponentials(self):
        probs = softmax(np.log([1.0, 2.0, 3.0]))
        np.testing.assert_allclose(probs, [1 / 6, 2 / 6, 3 / 6], rtol=0, atol=1e-15)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            softmax([0.0, np.inf])
        with pytest.raises(ValueError):
            softmax([0.0, np.nan])

    def test_no_underflow_at_confident_logits(self):
        ls = log_softmax([1000.0, 0.0])
        assert np.isfinite(ls).all()
        assert ls[1] == pytest.approx(-1000.0)


class TestCrossEntropy:
    def test_perfect_prediction_limit(self):
        loss = cross_entropy([40.0, 0.0], hard_label(0, 2))
        assert 0.0 <= loss < 1e-12

    def test_uniform_against_uniform_is_log_k(self):
        for k in (2, 5, 10, 100):
            loss = cross_entropy(np.zeros(k), context_label(k))
            assert loss == pytest.approx(math.log(k), abs=1e-12)

    def test_hand_value(self):
        assert cross_entropy([0.0, 0.0], [0.9, 0.1]) == pytest.approx(math.log(2), abs=1e-12)

    def test_batched_shape(self):
        z = np.zeros((4, 3))
        t = np.tile(context_label(3), (4, 1))
        losses = cross_entropy(z, t)
        assert losses.shape == (4,)
        np.testing.assert_allclose(losses, math.log(3), atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            cross_entropy([0.0, 0.0], [1.0, 0.0, 0.0])

    def test_gibbs_inequality(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            k = int(rng.integers(2, 12))
            z = rng.normal(scale=3.0, size=k)
            target = rng.dirichlet(np.ones(k))
            assert cross_entropy(z, target) >= entropy(target) - 1e-12

    def test_gibbs_equality_at_matching_distribution(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            k = int(rng.integers(2, 10))
            target = rng.dirichlet(np.ones(k)) + 1e-6
            target = target / target.sum()
            z = np.log(target)
            assert cross_entropy(z, target) == pytest.approx(entropy(target), abs=1e-9)

    def test_midpoint_convexity(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            k = int(rng.integers(2, 8))
            z1 = rng.normal(scale=4.0, size=k)
            z2 = rng.normal(scale=4.0, size=k)
            target = rng.dirichlet(np.ones(k))
            mid = cross_entropy((z1 + z2) / 2, target)
            assert mid <= (cross_entropy(z1, target) + cross_entropy(z2, target)) / 2 + 1e-12

    def test_shift_invariance(self):
        rng = np.random.default_rng(5)
        z = rng.normal(size=6)
        target = rng.dirichlet(np.ones(6))
        for c in (0.5, -20.0, 300.0):
            assert abs(cross_entropy(z, target) - cross_entropy(z + c, target)) <= 1e-12
            assert np.abs(
                cross_entropy_grad(z, target) - cross_entropy_grad(z + c, target)
            ).max() <= 1e-12


class TestGradient:
    def test_zero_at_stationary_point(self):
        rng = np.random.default_rng(6)
        z = rng.normal(size=5)
        target = softmax(z)
        np.testing.assert_allclose(cross_entropy_grad(z, target), 0.0, atol=1e-16)

    def test_entries_sum_to_zero(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            k = int(rng.integers(2, 30))
            z = rng.normal(scale=5.0, size=k)
            target = rng.dirichlet(np.ones(k))
            assert abs(cross_entropy_grad(z, target).sum()) <= 1e-12

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(8)
        for k in (2, 5, 100):
            for _ in range(20):
                z = rng.normal(scale=2.0, size=k)
                target = rng.dirichlet(np.ones(k))
                analytic = cross_entropy_grad(z, target)
                numeric = fd_gradient(z, target)
                rel = np.linalg.norm(analytic - numeric) / max(
                    np.linalg.norm(analytic), np.linalg.norm(numeric)
                )
                assert rel < 1e-6

    def test_uniform_smoothed_target_gradient(self):
        z = np.array([0.3, -0.2, 1.1, 0.0])
        target = uniform_smooth_label(2, 4, 0.3)
        np.testing.assert_allclose(cross_entropy_grad(z, target), softmax(z) - target, atol=0)
