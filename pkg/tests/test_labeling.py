"""Target-vector constructors: examples, algebra and the policy wrapper."""

import math

import numpy as np
import pytest

from alsmooth.labeling import (
    LabelingPolicy,
    adaptive_label,
    context_label,
    hard_label,
    smoothing_from_objectness,
    uniform_smooth_label,
)


def assert_simplex(probs, tol=1e-12):
    assert abs(math.fsum(probs.tolist()) - 1.0) <= tol
    assert (probs >= 0.0).all()
    assert (probs <= 1.0).all()


class TestHardLabel:
    def test_examples(self):
        assert hard_label(0, 2).tolist() == [1.0, 0.0]
        assert hard_label(3, 5).tolist() == [0.0, 0.0, 0.0, 1.0, 0.0]

    def test_sums_to_one(self):
        for k in (2, 3, 17):
            for y in range(k):
                assert math.fsum(hard_label(y, k).tolist()) == 1.0

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            hard_label(5, 5)
        with pytest.raises(ValueError):
            hard_label(-1, 5)


class TestUniformSmoothLabel:
    def test_zero_smoothing_is_hard(self):
        assert np.array_equal(uniform_smooth_label(2, 7, 0.0), hard_label(2, 7))

    def test_thousand_class_point_nine(self):
        probs = uniform_smooth_label(0, 1000, 0.1)
        assert probs[0] == 0.9
        np.testing.assert_allclose(probs[1:], 0.1 / 999, rtol=0, atol=1e-18)

    def test_hand_values(self):
        np.testing.assert_allclose(
            uniform_smooth_label(1, 5, 0.6), [0.15, 0.4, 0.15, 0.15, 0.15], rtol=0, atol=1e-15
        )

    def test_range_violations(self):
        with pytest.raises(ValueError):
            uniform_smooth_label(0, 5, 1.5)
        with pytest.raises(ValueError):
            uniform_smooth_label(7, 5, 0.1)


class TestContextLabel:
    def test_two_classes(self):
        assert context_label(2).tolist() == [0.5, 0.5]

    def test_thousand_classes(self):
        probs = context_label(1000)
        np.testing.assert_allclose(probs, 0.001, rtol=0, atol=1e-15)
        assert math.fsum(probs.tolist()) == 1.0

    def test_exact_sum_across_sizes(self):
        for k in (2, 3, 7, 10, 97, 1000):
            assert math.fsum(context_label(k).tolist()) == 1.0


class TestSmoothingFromObjectness:
    def test_extremes(self):
        assert smoothing_from_objectness(1.0) == 0.0
        assert smoothing_from_objectness(0.0) == 1.0

    def test_representative_value(self):
        assert smoothing_from_objectness(0.49) == 1.0 - 0.49

    def test_out_of_range_rejected(self):
        for bad in (-0.1, 1.1, float("nan")):
            with pytest.raises(ValueError):
                smoothing_from_objectness(bad)


class TestAdaptiveLabel:
    def test_blend_zero_is_hard(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            k = int(rng.integers(2, 12))
            y = int(rng.integers(k))
            objectness = float(rng.random())
            assert np.array_equal(adaptive_label(y, k, objectness, 0.0), hard_label(y, k))

    def test_uniform_rule_at_zero_objectness(self):
        probs = adaptive_label(0, 4, 0.0, 0.75)
        assert probs[0] == 0.25 + 0.75 * 0.25
        np.testing.assert_allclose(probs[1:], 0.1875, rtol=0, atol=1e-15)
        # the true-class mass never drops below 1 - blend
        assert probs[0] >= 0.25

    def test_raw_rule_at_zero_objectness(self):
        probs = adaptive_label(0, 4, 0.0, 1.0, uniform_when_absent=False)
        assert probs[0] == 0.0
        np.testing.assert_allclose(probs[1:], 1.0 / 3.0, rtol=0, atol=1e-15)

    def test_full_blend_hand_values(self):
        np.testing.assert_allclose(
            adaptive_label(0, 5, 0.4, 1.0), [0.4, 0.15, 0.15, 0.15, 0.15], rtol=0, atol=1e-15
        )

    def test_range_violations(self):
        with pytest.raises(ValueError):
            adaptive_label(0, 5, -0.2, 1.0)
        with pytest.raises(ValueError):
            adaptive_label(0, 5, 0.5, 1.2)


class TestLabelAlgebra:
    """Randomized-grid properties shared by every constructor."""

    def test_simplex_everywhere(self):
        rng = np.random.default_rng(42)
        for _ in range(500):
            k = int(rng.integers(2, 40))
            y = int(rng.integers(k))
            assert_simplex(hard_label(y, k))
            assert_simplex(uniform_smooth_label(y, k, float(rng.random())))
            assert_simplex(adaptive_label(y, k, float(rng.random()), float(rng.random())))
            assert_simplex(context_label(k))

    def test_full_blend_matches_uniform_smoothing(self):
        rng = np.random.default_rng(43)
        for _ in range(300):
            k = int(rng.integers(2, 20))
            y = int(rng.integers(k))
            smoothing = float(rng.uniform(1e-9, 1.0 - 1e-9))
            via_adaptive = adaptive_label(y, k, 1.0 - smoothing, 1.0)
            direct = uniform_smooth_label(y, k, smoothing)
            np.testing.assert_allclose(via_adaptive, direct, rtol=0, atol=1e-12)

    def test_full_blend_matches_at_saturated_smoothing_raw(self):
        # At objectness exactly 0 the default emits the uniform vector; the
        # raw variant still matches the plain smoothing formula.
        for k in (2, 5, 9):
            for y in range(k):
                raw = adaptive_label(y, k, 0.0, 1.0, uniform_when_absent=False)
                np.testing.assert_allclose(raw, uniform_smooth_label(y, k, 1.0), rtol=0, atol=1e-12)

    def test_true_class_floor(self):
        rng = np.random.default_rng(44)
        for _ in range(500):
            k = int(rng.integers(2, 25))
            y = int(rng.integers(k))
            blend = float(rng.random())
            probs = adaptive_label(y, k, float(rng.random()), blend)
            assert probs[y] >= 1.0 - blend

    def test_monotone_in_objectness(self):
        rng = np.random.default_rng(45)
        for _ in range(60):
            k = int(rng.integers(2, 12))
            y = int(rng.integers(k))
            blend = float(rng.uniform(0.05, 1.0))
            grid = np.sort(rng.uniform(1e-9, 1.0, size=30))
            labels = [adaptive_label(y, k, float(ob), blend) for ob in grid]
            for prev, cur in zip(labels, labels[1:]):
                assert cur[y] >= prev[y]
                off = [i for i in range(k) if i != y]
                assert (np.asarray(cur)[off] <= np.asarray(prev)[off] + 1e-12).all()

    def test_argmax_is_true_class_when_dominant(self):
        rng = np.random.default_rng(46)
        for _ in range(300):
            k = int(rng.integers(2, 15))
            y = int(rng.integers(k))
            blend = float(rng.random())
            objectness = float(rng.uniform(1e-9, 1.0))
            smoothing = 1.0 - objectness
            probs = adaptive_label(y, k, objectness, blend)
            if blend * (1 - smoothing) + (1 - blend) > blend * smoothing / (k - 1):
                assert int(np.argmax(probs)) == y


class TestLabelingPolicy:
    def test_parse(self):
        assert LabelingPolicy.parse("hard", 10).mode == "hard"
        p = LabelingPolicy.parse("uniform:0.2", 10)
        assert p.mode == "uniform" and p.smoothing == 0.2
        p = LabelingPolicy.parse("adaptive:0.75", 10)
        assert p.mode == "adaptive" and p.blend == 0.75
        with pytest.raises(ValueError):
            LabelingPolicy.parse("mixup:0.5", 10)
        with pytest.raises(ValueError):
            LabelingPolicy.parse("hard:0.3", 10)

    def test_names_round_trip(self):
        for text in ("hard", "uniform:0.1", "adaptive:1", "adaptive:0.75"):
            policy = LabelingPolicy.parse(text, 10)
            assert LabelingPolicy.parse(policy.name, 10) == policy

    def test_targets(self):
        policy = LabelingPolicy.parse("adaptive:1.0", 5)
        np.testing.assert_allclose(policy.target(0, 0.4), [0.4, 0.15, 0.15, 0.15, 0.15], atol=1e-15)
        with pytest.raises(ValueError):
            policy.target(0)  # objectness required

    def test_context_targets_per_mode(self):
        hard = LabelingPolicy.parse("hard", 4)
        uniform = LabelingPolicy.parse("uniform:0.2", 4)
        adaptive = LabelingPolicy.parse("adaptive:1.0", 4)
        assert np.array_equal(hard.context_target(2), hard_label(2, 4))
        assert np.array_equal(uniform.context_target(2), uniform_smooth_label(2, 4, 0.2))
        assert np.array_equal(adaptive.context_target(2), context_label(4))
