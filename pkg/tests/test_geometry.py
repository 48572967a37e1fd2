"""Boxes, masks, transforms and the two object-proportion estimators."""

import numpy as np
import pytest

from alsmooth.geometry import (
    AugmentTransform,
    BoundingBox,
    ImageFrame,
    ObjectMask,
    apply_transform,
    objectness_analytic,
    objectness_pixels,
    transformed_objectness,
    warp_raster,
)


def random_box(rng, frame, min_side=1):
    w = int(rng.integers(min_side, frame.width + 1))
    h = int(rng.integers(min_side, frame.height + 1))
    x = int(rng.integers(0, frame.width - w + 1))
    y = int(rng.integers(0, frame.height - h + 1))
    return BoundingBox(x, y, w, h)


class TestBoundingBox:
    def test_positive_size_required(self):
        with pytest.raises(ValueError):
            BoundingBox(0, 0, 0, 5)
        with pytest.raises(ValueError):
            BoundingBox(0, 0, 5, -1)

    def test_degenerate_frame_rejected(self):
        with pytest.raises(ValueError):
            ImageFrame(0, 10)


class TestObjectnessAnalytic:
    def test_full_frame_object(self):
        frame = ImageFrame(64, 48)
        assert objectness_analytic(BoundingBox(0, 0, 64, 48), frame) == 1.0

    def test_box_outside_frame(self):
        frame = ImageFrame(32, 32)
        assert objectness_analytic(BoundingBox(100, 100, 8, 8), frame) == 0.0

    def test_hand_ratio(self):
        # 40 * 50 / (100 * 100)
        assert objectness_analytic(BoundingBox(10, 10, 40, 50), ImageFrame(100, 100)) == 0.20

    def test_clamps_before_measuring(self):
        frame = ImageFrame(100, 100)
        assert objectness_analytic(BoundingBox(90, 0, 40, 10), frame) == (10 * 10) / (100 * 100)


class TestObjectnessPixels:
    def test_all_ones(self):
        assert objectness_pixels(ObjectMask(np.ones((7, 9), dtype=bool))) == 1.0

    def test_all_zeros(self):
        assert objectness_pixels(ObjectMask(np.zeros((7, 9), dtype=bool))) == 0.0

    def test_direct_count(self):
        bits = np.zeros((10, 10), dtype=bool)
        bits[:5, :5] = True
        assert objectness_pixels(ObjectMask(bits)) == 0.25

    def test_zero_area_rejected(self):
        with pytest.raises(ValueError):
            ObjectMask(np.zeros((0, 5), dtype=bool))


class TestMask:
    def test_tight_box_roundtrip(self):
        rng = np.random.default_rng(5)
        frame = ImageFrame(40, 30)
        for _ in range(50):
            box = random_box(rng, frame)
            mask = ObjectMask.from_box(box, frame)
            assert mask.tight_box() == box

    def test_union_counts(self):
        frame = ImageFrame(20, 20)
        a = ObjectMask.from_box(BoundingBox(0, 0, 10, 10), frame)
        b = ObjectMask.from_box(BoundingBox(10, 10, 10, 10), frame)
        assert objectness_pixels(a.union(b)) == 0.5


class TestApplyTransform:
    def test_identity(self):
        rng = np.random.default_rng(11)
        frame = ImageFrame(16, 12)
        mask = ObjectMask(rng.random((12, 16)) > 0.5)
        t = AugmentTransform.identity(frame)
        assert np.array_equal(apply_transform(mask, t).bits, mask.bits)

    def test_crop_missing_object_is_zero(self):
        frame = ImageFrame(16, 16)
        mask = ObjectMask.from_box(BoundingBox(0, 0, 4, 4), frame)
        t = AugmentTransform(BoundingBox(8, 8, 8, 8), (8, 8), False)
        out = apply_transform(mask, t)
        assert out.bits.shape == (8, 8)
        assert out.bits.sum() == 0

    def test_left_half_crop_pixels(self):
        # 4x4 object at the origin of an 8x8 frame; the 4x8 left-half crop
        # keeps all 16 object pixels.
        frame = ImageFrame(8, 8)
        mask = ObjectMask.from_box(BoundingBox(0, 0, 4, 4), frame)
        t = AugmentTransform(BoundingBox(0, 0, 4, 8), (4, 8), False)
        out = apply_transform(mask, t)
        assert out.bits.shape == (8, 4)
        assert int(out.bits.sum()) == 16

    def test_crop_outside_frame_rejected(self):
        mask = ObjectMask(np.ones((8, 8), dtype=bool))
        t = AugmentTransform(BoundingBox(20, 20, 4, 4), (4, 4), False)
        with pytest.raises(ValueError):
            apply_transform(mask, t)

    def test_warp_requires_2d(self):
        with pytest.raises(ValueError):
            warp_raster(np.zeros((2, 2, 2)), AugmentTransform(BoundingBox(0, 0, 2, 2), (2, 2)))


class TestTransformedObjectness:
    def test_crop_inside_object(self):
        frame = ImageFrame(100, 100)
        box = BoundingBox(10, 10, 60, 60)
        t = AugmentTransform(BoundingBox(20, 20, 30, 30), (64, 64), False)
        assert transformed_objectness(box, frame, t) == 1.0

    def test_disjoint_crop(self):
        frame = ImageFrame(100, 100)
        box = BoundingBox(0, 0, 20, 20)
        t = AugmentTransform(BoundingBox(50, 50, 30, 30), (64, 64), False)
        assert transformed_objectness(box, frame, t) == 0.0

    def test_hand_intersection(self):
        frame = ImageFrame(100, 100)
        box = BoundingBox(0, 0, 50, 50)
        t = AugmentTransform(BoundingBox(25, 25, 50, 50), (64, 64), False)
        assert transformed_objectness(box, frame, t) == 0.25

    def test_degenerate_crop_rejected(self):
        frame = ImageFrame(10, 10)
        t = AugmentTransform(BoundingBox(50, 50, 5, 5), (4, 4), False)
        with pytest.raises(ValueError):
            transformed_objectness(BoundingBox(0, 0, 5, 5), frame, t)


class TestEstimatorAgreement:
    """The pixel-count and box-intersection estimators over random geometry."""

    def test_exact_agreement_without_resampling(self):
        rng = np.random.default_rng(123)
        frame = ImageFrame(48, 40)
        for _ in range(300):
            box = random_box(rng, frame)
            crop = random_box(rng, frame, min_side=2)
            t = AugmentTransform(crop, (crop.w, crop.h), hflip=bool(rng.integers(2)))
            mask = ObjectMask.from_box(box, frame)
            assert objectness_pixels(apply_transform(mask, t)) == transformed_objectness(box, frame, t)

    def test_resampling_error_bound(self):
        rng = np.random.default_rng(321)
        frame = ImageFrame(48, 40)
        for _ in range(200):
            box = random_box(rng, frame)
            crop = random_box(rng, frame, min_side=2)
            ow = int(rng.integers(4, 80))
            oh = int(rng.integers(4, 80))
            t = AugmentTransform(crop, (ow, oh), hflip=bool(rng.integers(2)))
            mask = ObjectMask.from_box(box, frame)
            analytic = transformed_objectness(box, frame, t)
            pixels = objectness_pixels(apply_transform(mask, t))
            assert abs(pixels - analytic) <= 2.0 / min(ow, oh)

    def test_analytic_scale_invariance(self):
        rng = np.random.default_rng(7)
        frame = ImageFrame(32, 32)
        for _ in range(100):
            box = random_box(rng, frame)
            crop = random_box(rng, frame, min_side=2)
            values = {
                transformed_objectness(box, frame, AugmentTransform(crop, (ow, oh), False))
                for ow, oh in [(8, 8), (64, 64), (17, 31), (crop.w, crop.h)]
            }
            assert len(values) == 1

    def test_flip_invariance(self):
        rng = np.random.default_rng(9)
        frame = ImageFrame(32, 32)
        for _ in range(100):
            box = random_box(rng, frame)
            crop = random_box(rng, frame, min_side=2)
            mask = ObjectMask.from_box(box, frame)
            plain = AugmentTransform(crop, (16, 16), False)
            flipped = AugmentTransform(crop, (16, 16), True)
            assert objectness_pixels(apply_transform(mask, plain)) == objectness_pixels(
                apply_transform(mask, flipped)
            )
            assert transformed_objectness(box, frame, plain) == transformed_objectness(
                box, frame, flipped
            )

    def test_growing_crop_never_increases_objectness(self):
        frame = ImageFrame(64, 64)
        box = BoundingBox(28, 28, 8, 8)
        previous = 1.0
        for grow in range(0, 28, 2):
            crop = BoundingBox(28 - grow, 28 - grow, 8 + 2 * grow, 8 + 2 * grow)
            value = transformed_objectness(box, frame, AugmentTransform(crop, (16, 16), False))
            assert value <= previous
            previous = value
