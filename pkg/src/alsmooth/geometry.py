"""Axis-aligned boxes, binary object masks and crop/scale/flip transforms.

Two estimators of the object proportion of a view are provided: an analytic
one from box/window intersection areas, and an empirical one that counts set
mask pixels.  For grid-aligned rectangles viewed without resampling the two
agree exactly; under nearest-neighbor resampling the pixel count deviates by
at most ``2 / min(output dims)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ImageFrame:
    """Pixel dimensions of a source image."""

    width: int
    height: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"degenerate frame {self.width}x{self.height}")

    @property
    def area(self) -> int:
        return self.width * self.height


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned rectangle: top-left corner plus size, in integer pixels."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box needs positive size, got {self.w}x{self.h}")

    @property
    def area(self) -> int:
        return self.w * self.h


def intersect(a: BoundingBox, b: BoundingBox) -> BoundingBox | None:
    """Intersection of two boxes, or None when they do not overlap."""
    x0 = max(a.x, b.x)
    y0 = max(a.y, b.y)
    x1 = min(a.x + a.w, b.x + b.w)
    y1 = min(a.y + a.h, b.y + b.h)
    if x1 <= x0 or y1 <= y0:
        return None
    return BoundingBox(x0, y0, x1 - x0, y1 - y0)


def clamp_to_frame(box: BoundingBox, frame: ImageFrame) -> BoundingBox | None:
    """Clip a box to the frame; None when nothing remains."""
    return intersect(box, BoundingBox(0, 0, frame.width, frame.height))


@dataclass(frozen=True)
class ObjectMask:
    """Binary raster marking object pixels; ``bits`` is (height, width) bool."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        if bits.ndim != 2 or bits.shape[0] == 0 or bits.shape[1] == 0:
            raise ValueError(f"mask raster must be 2-D and non-empty, got {bits.shape}")
        object.__setattr__(self, "bits", bits)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def frame(self) -> ImageFrame:
        return ImageFrame(self.width, self.height)

    @classmethod
    def from_box(cls, box: BoundingBox, frame: ImageFrame) -> "ObjectMask":
        """Rectangular mask with exactly the box's pixels set (clamped to frame)."""
        bits = np.zeros((frame.height, frame.width), dtype=bool)
        clamped = clamp_to_frame(box, frame)
        if clamped is not None:
            bits[clamped.y : clamped.y + clamped.h, clamped.x : clamped.x + clamped.w] = True
        return cls(bits)

    def tight_box(self) -> BoundingBox | None:
        """Smallest box containing every set pixel; None for an empty mask."""
        rows = np.flatnonzero(self.bits.any(axis=1))
        cols = np.flatnonzero(self.bits.any(axis=0))
        if rows.size == 0:
            return None
        return BoundingBox(
            int(cols[0]), int(rows[0]), int(cols[-1] - cols[0] + 1), int(rows[-1] - rows[0] + 1)
        )

    def union(self, other: "ObjectMask") -> "ObjectMask":
        if self.bits.shape != other.bits.shape:
            raise ValueError("mask shapes differ")
        return ObjectMask(self.bits | other.bits)


@dataclass(frozen=True)
class AugmentTransform:
    """A crop window in source space, an output size, and an optional h-flip.

    Applied identically to an image and to its object masks so the object
    proportion of the transformed view can be measured on the fly.
    """

    crop: BoundingBox
    output_size: tuple[int, int]  # (width, height)
    hflip: bool = False

    def __post_init__(self):
        ow, oh = self.output_size
        if ow <= 0 or oh <= 0:
            raise ValueError(f"output size must be positive, got {self.output_size}")

    @classmethod
    def identity(cls, frame: ImageFrame) -> "AugmentTransform":
        return cls(BoundingBox(0, 0, frame.width, frame.height), (frame.width, frame.height), False)


def _nearest_indices(start: int, src_size: int, out_size: int) -> np.ndarray:
    # Center-aligned nearest-neighbor sampling; identity when sizes match and
    # exact pixel replication at integer upscales, so area ratios survive.
    return start + ((np.arange(out_size) + 0.5) * src_size / out_size).astype(np.intp)


def warp_raster(raster: np.ndarray, t: AugmentTransform) -> np.ndarray:
    """Crop, nearest-neighbor resize and optionally flip any 2-D raster.

    The crop is clamped to the raster frame; a clamped-empty crop is a caller
    error.  Source pixels outside the raster never contribute.
    """
    raster = np.asarray(raster)
    if raster.ndim != 2:
        raise ValueError(f"expected 2-D raster, got shape {raster.shape}")
    frame = ImageFrame(raster.shape[1], raster.shape[0])
    crop = clamp_to_frame(t.crop, frame)
    if crop is None:
        raise ValueError(f"crop {t.crop} lies outside the {frame.width}x{frame.height} frame")
    ow, oh = t.output_size
    rows = _nearest_indices(crop.y, crop.h, oh)
    cols = _nearest_indices(crop.x, crop.w, ow)
    out = raster[np.ix_(rows, cols)]
    if t.hflip:
        out = out[:, ::-1]
    return np.ascontiguousarray(out)


def apply_transform(mask: ObjectMask, t: AugmentTransform) -> ObjectMask:
    """Transform a mask exactly as its image is transformed.

    A crop that misses the object yields an all-zero mask of the output size;
    only a crop whose frame intersection is empty is rejected.
    """
    return ObjectMask(warp_raster(mask.bits, t))


def objectness_analytic(box: BoundingBox, frame: ImageFrame) -> float:
    """Fraction of the frame covered by the (clamped) box: w*h / (W*H)."""
    if frame.width <= 0 or frame.height <= 0:
        raise ValueError("degenerate frame")
    clamped = clamp_to_frame(box, frame)
    if clamped is None:
        return 0.0
    return clamped.area / frame.area


def objectness_pixels(mask: ObjectMask) -> float:
    """Fraction of set mask pixels: count / (width * height)."""
    total = mask.bits.size
    if total == 0:
        raise ValueError("zero-area mask")
    return int(mask.bits.sum()) / total


def transformed_objectness(
    box: BoundingBox, frame: ImageFrame, t: AugmentTransform
) -> float:
    """Object proportion of the view selected by ``t``, computed analytically.

    Equals |box ∩ crop| / crop area in source space.  Resizing to the output
    size preserves the ratio and flips never change it, so neither enters the
    computation.
    """
    crop = clamp_to_frame(t.crop, frame)
    if crop is None:
        raise ValueError(f"degenerate crop {t.crop} for frame {frame.width}x{frame.height}")
    visible = clamp_to_frame(box, frame)
    if visible is None:
        return 0.0
    overlap = intersect(visible, crop)
    if overlap is None:
        return 0.0
    return overlap.area / crop.area
