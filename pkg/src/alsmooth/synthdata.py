"""Deterministic synthetic dataset with controllable contextual bias.

Each sample is a single rectangular object drawn as a high-contrast oriented
grating over a smooth background texture whose orientation encodes a texture
id.  With probability ``context_correlation`` the background texture id
equals the object's class, so a classifier is free to exploit background
alone.  Object geometry is known exactly, which gives exact ground-truth
object proportions for every augmented view.

Everything is a pure function of the seeds: sample i is generated from the
stream (seed, i), training step s draws from (seed, s), and the validation
split uses an offset index range, so regeneration is bit-identical and any
partitioning across workers yields the same data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fileio import dequantize_unit, quantize_unit, read_jsonl, read_pgm, write_jsonl, write_pgm
from .geometry import (
    AugmentTransform,
    BoundingBox,
    ImageFrame,
    ObjectMask,
    transformed_objectness,
    warp_raster,
)

# Validation samples draw from (seed, VAL_INDEX_OFFSET + i) so their stream
# never collides with training indices.
VAL_INDEX_OFFSET = 1 << 32

GLYPH_PERIOD = 5.0
GLYPH_LO, GLYPH_HI = 0.1, 0.9
TEXTURE_PERIOD = 20.0
TEXTURE_AMPLITUDE = 0.15
NOISE_SIGMA = 0.02


@dataclass(frozen=True)
class SceneSpec:
    """Generator parameters for one dataset."""

    num_classes: int = 10
    image_size: tuple[int, int] = (64, 64)  # (width, height)
    object_size_range: tuple[float, float] = (0.3, 0.8)  # fraction of frame side
    context_correlation: float = 0.9
    texture_ids: tuple[int, ...] | None = None  # per-class background texture
    seed: int = 7

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError(f"need at least 2 classes, got {self.num_classes}")
        w, h = self.image_size
        if w <= 0 or h <= 0:
            raise ValueError(f"image size must be positive, got {self.image_size}")
        lo, hi = self.object_size_range
        if not 0.0 < lo <= hi <= 1.0:
            raise ValueError(f"object size fractions must lie in (0,1], got {self.object_size_range}")
        if not 0.0 <= self.context_correlation <= 1.0:
            raise ValueError(f"context correlation must be in [0,1], got {self.context_correlation}")
        if self.texture_ids is not None and len(self.texture_ids) != self.num_classes:
            raise ValueError("texture_ids must list one texture per class")

    @property
    def frame(self) -> ImageFrame:
        return ImageFrame(*self.image_size)

    def texture_for_class(self, label_class: int) -> int:
        if self.texture_ids is None:
            return label_class
        return self.texture_ids[label_class]


@dataclass(frozen=True)
class AnnotatedSample:
    """One generated image with its exact object geometry."""

    image: np.ndarray  # (H, W) float32 in [0, 1], on the 1/255 grid
    mask: ObjectMask
    label_class: int
    box: BoundingBox
    frame: ImageFrame
    texture_id: int | None = None  # background texture; None for loaded samples


@dataclass(frozen=True)
class SamplerConfig:
    """Training-time augmentation and context-item sampling parameters."""

    context_fraction: float = 0.15
    crop_area_range: tuple[float, float] = (0.08, 1.0)
    aspect_range: tuple[float, float] = (3.0 / 4.0, 4.0 / 3.0)
    output_size: tuple[int, int] = (64, 64)
    seed: int = 11

    def __post_init__(self):
        if not 0.0 <= self.context_fraction < 1.0:
            raise ValueError(f"context fraction must be in [0,1), got {self.context_fraction}")
        lo, hi = self.crop_area_range
        if not 0.0 < lo <= hi <= 1.0:
            raise ValueError(f"crop area fractions must lie in (0,1], got {self.crop_area_range}")
        alo, ahi = self.aspect_range
        if not 0.0 < alo <= ahi:
            raise ValueError(f"bad aspect range {self.aspect_range}")
        ow, oh = self.output_size
        if ow <= 0 or oh <= 0:
            raise ValueError(f"output size must be positive, got {self.output_size}")


def _orientation_count(num_classes: int) -> int:
    return (num_classes + 1) // 2


def _glyph_values(label_class: int, num_classes: int, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Object pattern: a high-contrast binary grating keyed to the class.

    Classes are coded by stripe orientation crossed with stripe duty cycle.
    Both cues survive any crop/resize: orientation shifts less than 9 degrees
    under aspect jitter in [3/4, 4/3] (orientations are spaced 36 degrees at
    K=10), and the bright-pixel fraction per period is scale free.
    """
    n_orient = _orientation_count(num_classes)
    theta = np.pi * (label_class % n_orient) / n_orient
    phase = np.cos(theta) * xs[None, :] + np.sin(theta) * ys[:, None]
    duty = 0.5 if label_class < n_orient else 0.25
    stripe = (phase / GLYPH_PERIOD) % 1.0 < duty
    return np.where(stripe, GLYPH_HI, GLYPH_LO)


def _texture_values(
    texture_id: int, num_classes: int, ys: np.ndarray, xs: np.ndarray, phase_shift: float
) -> np.ndarray:
    """Background pattern: a low-contrast oriented wave keyed to the texture id.

    Texture ids are coded by orientation crossed with waveform (smooth sine
    versus hard-edged bands), so backgrounds stay identifiable under the same
    crop/resize transforms as the objects.
    """
    n_orient = _orientation_count(num_classes)
    theta = np.pi * ((texture_id % n_orient) + 0.5) / n_orient
    phase = np.cos(theta) * xs[None, :] + np.sin(theta) * ys[:, None]
    wave = np.sin(2.0 * np.pi * phase / TEXTURE_PERIOD + phase_shift)
    if texture_id >= n_orient:
        wave = np.sign(wave)
    return 0.5 + TEXTURE_AMPLITUDE * wave


class GenerationError(RuntimeError):
    """Raised when a sample cannot be placed after bounded retries."""


def generate_sample(spec: SceneSpec, index: int) -> AnnotatedSample:
    """Deterministically generate sample ``index`` of the dataset."""
    rng = np.random.default_rng([spec.seed, index])
    w_img, h_img = spec.image_size
    label_class = int(rng.integers(spec.num_classes))
    if rng.random() < spec.context_correlation:
        texture_id = spec.texture_for_class(label_class)
    else:
        texture_id = int(rng.integers(spec.num_classes))

    lo, hi = spec.object_size_range
    for _ in range(16):
        obj_w = int(round(rng.uniform(lo, hi) * w_img))
        obj_h = int(round(rng.uniform(lo, hi) * h_img))
        obj_w, obj_h = max(obj_w, 1), max(obj_h, 1)
        if obj_w <= w_img and obj_h <= h_img:
            break
    else:
        raise GenerationError(f"object does not fit a {w_img}x{h_img} frame")
    x0 = int(rng.integers(0, w_img - obj_w + 1))
    y0 = int(rng.integers(0, h_img - obj_h + 1))
    box = BoundingBox(x0, y0, obj_w, obj_h)

    ys = np.arange(h_img, dtype=np.float64)
    xs = np.arange(w_img, dtype=np.float64)
    image = _texture_values(texture_id, spec.num_classes, ys, xs, rng.uniform(0.0, 2.0 * np.pi))
    glyph = _glyph_values(label_class, spec.num_classes, ys[y0 : y0 + obj_h], xs[x0 : x0 + obj_w])
    image[y0 : y0 + obj_h, x0 : x0 + obj_w] = glyph
    image = image + rng.normal(0.0, NOISE_SIGMA, size=image.shape)
    # Snap to the on-disk 256-level grid so a write/read round trip is exact.
    image = dequantize_unit(quantize_unit(image))

    mask = ObjectMask.from_box(box, spec.frame)
    return AnnotatedSample(
        image=image,
        mask=mask,
        label_class=label_class,
        box=box,
        frame=spec.frame,
        texture_id=texture_id,
    )


@dataclass
class Dataset:
    """A fully materialized split plus the statistics shared across splits."""

    spec: SceneSpec
    samples: list[AnnotatedSample]
    mean_pixel: float

    def __len__(self) -> int:
        return len(self.samples)


def generate_dataset(spec: SceneSpec, count: int, index_offset: int = 0) -> Dataset:
    if count < 1:
        raise ValueError(f"need at least one sample, got {count}")
    samples = [generate_sample(spec, index_offset + i) for i in range(count)]
    mean_pixel = float(np.mean([s.image for s in samples], dtype=np.float64))
    return Dataset(spec=spec, samples=samples, mean_pixel=mean_pixel)


def remove_objects(sample: AnnotatedSample, mean_pixel: float) -> np.ndarray:
    """Image with every object pixel replaced by the dataset mean value."""
    image = sample.image.copy()
    image[sample.mask.bits] = np.float32(mean_pixel)
    return image


@dataclass(frozen=True)
class TrainingItem:
    """One augmented training view plus the inputs the labeling policy needs."""

    image: np.ndarray  # (out_h, out_w) float32
    label_class: int
    objectness: float
    is_context: bool
    sample_index: int
    transform: AugmentTransform


def _draw_transform(rng: np.random.Generator, frame: ImageFrame, cfg: SamplerConfig) -> AugmentTransform:
    area_frac = rng.uniform(*cfg.crop_area_range)
    aspect = rng.uniform(*cfg.aspect_range)
    target_area = area_frac * frame.width * frame.height
    crop_w = int(round(np.sqrt(target_area * aspect)))
    crop_h = int(round(np.sqrt(target_area / aspect)))
    crop_w = min(max(crop_w, 1), frame.width)
    crop_h = min(max(crop_h, 1), frame.height)
    x0 = int(rng.integers(0, frame.width - crop_w + 1))
    y0 = int(rng.integers(0, frame.height - crop_h + 1))
    hflip = bool(rng.random() < 0.5)
    return AugmentTransform(BoundingBox(x0, y0, crop_w, crop_h), cfg.output_size, hflip)


def _draw_item_params(
    n_samples: int, frame: ImageFrame, cfg: SamplerConfig, step: int
) -> tuple[bool, int, AugmentTransform]:
    """The (context?, sample index, transform) draw for one global step.

    Shared by the per-item path and the vectorized batch assembler so both
    consume the (cfg.seed, step) stream identically.
    """
    rng = np.random.default_rng([cfg.seed, step])
    is_context = bool(rng.random() < cfg.context_fraction)
    sample_index = int(rng.integers(n_samples))
    t = _draw_transform(rng, frame, cfg)
    return is_context, sample_index, t


def draw_training_item(dataset: Dataset, cfg: SamplerConfig, step: int) -> TrainingItem:
    """Draw the training view for global step ``step``.

    The draw sequence (context coin, sample index, crop, flip) depends only
    on (cfg.seed, step), never on the labeling policy, so runs that differ
    only in policy consume bit-identical image streams.  A context item is
    the same drawn sample with its object removed before cropping; its label
    rule is the policy's context rule and its objectness is 0 by construction.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    frame = dataset.samples[0].frame
    is_context, sample_index, t = _draw_item_params(len(dataset), frame, cfg, step)
    sample = dataset.samples[sample_index]

    if is_context:
        source = remove_objects(sample, dataset.mean_pixel)
        objectness = 0.0
    else:
        source = sample.image
        objectness = transformed_objectness(sample.box, sample.frame, t)
    image = warp_raster(source, t).astype(np.float32)
    return TrainingItem(
        image=image,
        label_class=sample.label_class,
        objectness=objectness,
        is_context=is_context,
        sample_index=sample_index,
        transform=t,
    )


class TrainingBatcher:
    """Assembles whole training batches with one gather per batch.

    Produces bit-identical views to per-step :func:`draw_training_item`
    calls; the speedup comes from stacking the split (and its object-removed
    twin) into dense arrays once and resolving every crop with a single
    fancy-index lookup.
    """

    def __init__(self, dataset: Dataset, cfg: SamplerConfig):
        if len(dataset) == 0:
            raise ValueError("empty dataset")
        self.cfg = cfg
        self.frame = dataset.samples[0].frame
        images = np.stack([s.image for s in dataset.samples])
        removed = images.copy()
        for i, sample in enumerate(dataset.samples):
            removed[i][sample.mask.bits] = np.float32(dataset.mean_pixel)
        self.stacked = np.stack([images, removed])  # [is_context, index, y, x]
        self.classes = [s.label_class for s in dataset.samples]
        self.boxes = [s.box for s in dataset.samples]
        self.n = len(dataset)

    def batch(self, start_step: int, size: int):
        ow, oh = self.cfg.output_size
        rows = np.empty((size, oh), dtype=np.intp)
        cols = np.empty((size, ow), dtype=np.intp)
        ctx = np.empty(size, dtype=np.intp)
        idx = np.empty(size, dtype=np.intp)
        classes = np.empty(size, dtype=np.int64)
        objectness = np.empty(size, dtype=np.float64)
        is_context = np.empty(size, dtype=bool)
        for i in range(size):
            item_ctx, item_idx, t = _draw_item_params(self.n, self.frame, self.cfg, start_step + i)
            crop = t.crop
            rows[i] = crop.y + ((np.arange(oh) + 0.5) * crop.h / oh).astype(np.intp)
            c = crop.x + ((np.arange(ow) + 0.5) * crop.w / ow).astype(np.intp)
            cols[i] = c[::-1] if t.hflip else c
            ctx[i] = 1 if item_ctx else 0
            idx[i] = item_idx
            classes[i] = self.classes[item_idx]
            is_context[i] = item_ctx
            if item_ctx:
                objectness[i] = 0.0
            else:
                objectness[i] = transformed_objectness(self.boxes[item_idx], self.frame, t)
        images = self.stacked[ctx[:, None, None], idx[:, None, None], rows[:, :, None], cols[:, None, :]]
        return images, classes, objectness, is_context


@dataclass
class EvalSet:
    """Fixed evaluation views: images plus per-sample class and objectness."""

    images: np.ndarray  # (N, H, W) float32
    classes: np.ndarray  # (N,) int64
    objectness: np.ndarray  # (N,) float64
    objects_removed: bool


def _center_transform(frame: ImageFrame, output_size: tuple[int, int]) -> AugmentTransform:
    # Largest centered window with the output aspect ratio, then resize.
    # Identity when the frame already matches the output size.
    ow, oh = output_size
    scale = min(frame.width / ow, frame.height / oh)
    crop_w = max(1, int(round(ow * scale)))
    crop_h = max(1, int(round(oh * scale)))
    x0 = (frame.width - crop_w) // 2
    y0 = (frame.height - crop_h) // 2
    return AugmentTransform(BoundingBox(x0, y0, crop_w, crop_h), output_size, False)


def build_eval_sets(
    spec: SceneSpec,
    n_val: int,
    mean_pixel: float,
    output_size: tuple[int, int] = (64, 64),
) -> tuple[EvalSet, EvalSet]:
    """Paired validation sets: center-cropped samples, with and without objects.

    Validation samples come from the (seed, VAL_INDEX_OFFSET + i) stream, so
    they are disjoint from every training sample.  The context set is the
    same images with the objects removed; paired entries differ only inside
    the object's box.
    """
    if n_val < 1:
        raise ValueError(f"need at least one validation sample, got {n_val}")
    images, ctx_images, classes, objness = [], [], [], []
    for i in range(n_val):
        sample = generate_sample(spec, VAL_INDEX_OFFSET + i)
        t = _center_transform(sample.frame, output_size)
        images.append(warp_raster(sample.image, t).astype(np.float32))
        ctx_images.append(warp_raster(remove_objects(sample, mean_pixel), t).astype(np.float32))
        classes.append(sample.label_class)
        objness.append(transformed_objectness(sample.box, sample.frame, t))
    classes_arr = np.asarray(classes, dtype=np.int64)
    object_set = EvalSet(
        images=np.stack(images),
        classes=classes_arr,
        objectness=np.asarray(objness, dtype=np.float64),
        objects_removed=False,
    )
    context_set = EvalSet(
        images=np.stack(ctx_images),
        classes=classes_arr.copy(),
        objectness=np.zeros(n_val, dtype=np.float64),
        objects_removed=True,
    )
    return object_set, context_set


# --------------------------------------------------------------------------
# On-disk layout
#
#   <root>/manifest.json
#   <root>/<split>/images/00000.pgm
#   <root>/<split>/masks/00000.pgm      (0 = background, 255 = object)
#   <root>/<split>/annotations.jsonl    one {"image", "class", "box", "frame"}
#                                       object per line
# --------------------------------------------------------------------------

MANIFEST_NAME = "manifest.json"
FORMAT_VERSION = 1


def _sample_id(index: int) -> str:
    return f"{index:05d}"


def write_split(
    root: Path,
    split: str,
    samples: list[AnnotatedSample],
    images_override: list[np.ndarray] | None = None,
) -> None:
    split_dir = Path(root) / split
    (split_dir / "images").mkdir(parents=True, exist_ok=True)
    (split_dir / "masks").mkdir(parents=True, exist_ok=True)
    records = []
    for i, sample in enumerate(samples):
        sid = _sample_id(i)
        image = sample.image if images_override is None else images_override[i]
        write_pgm(split_dir / "images" / f"{sid}.pgm", quantize_unit(image))
        write_pgm(split_dir / "masks" / f"{sid}.pgm", sample.mask.bits.astype(np.uint8) * 255)
        records.append(
            {
                "image": f"images/{sid}.pgm",
                "class": sample.label_class,
                "box": [sample.box.x, sample.box.y, sample.box.w, sample.box.h],
                "frame": [sample.frame.width, sample.frame.height],
            }
        )
    write_jsonl(split_dir / "annotations.jsonl", records)


def load_split(root: Path, split: str, spec: SceneSpec, mean_pixel: float) -> Dataset:
    split_dir = Path(root) / split
    records = read_jsonl(split_dir / "annotations.jsonl")
    samples = []
    for rec in records:
        image = dequantize_unit(read_pgm(split_dir / rec["image"]))
        mask_path = split_dir / rec["image"].replace("images/", "masks/", 1)
        mask = ObjectMask(read_pgm(mask_path) >= 128)
        box = BoundingBox(*rec["box"])
        frame = ImageFrame(*rec["frame"])
        samples.append(
            AnnotatedSample(image=image, mask=mask, label_class=int(rec["class"]), box=box, frame=frame)
        )
    return Dataset(spec=spec, samples=samples, mean_pixel=mean_pixel)


def split_eval_set(dataset: Dataset, objects_removed: bool, output_size: tuple[int, int]) -> EvalSet:
    """View a loaded split as a fixed evaluation set (center-cropped)."""
    images, objness = [], []
    for sample in dataset.samples:
        t = _center_transform(sample.frame, output_size)
        images.append(warp_raster(sample.image, t).astype(np.float32))
        if objects_removed:
            objness.append(0.0)
        else:
            objness.append(transformed_objectness(sample.box, sample.frame, t))
    return EvalSet(
        images=np.stack(images),
        classes=np.asarray([s.label_class for s in dataset.samples], dtype=np.int64),
        objectness=np.asarray(objness, dtype=np.float64),
        objects_removed=objects_removed,
    )
