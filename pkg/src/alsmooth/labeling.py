"""Training-target constructors.

All functions return a length-K probability vector (float64 ndarray) that
sums to exactly 1: after the entries are built, any accumulated rounding
residual is absorbed by the trailing entry (the trailing off-class entry for
targets with a designated class, so the true-class mass is never perturbed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def _close_simplex(probs: np.ndarray, keep: int | None = None) -> np.ndarray:
    np.clip(probs, 0.0, 1.0, out=probs)
    residual = 1.0 - math.fsum(probs.tolist())
    if residual != 0.0:
        idx = probs.shape[0] - 1
        if keep is not None and idx == keep:
            idx -= 1
        adjusted = probs[idx] + residual
        # Residual is a few ulps; skip only if the entry is so tiny that the
        # adjustment would leave [0, 1].
        if 0.0 <= adjusted <= 1.0:
            probs[idx] = adjusted
    return probs


def _check_class(label_class: int, num_classes: int) -> None:
    if num_classes < 2:
        raise ValueError(f"need at least 2 classes, got {num_classes}")
    if not 0 <= label_class < num_classes:
        raise ValueError(f"class {label_class} out of range for {num_classes} classes")


def hard_label(label_class: int, num_classes: int) -> np.ndarray:
    """One-hot target: probability 1 on the designated class."""
    _check_class(label_class, num_classes)
    probs = np.zeros(num_classes, dtype=np.float64)
    probs[label_class] = 1.0
    return probs


def uniform_smooth_label(label_class: int, num_classes: int, smoothing: float) -> np.ndarray:
    """Classic label smoothing: 1-a on the true class, a/(K-1) elsewhere."""
    _check_class(label_class, num_classes)
    if not 0.0 <= smoothing <= 1.0:
        raise ValueError(f"smoothing factor must be in [0,1], got {smoothing}")
    probs = np.full(num_classes, smoothing / (num_classes - 1), dtype=np.float64)
    probs[label_class] = 1.0 - smoothing
    return _close_simplex(probs, keep=label_class)


def context_label(num_classes: int) -> np.ndarray:
    """Uniform target used for samples that contain no pertinent object."""
    if num_classes < 2:
        raise ValueError(f"need at least 2 classes, got {num_classes}")
    probs = np.full(num_classes, 1.0 / num_classes, dtype=np.float64)
    return _close_simplex(probs)


def smoothing_from_objectness(objectness: float) -> float:
    """Smoothing factor for a view whose object proportion is ``objectness``."""
    if not 0.0 <= objectness <= 1.0:
        raise ValueError(f"objectness must be in [0,1], got {objectness}")
    return 1.0 - objectness


def adaptive_label(
    label_class: int,
    num_classes: int,
    objectness: float,
    blend: float,
    uniform_when_absent: bool = True,
) -> np.ndarray:
    """Objectness-adaptive target, optionally blended with the one-hot target.

    The smoothing factor is 1 - objectness, so the true-class mass of the
    smoothed component equals the object proportion of the view.  ``blend``
    weights the smoothed component against the one-hot target: 0 recovers
    hard labels, 1 is fully adaptive, and any value guarantees a true-class
    mass of at least ``1 - blend``.

    With ``uniform_when_absent`` (the default), a view with objectness
    exactly 0 yields the uniform component 1/K for every class, so an
    object-free view is maximally uncertain rather than anti-correlated with
    the true class.  Pass False to keep the raw formula, which at objectness
    0 puts mass 1/(K-1) on every class except the true one.
    """
    _check_class(label_class, num_classes)
    if not 0.0 <= blend <= 1.0:
        raise ValueError(f"blend weight must be in [0,1], got {blend}")
    smoothing = smoothing_from_objectness(objectness)
    if objectness == 0.0 and uniform_when_absent:
        smoothed = context_label(num_classes)
    else:
        smoothed = uniform_smooth_label(label_class, num_classes, smoothing)
    probs = blend * smoothed
    probs[label_class] += 1.0 - blend
    return _close_simplex(probs, keep=label_class)


@dataclass(frozen=True)
class LabelingPolicy:
    """How a training sample's target vector is produced.

    mode is one of "hard", "uniform" (fixed ``smoothing``) or "adaptive"
    (per-sample smoothing from objectness, weighted by ``blend``).
    """

    mode: str
    num_classes: int
    smoothing: float = 0.0
    blend: float = 1.0
    uniform_when_absent: bool = True

    def __post_init__(self):
        if self.mode not in ("hard", "uniform", "adaptive"):
            raise ValueError(f"unknown labeling mode {self.mode!r}")
        if self.num_classes < 2:
            raise ValueError(f"need at least 2 classes, got {self.num_classes}")
        if not 0.0 <= self.smoothing <= 1.0:
            raise ValueError(f"smoothing factor must be in [0,1], got {self.smoothing}")
        if not 0.0 <= self.blend <= 1.0:
            raise ValueError(f"blend weight must be in [0,1], got {self.blend}")

    @classmethod
    def parse(cls, text: str, num_classes: int) -> "LabelingPolicy":
        """Parse "hard", "uniform:<smoothing>" or "adaptive:<blend>"."""
        name, _, arg = text.partition(":")
        if name == "hard":
            if arg:
                raise ValueError("hard policy takes no parameter")
            return cls("hard", num_classes)
        if name == "uniform":
            return cls("uniform", num_classes, smoothing=float(arg) if arg else 0.1)
        if name == "adaptive":
            return cls("adaptive", num_classes, blend=float(arg) if arg else 1.0)
        raise ValueError(f"unknown policy {text!r}")

    @property
    def name(self) -> str:
        if self.mode == "hard":
            return "hard"
        if self.mode == "uniform":
            return f"uniform:{self.smoothing:g}"
        return f"adaptive:{self.blend:g}"

    def target(self, label_class: int, objectness: float | None = None) -> np.ndarray:
        """Target vector for a sample with the given class and object proportion."""
        if self.mode == "hard":
            return hard_label(label_class, self.num_classes)
        if self.mode == "uniform":
            return uniform_smooth_label(label_class, self.num_classes, self.smoothing)
        if objectness is None:
            raise ValueError("adaptive policy needs the sample's objectness")
        return adaptive_label(
            label_class, self.num_classes, objectness, self.blend, self.uniform_when_absent
        )

    def context_target(self, label_class: int) -> np.ndarray:
        """Target for an object-free (context-only) training item.

        The adaptive policy treats such items as carrying no class evidence
        and emits the uniform vector.  The baseline policies have no notion
        of object proportion and label the item like any other sample of its
        source class, which is exactly how they acquire context dependence.
        """
        if self.mode == "adaptive":
            return context_label(self.num_classes)
        return self.target(label_class)
