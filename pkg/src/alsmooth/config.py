"""Experiment configuration: JSON file with strict schema validation.

Every field has a default; a config file only lists what it overrides.
Unknown keys anywhere in the tree are rejected so typos cannot silently
fall back to defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .model import NetConfig, TrainConfig
from .synthdata import SamplerConfig, SceneSpec


class ConfigError(ValueError):
    """Invalid experiment configuration."""


DEFAULTS: dict = {
    "data": {
        "train_count": 5000,
        "val_count": 1000,
    },
    "scene": {
        "num_classes": 10,
        "image_width": 64,
        "image_height": 64,
        "object_min_frac": 0.3,
        "object_max_frac": 0.8,
        "context_correlation": 0.9,
        "texture_ids": None,
        "seed": 7,
    },
    "sampler": {
        "context_fraction": 0.15,
        "crop_min_area": 0.08,
        "crop_max_area": 1.0,
        "output_width": 64,
        "output_height": 64,
        "seed": 11,
    },
    "net": {
        "channels": [8, 16],
        "hidden": 64,
        "seed": 13,
    },
    "train": {
        "epochs": 30,
        "base_lr": 0.1,
        "lr_decay": 0.1,
        "decay_fractions": [0.25, 0.5, 0.75],
        "batch_size": 64,
        "momentum": 0.9,
        "seed": 17,
    },
    "policies": ["hard", "uniform:0.1", "adaptive:1.0"],
}

_SCALAR_TYPES = {
    ("data", "train_count"): int,
    ("data", "val_count"): int,
    ("scene", "num_classes"): int,
    ("scene", "image_width"): int,
    ("scene", "image_height"): int,
    ("scene", "object_min_frac"): float,
    ("scene", "object_max_frac"): float,
    ("scene", "context_correlation"): float,
    ("scene", "seed"): int,
    ("sampler", "context_fraction"): float,
    ("sampler", "crop_min_area"): float,
    ("sampler", "crop_max_area"): float,
    ("sampler", "output_width"): int,
    ("sampler", "output_height"): int,
    ("sampler", "seed"): int,
    ("net", "hidden"): int,
    ("net", "seed"): int,
    ("train", "epochs"): int,
    ("train", "base_lr"): float,
    ("train", "lr_decay"): float,
    ("train", "batch_size"): int,
    ("train", "momentum"): float,
    ("train", "seed"): int,
}


def _merge(section: str, overrides: dict) -> dict:
    base = dict(DEFAULTS[section])
    for key, value in overrides.items():
        if key not in base:
            raise ConfigError(f"unknown key {section}.{key}")
        base[key] = value
    return base


def _check_scalar_types(resolved: dict) -> None:
    for (section, key), want in _SCALAR_TYPES.items():
        value = resolved[section][key]
        if want is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
            resolved[section][key] = value
        if not isinstance(value, want) or isinstance(value, bool):
            raise ConfigError(f"{section}.{key} must be {want.__name__}, got {value!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved configuration for the whole pipeline."""

    train_count: int
    val_count: int
    scene: SceneSpec
    sampler: SamplerConfig
    net: NetConfig
    train: TrainConfig
    policies: tuple[str, ...]

    def to_dict(self) -> dict:
        """Full resolved config in file-schema form (echoed into manifests)."""
        return {
            "data": {"train_count": self.train_count, "val_count": self.val_count},
            "scene": {
                "num_classes": self.scene.num_classes,
                "image_width": self.scene.image_size[0],
                "image_height": self.scene.image_size[1],
                "object_min_frac": self.scene.object_size_range[0],
                "object_max_frac": self.scene.object_size_range[1],
                "context_correlation": self.scene.context_correlation,
                "texture_ids": None if self.scene.texture_ids is None else list(self.scene.texture_ids),
                "seed": self.scene.seed,
            },
            "sampler": {
                "context_fraction": self.sampler.context_fraction,
                "crop_min_area": self.sampler.crop_area_range[0],
                "crop_max_area": self.sampler.crop_area_range[1],
                "output_width": self.sampler.output_size[0],
                "output_height": self.sampler.output_size[1],
                "seed": self.sampler.seed,
            },
            "net": {
                "channels": list(self.net.channels),
                "hidden": self.net.hidden,
                "seed": self.net.seed,
            },
            "train": {
                "epochs": self.train.epochs,
                "base_lr": self.train.base_lr,
                "lr_decay": self.train.lr_decay,
                "decay_fractions": list(self.train.decay_fractions),
                "batch_size": self.train.batch_size,
                "momentum": self.train.momentum,
                "seed": self.train.seed,
            },
            "policies": list(self.policies),
        }


def resolve_config(raw: dict | None) -> ExperimentConfig:
    """Merge a raw config dict over the defaults and validate the result."""
    raw = dict(raw or {})
    unknown = set(raw) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
    resolved = {}
    for section in ("data", "scene", "sampler", "net", "train"):
        overrides = raw.get(section, {})
        if not isinstance(overrides, dict):
            raise ConfigError(f"section {section} must be an object")
        resolved[section] = _merge(section, overrides)
    policies = raw.get("policies", DEFAULTS["policies"])
    if not isinstance(policies, list) or not policies or not all(isinstance(p, str) for p in policies):
        raise ConfigError("policies must be a non-empty list of policy strings")
    _check_scalar_types(resolved)

    data = resolved["data"]
    if data["train_count"] < 1 or data["val_count"] < 1:
        raise ConfigError("train_count and val_count must be positive")
    sc = resolved["scene"]
    sa = resolved["sampler"]
    ne = resolved["net"]
    tr = resolved["train"]
    if sc["texture_ids"] is not None and (
        not isinstance(sc["texture_ids"], list) or not all(isinstance(t, int) for t in sc["texture_ids"])
    ):
        raise ConfigError("scene.texture_ids must be null or a list of ints")
    if not isinstance(ne["channels"], list) or not all(isinstance(c, int) for c in ne["channels"]):
        raise ConfigError("net.channels must be a list of ints")
    if not isinstance(tr["decay_fractions"], list):
        raise ConfigError("train.decay_fractions must be a list")

    try:
        scene = SceneSpec(
            num_classes=sc["num_classes"],
            image_size=(sc["image_width"], sc["image_height"]),
            object_size_range=(sc["object_min_frac"], sc["object_max_frac"]),
            context_correlation=sc["context_correlation"],
            texture_ids=None if sc["texture_ids"] is None else tuple(sc["texture_ids"]),
            seed=sc["seed"],
        )
        sampler = SamplerConfig(
            context_fraction=sa["context_fraction"],
            crop_area_range=(sa["crop_min_area"], sa["crop_max_area"]),
            output_size=(sa["output_width"], sa["output_height"]),
            seed=sa["seed"],
        )
        net = NetConfig(
            input_size=(sa["output_width"], sa["output_height"]),
            channels=tuple(ne["channels"]),
            hidden=ne["hidden"],
            num_classes=sc["num_classes"],
            seed=ne["seed"],
        )
        train = TrainConfig(
            epochs=tr["epochs"],
            base_lr=tr["base_lr"],
            lr_decay=tr["lr_decay"],
            decay_fractions=tuple(float(f) for f in tr["decay_fractions"]),
            batch_size=tr["batch_size"],
            momentum=tr["momentum"],
            seed=tr["seed"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return ExperimentConfig(
        train_count=data["train_count"],
        val_count=data["val_count"],
        scene=scene,
        sampler=sampler,
        net=net,
        train=train,
        policies=tuple(policies),
    )


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return resolve_config({})
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return resolve_config(raw)


def apply_master_seed(cfg: ExperimentConfig, seed: int) -> ExperimentConfig:
    """Derive every stream seed from one master seed (scene, sampler, net, train)."""
    raw = cfg.to_dict()
    raw["scene"]["seed"] = seed
    raw["sampler"]["seed"] = seed + 1
    raw["net"]["seed"] = seed + 2
    raw["train"]["seed"] = seed + 3
    return resolve_config(raw)
