"""Small convolutional classifier with hand-written backpropagation.

Architecture: per conv stage a 3x3 same-padding convolution, ReLU and a
max-pool (4x4 then 2x2 by default), then one hidden dense layer with ReLU
and a final dense layer that is zero-initialized so an untrained model
predicts the uniform distribution exactly.  Inputs are single-channel
rasters in [0, 1]; the forward pass centers them at 0.5.

Convolutions are evaluated as one GEMM over patch rows; the first layer
never computes an input gradient (there is nothing below it).  Training
tensors are float32; the same code runs in float64 for the
finite-difference gradient oracles.  Everything is deterministic given the
config seeds.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .labeling import LabelingPolicy
from .losses import cross_entropy, softmax
from .synthdata import Dataset, EvalSet, SamplerConfig, TrainingBatcher

CHECKPOINT_MAGIC = b"ALSM"
CHECKPOINT_VERSION = 1


class NumericError(RuntimeError):
    """Raised when training produces a non-finite loss."""


@dataclass(frozen=True)
class NetConfig:
    input_size: tuple[int, int] = (64, 64)  # (width, height)
    channels: tuple[int, ...] = (8, 16)
    pools: tuple[int, ...] = (4, 2)  # pool window per conv stage
    hidden: int = 64
    num_classes: int = 10
    seed: int = 13
    dtype: str = "float32"

    def __post_init__(self):
        if any(c <= 0 for c in self.channels) or not self.channels:
            raise ValueError(f"conv channels must be positive, got {self.channels}")
        if len(self.pools) != len(self.channels) or any(p < 1 for p in self.pools):
            raise ValueError(f"need one positive pool size per conv stage, got {self.pools}")
        w, h = self.input_size
        factor = 1
        for p in self.pools:
            factor *= p
        if w <= 0 or h <= 0 or w % factor or h % factor:
            raise ValueError(
                f"input size {self.input_size} must be positive and divisible by {factor} "
                f"(product of pool sizes)"
            )
        if self.hidden <= 0 or self.num_classes < 2:
            raise ValueError("hidden width must be positive and num_classes >= 2")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"unsupported dtype {self.dtype}")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    def to_dict(self) -> dict:
        return {
            "input_size": list(self.input_size),
            "channels": list(self.channels),
            "pools": list(self.pools),
            "hidden": self.hidden,
            "num_classes": self.num_classes,
            "seed": self.seed,
            "dtype": self.dtype,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        return cls(
            input_size=tuple(d["input_size"]),
            channels=tuple(d["channels"]),
            pools=tuple(d["pools"]),
            hidden=int(d["hidden"]),
            num_classes=int(d["num_classes"]),
            seed=int(d["seed"]),
            dtype=d["dtype"],
        )


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    base_lr: float = 0.1
    lr_decay: float = 0.1
    decay_fractions: tuple[float, ...] = (0.25, 0.5, 0.75)
    batch_size: int = 64
    momentum: float = 0.9
    seed: int = 17

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch size must be positive")
        if self.base_lr <= 0 or not 0 < self.lr_decay <= 1:
            raise ValueError("base_lr must be positive and lr_decay in (0,1]")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must be in [0,1), got {self.momentum}")
        if list(self.decay_fractions) != sorted(self.decay_fractions):
            raise ValueError("decay fractions must be sorted")

    def lr_at(self, epoch: int) -> float:
        drops = sum(1 for f in self.decay_fractions if epoch >= f * self.epochs)
        return self.base_lr * self.lr_decay**drops


def _im2col3(x: np.ndarray) -> np.ndarray:
    """3x3 same-padding patches of (N,H,W,C) as rows of an (N*H*W, 9C) matrix.

    Columns are ordered tap-major (kh, kw), channel-minor, matching the row
    layout of the (9C, C_out) weight matrices.
    """
    n, h, w, c = x.shape
    xp = np.zeros((n, h + 2, w + 2, c), dtype=x.dtype)
    xp[:, 1 : h + 1, 1 : w + 1, :] = x
    cols = np.empty((n * h * w, 9 * c), dtype=x.dtype)
    tapped = cols.reshape(n, h, w, 9, c)
    for kh in range(3):
        for kw in range(3):
            tapped[:, :, :, kh * 3 + kw, :] = xp[:, kh : kh + h, kw : kw + w, :]
    return cols


def _conv_forward(x, w_mat, bias):
    n, h, wid, _ = x.shape
    cols = _im2col3(x)
    out = cols @ w_mat
    out += bias
    return out.reshape(n, h, wid, w_mat.shape[1]), cols


def _conv_backward(dy, cols, w_mat, c_in, need_dx: bool):
    n, h, w, c_out = dy.shape
    dy_col = dy.reshape(n * h * w, c_out)
    dw = cols.T @ dy_col
    db = dy_col.sum(axis=0)
    if not need_dx:
        return None, dw, db
    # Column-space gradient scattered back with nine shifted adds (col2im).
    dcols = (dy_col @ w_mat.T).reshape(n, h, w, 3, 3, c_in)
    dxp = np.zeros((n, h + 2, w + 2, c_in), dtype=dy.dtype)
    for kh in range(3):
        for kw in range(3):
            dxp[:, kh : kh + h, kw : kw + w, :] += dcols[:, :, :, kh, kw, :]
    return dxp[:, 1 : h + 1, 1 : w + 1, :], dw, db


def _pool_forward(x, p: int):
    """p-by-p max pool, stride p; returns the pooled map."""
    if p == 1:
        return x
    return np.maximum.reduce([x[:, i::p, j::p, :] for i in range(p) for j in range(p)])


def _pool_backward(dy, x, y, p: int):
    """Route gradient to the first maximum in window scan order (deterministic ties)."""
    if p == 1:
        return dy
    # Every input position belongs to exactly one window offset, so dx is
    # fully overwritten below and needs no zero fill.
    dx = np.empty_like(x)
    unclaimed = np.ones(y.shape, dtype=bool)
    buf = np.empty(y.shape, dtype=dy.dtype)
    for i in range(p):
        for j in range(p):
            sel = x[:, i::p, j::p, :] == y
            sel &= unclaimed
            np.multiply(dy, sel, out=buf)
            dx[:, i::p, j::p, :] = buf
            unclaimed &= ~sel
    return dx


class ConvNet:
    """Parameters, momentum buffers and forward/backward for the classifier."""

    def __init__(self, cfg: NetConfig):
        self.cfg = cfg
        self.dtype = cfg.np_dtype
        w, h = cfg.input_size
        self.params: dict[str, np.ndarray] = {}
        c_in = 1
        for i, (c_out, p) in enumerate(zip(cfg.channels, cfg.pools)):
            rng = np.random.default_rng([cfg.seed, i])
            std = np.sqrt(2.0 / (9 * c_in))
            self.params[f"conv{i}_w"] = (rng.standard_normal((9 * c_in, c_out)) * std).astype(self.dtype)
            self.params[f"conv{i}_b"] = np.zeros(c_out, dtype=self.dtype)
            c_in = c_out
            w, h = w // p, h // p
        flat = w * h * c_in
        rng = np.random.default_rng([cfg.seed, len(cfg.channels)])
        std = np.sqrt(2.0 / flat)
        self.params["fc_w"] = (rng.standard_normal((flat, cfg.hidden)) * std).astype(self.dtype)
        self.params["fc_b"] = np.zeros(cfg.hidden, dtype=self.dtype)
        # Zero-initialized head: an untrained model emits all-equal logits.
        self.params["out_w"] = np.zeros((cfg.hidden, cfg.num_classes), dtype=self.dtype)
        self.params["out_b"] = np.zeros(cfg.num_classes, dtype=self.dtype)
        self.momentum: dict[str, np.ndarray] = {
            name: np.zeros_like(p) for name, p in self.params.items()
        }

    def param_names(self) -> list[str]:
        return list(self.params)

    def _check_input(self, x) -> np.ndarray:
        x = np.asarray(x)
        w, h = self.cfg.input_size
        if x.ndim == 2:
            x = x[None]
        if x.ndim != 3 or x.shape[1] != h or x.shape[2] != w:
            raise ValueError(f"expected (N, {h}, {w}) rasters, got shape {x.shape}")
        return x.astype(self.dtype, copy=False)

    def forward(self, x, want_cache: bool = False):
        """Logits for a batch of rasters; deterministic, no stochastic layers."""
        x = self._check_input(x)
        a = (x - self.dtype(0.5))[..., None]
        cache = {"stages": []} if want_cache else None
        for i, p in enumerate(self.cfg.pools):
            z, cols = _conv_forward(a, self.params[f"conv{i}_w"], self.params[f"conv{i}_b"])
            # Max-pool commutes with the (monotone) ReLU; pooling first does
            # 1/p^2 of the activation work with identical outputs/gradients.
            pooled = _pool_forward(z, p)
            a = np.maximum(pooled, 0)
            if want_cache:
                cache["stages"].append({"cols": cols, "conv_out": z, "pool_out": pooled})
        n = a.shape[0]
        flat = a.reshape(n, -1)
        hid_z = flat @ self.params["fc_w"] + self.params["fc_b"]
        hid = np.maximum(hid_z, 0)
        logits = hid @ self.params["out_w"] + self.params["out_b"]
        if want_cache:
            cache["flat"] = flat
            cache["hid_z"] = hid_z
            cache["hid"] = hid
            cache["conv_out_shape"] = a.shape
            return logits, cache
        return logits

    def backward(self, cache, dlogits) -> dict[str, np.ndarray]:
        """Parameter gradients given d(loss)/d(logits)."""
        grads: dict[str, np.ndarray] = {}
        grads["out_w"] = cache["hid"].T @ dlogits
        grads["out_b"] = dlogits.sum(axis=0)
        dhid = dlogits @ self.params["out_w"].T
        dhid_z = dhid * (cache["hid_z"] > 0)
        grads["fc_w"] = cache["flat"].T @ dhid_z
        grads["fc_b"] = dhid_z.sum(axis=0)
        da = (dhid_z @ self.params["fc_w"].T).reshape(cache["conv_out_shape"])
        c_in_list = [1] + list(self.cfg.channels[:-1])
        for i in reversed(range(len(self.cfg.channels))):
            stage = cache["stages"][i]
            dpool = da * (stage["pool_out"] > 0)
            dz = _pool_backward(dpool, stage["conv_out"], stage["pool_out"], self.cfg.pools[i])
            da, dw, db = _conv_backward(
                dz, stage["cols"], self.params[f"conv{i}_w"], c_in_list[i], need_dx=i > 0
            )
            grads[f"conv{i}_w"] = dw
            grads[f"conv{i}_b"] = db
        return grads

    def train_step(self, batch, targets, lr: float, momentum: float, step: int | None = None) -> float:
        """One SGD-with-momentum update on mean cross-entropy; returns pre-update loss."""
        targets = np.asarray(targets, dtype=self.dtype)
        logits, cache = self.forward(batch, want_cache=True)
        if not np.isfinite(logits).all():
            raise NumericError(f"non-finite logits (step={step}, lr={lr})")
        loss = float(np.mean(cross_entropy(logits, targets)))
        if not np.isfinite(loss):
            raise NumericError(f"non-finite loss {loss} (step={step}, lr={lr})")
        dlogits = (softmax(logits) - targets) / self.dtype(logits.shape[0])
        grads = self.backward(cache, dlogits)
        for name, g in grads.items():
            v = self.momentum[name]
            v *= self.dtype(momentum)
            v += g
            self.params[name] -= self.dtype(lr) * v
        return loss

    def predict_probs(self, rasters) -> np.ndarray:
        """Float64 probability rows for a batch of rasters."""
        logits = self.forward(rasters)
        return softmax(logits.astype(np.float64))

    # -- checkpoint format: magic, u32 version, u32 JSON length, config JSON,
    #    then raw little-endian tensors in declaration order (parameters
    #    first, momentum buffers after, both in param_names() order).

    def save(self, path) -> None:
        """Write a checkpoint atomically (temp file + rename)."""
        path = Path(path)
        blob = json.dumps(self.cfg.to_dict(), sort_keys=True).encode("utf-8")
        tmp = path.with_name(path.name + f".tmp-{os.getpid()}")
        try:
            with open(tmp, "wb") as fh:
                fh.write(CHECKPOINT_MAGIC)
                fh.write(np.array(CHECKPOINT_VERSION, dtype="<u4").tobytes())
                fh.write(np.array(len(blob), dtype="<u4").tobytes())
                fh.write(blob)
                _write_tensors(fh, self)
            os.replace(tmp, path)
        finally:
            if tmp.exists():
                tmp.unlink()

    @classmethod
    def load(cls, path) -> "ConvNet":
        data = Path(path).read_bytes()
        if data[:4] != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint (bad magic)")
        version = int(np.frombuffer(data, dtype="<u4", count=1, offset=4)[0])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        blob_len = int(np.frombuffer(data, dtype="<u4", count=1, offset=8)[0])
        cfg = NetConfig.from_dict(json.loads(data[12 : 12 + blob_len].decode("utf-8")))
        net = cls(cfg)
        offset = 12 + blob_len
        le_dtype = "<f4" if cfg.dtype == "float32" else "<f8"
        for store in (net.params, net.momentum):
            for name in net.param_names():
                arr = store[name]
                count = arr.size
                flat = np.frombuffer(data, dtype=le_dtype, count=count, offset=offset)
                store[name] = flat.astype(net.dtype).reshape(arr.shape).copy()
                offset += count * np.dtype(le_dtype).itemsize
        if offset != len(data):
            raise ValueError(f"{path}: trailing bytes in checkpoint")
        return net


def _write_tensors(fh, net: ConvNet) -> None:
    le_dtype = "<f4" if net.cfg.dtype == "float32" else "<f8"
    for store in (net.params, net.momentum):
        for name in net.param_names():
            fh.write(np.ascontiguousarray(store[name], dtype=le_dtype).tobytes())


def predict(net: ConvNet, raster) -> "PredictionRecord":
    """Single-sample prediction; argmax ties break toward the lowest class id."""
    from .calibration import PredictionRecord  # local import avoids import-order knots

    probs = net.predict_probs(np.asarray(raster)[None])[0]
    predicted = int(np.argmax(probs))
    return PredictionRecord(
        probs=probs,
        predicted=predicted,
        confidence=float(probs[predicted]),
        true_class=-1,
        objectness=None,
    )


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    lr: float
    train_loss: float
    val_acc: float


def evaluate_accuracy(net: ConvNet, eval_set: EvalSet, batch_size: int = 256) -> float:
    correct = 0
    for start in range(0, len(eval_set.images), batch_size):
        probs = net.predict_probs(eval_set.images[start : start + batch_size])
        correct += int((probs.argmax(axis=1) == eval_set.classes[start : start + batch_size]).sum())
    return correct / len(eval_set.images)


def train(
    dataset: Dataset,
    policy: LabelingPolicy,
    net_cfg: NetConfig,
    train_cfg: TrainConfig,
    sampler_cfg: SamplerConfig,
    val_set: EvalSet | None = None,
    progress=None,
) -> tuple[ConvNet, list[EpochLog]]:
    """Train a classifier under the given labeling policy.

    The augmentation stream is a pure function of (sampler seed, step), so
    runs differing only in policy consume bit-identical images and differ
    only through their target vectors.  Context items take the policy's
    context rule; all other items are labeled from their class and the exact
    object proportion of the drawn view.
    """
    net = ConvNet(net_cfg)
    batcher = TrainingBatcher(dataset, sampler_cfg)
    n_batches = max(1, len(dataset) // train_cfg.batch_size)
    logs: list[EpochLog] = []
    step = 0
    targets = np.empty((train_cfg.batch_size, policy.num_classes), dtype=np.float64)
    for epoch in range(train_cfg.epochs):
        lr = train_cfg.lr_at(epoch)
        epoch_losses = []
        for _ in range(n_batches):
            images, classes, objectness, is_context = batcher.batch(step, train_cfg.batch_size)
            step += train_cfg.batch_size
            for i in range(train_cfg.batch_size):
                if is_context[i]:
                    targets[i] = policy.context_target(int(classes[i]))
                else:
                    targets[i] = policy.target(int(classes[i]), float(objectness[i]))
            loss = net.train_step(images, targets, lr, train_cfg.momentum, step=step)
            epoch_losses.append(loss)
        val_acc = evaluate_accuracy(net, val_set) if val_set is not None else float("nan")
        entry = EpochLog(epoch=epoch, lr=lr, train_loss=float(np.mean(epoch_losses)), val_acc=val_acc)
        logs.append(entry)
        if progress is not None:
            progress(entry)
    return net, logs
