"""Loss, SGD with L2 weight decay, the training loop, and checkpoint files."""

from __future__ import annotations

import struct
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import format_kv, parse_kv
from .errors import (
    CheckpointDigestError,
    CheckpointFormatError,
    CheckpointSpecMismatchError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    ConfigError,
    DataError,
    DimensionError,
)
from .layers import Model, ModelSpec, backward, build, forward, parameter_shapes
from .seeding import derive_seed
from .tensor import Tensor

LOG_EPS = 1e-12  # inside log() so confident wrong predictions stay finite

CHECKPOINT_MAGIC = b"FSCK"
CHECKPOINT_VERSION = 1

_ACTIVATIONS = ("relu", "sigmoid")


@dataclass(frozen=True)
class HyperParams:
    """The search axes: step size, batching, depth, dropout, decay, activation."""

    learning_rate: float
    batch_size: int
    epochs: int
    dropout_p: float = 0.0
    l2_lambda: float = 0.0
    activation: str = "relu"
    hidden_layers: int = 2

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be positive, got {self.epochs}")
        if not (0.0 <= self.dropout_p < 1.0):
            raise ConfigError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if self.l2_lambda < 0:
            raise ConfigError(f"l2_lambda must be non-negative, got {self.l2_lambda}")
        if self.activation not in _ACTIVATIONS:
            raise ConfigError(f"activation must be one of {_ACTIVATIONS}, got {self.activation!r}")
        if self.hidden_layers < 1:
            raise ConfigError(f"hidden_layers must be positive, got {self.hidden_layers}")

    def to_kv(self) -> dict[str, str]:
        return {
            "learning_rate": repr(self.learning_rate),
            "batch_size": str(self.batch_size),
            "epochs": str(self.epochs),
            "dropout_p": repr(self.dropout_p),
            "l2_lambda": repr(self.l2_lambda),
            "activation": self.activation,
            "hidden_layers": str(self.hidden_layers),
        }

    @classmethod
    def from_kv(cls, kv: dict[str, str]) -> "HyperParams":
        try:
            return cls(
                learning_rate=float(kv["learning_rate"]),
                batch_size=int(kv["batch_size"]),
                epochs=int(kv["epochs"]),
                dropout_p=float(kv.get("dropout_p", "0.0")),
                l2_lambda=float(kv.get("l2_lambda", "0.0")),
                activation=kv.get("activation", "relu"),
                hidden_layers=int(kv.get("hidden_layers", "2")),
            )
        except KeyError as exc:
            raise ConfigError(f"hyperparameter document missing {exc}") from exc
        except ValueError as exc:
            raise ConfigError(f"bad hyperparameter value: {exc}") from exc

    @classmethod
    def from_text(cls, text: str) -> "HyperParams":
        return cls.from_kv(parse_kv(text))

    def to_text(self) -> str:
        return format_kv(self.to_kv())


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    seconds: float = field(compare=False, default=0.0)


@dataclass
class TrainLog:
    """Per-epoch training history; epochs numbered from 1."""

    seed: int
    records: list[EpochRecord] = field(default_factory=list)

    CSV_HEADER = "epoch,train_loss,train_acc,val_loss,val_acc"

    def to_csv(self) -> str:
        lines = [self.CSV_HEADER]
        for r in self.records:
            lines.append(f"{r.epoch},{r.train_loss!r},{r.train_acc!r},{r.val_loss!r},{r.val_acc!r}")
        return "\n".join(lines) + "\n"


def cross_entropy(scores: Tensor, labels) -> tuple[float, Tensor]:
    """Mean negative log-probability of the true class, and its gradient.

    loss = -(1/N) sum_n log(scores[n, label_n] + eps); grad matches scores' shape.
    """
    if scores.ndim != 2:
        raise DimensionError(f"scores must be [N,K], got shape {scores.shape}")
    n, k = scores.shape
    y = np.asarray(labels, dtype=np.int64)
    if y.shape != (n,):
        raise DimensionError(f"need {n} labels, got shape {y.shape}")
    if y.size and (y.min() < 0 or y.max() >= k):
        raise DataError(f"labels must lie in [0, {k}), got range [{y.min()}, {y.max()}]")
    s = scores.array
    picked = s[np.arange(n), y]
    loss = float(-np.mean(np.log(picked + LOG_EPS)))
    grad = np.zeros_like(s)
    grad[np.arange(n), y] = -1.0 / (n * (picked + LOG_EPS))
    return loss, Tensor._wrap(grad)


def sgd_step(model: Model, grads, hp: HyperParams) -> Model:
    """w <- w - lr * (g + l2 * w) for weights; biases skip the decay term."""
    gmap = grads.params if hasattr(grads, "params") else grads
    if gmap.keys() != model.params.keys():
        raise DimensionError("gradient set does not cover the model parameters")
    lr = hp.learning_rate
    lam = hp.l2_lambda
    new_params: dict[str, Tensor] = {}
    for name, w in model.params.items():
        g = gmap[name]
        if g.shape != w.shape:
            raise DimensionError(f"{name}: gradient shape {g.shape} != parameter shape {w.shape}")
        if name.endswith(".bias") or lam == 0.0:
            new_params[name] = Tensor._wrap(w.array - lr * g.array)
        else:
            new_params[name] = Tensor._wrap(w.array - lr * (g.array + lam * w.array))
    return Model(model.spec, new_params, model.mode)


def evaluate(model: Model, dataset, batch_size: int = 64) -> tuple[float, float]:
    """Eval-mode loss and accuracy over a dataset, chunked to bound memory."""
    m = model.with_mode("eval")
    n = len(dataset)
    if n == 0:
        raise DataError("cannot evaluate on an empty dataset")
    total_nll = 0.0
    correct = 0
    for start in range(0, n, batch_size):
        stop = min(start + batch_size, n)
        batch = Tensor._wrap(dataset.images.array[start:stop])
        labels = dataset.labels[start:stop]
        scores, _ = forward(m, batch)
        loss, _ = cross_entropy(scores, labels)
        total_nll += loss * (stop - start)
        correct += int(np.sum(np.argmax(scores.array, axis=1) == labels))
    return total_nll / n, correct / n


def train(spec: ModelSpec, hp: HyperParams, train_set, val_set, seed: int
          ) -> tuple[Model, TrainLog]:
    """Mini-batch SGD for hp.epochs; returns the final model (eval mode) and log.

    Fully deterministic for fixed (spec, hp, data, seed): init, the per-epoch
    shuffle, and all dropout masks come from seeds derived from `seed`.
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise DataError("training and validation sets must be non-empty")
    model = build(spec, derive_seed(seed, "init"))
    shuffle_rng = np.random.default_rng(derive_seed(seed, "shuffle"))
    dropout_rng = np.random.default_rng(derive_seed(seed, "dropout"))

    n = len(train_set)
    images = train_set.images.array
    labels = train_set.labels
    log = TrainLog(seed=seed)
    for epoch in range(1, hp.epochs + 1):
        t0 = time.perf_counter()
        order = shuffle_rng.permutation(n)
        epoch_nll = 0.0
        correct = 0
        for start in range(0, n, hp.batch_size):  # last short batch kept
            idx = order[start:start + hp.batch_size]
            batch = Tensor._wrap(np.ascontiguousarray(images[idx]))
            batch_labels = labels[idx]
            scores, tape = forward(model, batch, dropout_rng)
            loss, grad = cross_entropy(scores, batch_labels)
            grads = backward(model, tape, grad)
            model = sgd_step(model, grads, hp)
            epoch_nll += loss * len(idx)
            correct += int(np.sum(np.argmax(scores.array, axis=1) == batch_labels))
        val_loss, val_acc = evaluate(model, val_set, batch_size=max(hp.batch_size, 32))
        log.records.append(EpochRecord(
            epoch=epoch,
            train_loss=epoch_nll / n,
            train_acc=correct / n,
            val_loss=val_loss,
            val_acc=val_acc,
            seconds=time.perf_counter() - t0,
        ))
    return model.with_mode("eval"), log


def save_checkpoint(model: Model, path: str | Path) -> None:
    """FSCK container: magic, u16 version, length-prefixed spec text,
    raw little-endian float64 parameter buffers in spec order, u32 CRC."""
    spec_text = model.spec.to_text().encode("utf-8")
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<H", CHECKPOINT_VERSION)
    blob += struct.pack("<I", len(spec_text))
    blob += spec_text
    for name, _ in parameter_shapes(model.spec):
        blob += model.params[name].array.astype("<f8").tobytes()
    blob += struct.pack("<I", zlib.crc32(bytes(blob)))
    Path(path).write_bytes(bytes(blob))


def load_checkpoint(path: str | Path, spec: ModelSpec | None = None) -> Model:
    """Read a checkpoint back; optional `spec` must match the embedded one."""
    raw = Path(path).read_bytes()
    header = struct.calcsize("<4sHI")
    if len(raw) < header + 4:
        raise CheckpointTruncatedError(f"{path}: file too short for a checkpoint header")
    magic, version, spec_len = struct.unpack_from("<4sHI", raw, 0)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"{path}: format version {version}, expected {CHECKPOINT_VERSION}"
        )
    if len(raw) < header + spec_len + 4:
        raise CheckpointTruncatedError(f"{path}: spec text cut short")
    spec_text = raw[header:header + spec_len].decode("utf-8")
    loaded_spec = ModelSpec.from_text(spec_text)
    shapes = parameter_shapes(loaded_spec)
    payload = sum(int(np.prod(s)) for _, s in shapes) * 8
    expected = header + spec_len + payload + 4
    if len(raw) < expected:
        raise CheckpointTruncatedError(
            f"{path}: expected {expected} bytes, found {len(raw)}"
        )
    if len(raw) > expected:
        raise CheckpointFormatError(f"{path}: {len(raw) - expected} trailing bytes")
    stored = struct.unpack_from("<I", raw, expected - 4)[0]
    if zlib.crc32(raw[:expected - 4]) != stored:
        raise CheckpointDigestError(f"{path}: CRC mismatch, file is corrupt")
    if spec is not None and spec != loaded_spec:
        raise CheckpointSpecMismatchError(
            f"{path}: checkpoint spec does not match the requested model spec"
        )
    params: dict[str, Tensor] = {}
    offset = header + spec_len
    for name, shape in shapes:
        count = int(np.prod(shape))
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shape)
        params[name] = Tensor._wrap(arr)
        offset += count * 8
    return Model(loaded_spec, params, "eval")
