"""Layer graph: declarative model specs, parameter init, forward and backward.

A model is an ordered stack of layers validated at build time so that shapes
chain. forward() records a tape of per-layer activations; backward() replays
it in reverse and returns one gradient per parameter plus the input gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError, StaleTapeError
from .seeding import as_generator
from .tensor import (
    ConvGeom,
    Tensor,
    _col2im,
    _conv_forward_array,
    _maxpool_forward_array,
    stable_sigmoid,
)

LAYER_KINDS = (
    "conv", "maxpool", "relu", "sigmoid", "dropout", "flatten", "dense",
    "softmax-output", "sigmoid-output",
)
OUTPUT_KINDS = ("softmax-output", "sigmoid-output")


@dataclass(frozen=True)
class LayerSpec:
    """One layer of a model; only the fields its kind needs are set."""

    kind: str
    filters: int | None = None
    kernel: int | None = None
    stride: int = 1
    padding: int = 0
    window: int | None = None
    p: float | None = None
    width: int | None = None
    in_width: int | None = None  # optional; checked against the chained width

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ConfigError(f"unknown layer kind {self.kind!r}")
        if self.kind == "conv":
            if not self.filters or self.filters < 1 or not self.kernel or self.kernel < 1:
                raise ConfigError("conv layer needs positive filters and kernel")
            if self.stride < 1 or self.padding < 0:
                raise ConfigError("conv layer needs stride >= 1 and padding >= 0")
        elif self.kind == "maxpool":
            if not self.window or self.window < 1 or self.stride < 1:
                raise ConfigError("maxpool layer needs positive window and stride")
        elif self.kind == "dropout":
            if self.p is None or not (0.0 <= self.p < 1.0):
                raise ConfigError(f"dropout probability must be in [0, 1), got {self.p}")
        elif self.kind == "dense":
            if not self.width or self.width < 1:
                raise ConfigError("dense layer needs a positive width")


def conv(filters: int, kernel: int, stride: int = 1, padding: int = 0) -> LayerSpec:
    return LayerSpec("conv", filters=filters, kernel=kernel, stride=stride, padding=padding)


def maxpool(window: int, stride: int | None = None) -> LayerSpec:
    return LayerSpec("maxpool", window=window, stride=window if stride is None else stride)


def relu() -> LayerSpec:
    return LayerSpec("relu")


def sigmoid() -> LayerSpec:
    return LayerSpec("sigmoid")


def dropout(p: float) -> LayerSpec:
    return LayerSpec("dropout", p=p)


def flatten() -> LayerSpec:
    return LayerSpec("flatten")


def dense(width: int, in_width: int | None = None) -> LayerSpec:
    return LayerSpec("dense", width=width, in_width=in_width)


def softmax_output() -> LayerSpec:
    return LayerSpec("softmax-output")


def sigmoid_output() -> LayerSpec:
    return LayerSpec("sigmoid-output")


@dataclass(frozen=True)
class ModelSpec:
    """Input shape [C,H,W], ordered layer stack, and class count."""

    input_shape: tuple[int, int, int]
    layers: tuple[LayerSpec, ...]
    classes: int = 3

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        if len(self.input_shape) != 3 or any(d < 1 for d in self.input_shape):
            raise ConfigError(f"input shape must be three positive sizes, got {self.input_shape}")
        if self.classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.classes}")

    def validate(self) -> list[tuple[int, ...]]:
        """Chain shapes layer by layer; returns the per-layer output shapes.

        Raises ConfigError naming the first inconsistent layer.
        """
        outputs = [spec for spec in self.layers if spec.kind in OUTPUT_KINDS]
        if len(outputs) != 1:
            raise ConfigError(f"model needs exactly one output layer, found {len(outputs)}")
        if self.layers[-1].kind not in OUTPUT_KINDS:
            raise ConfigError(f"output layer must be last, found {self.layers[-1].kind!r}")

        shape: tuple[int, ...] = self.input_shape
        chained: list[tuple[int, ...]] = []
        for i, layer in enumerate(self.layers):
            where = f"layer {i} ({layer.kind})"
            if layer.kind == "conv":
                if len(shape) != 3:
                    raise ConfigError(f"{where}: needs a [C,H,W] input, has {shape}")
                geom = ConvGeom(layer.kernel, layer.kernel, layer.stride, layer.padding)
                try:
                    oh, ow = geom.output_size(shape[1], shape[2])
                except Exception as exc:
                    raise ConfigError(f"{where}: {exc}") from exc
                shape = (layer.filters, oh, ow)
            elif layer.kind == "maxpool":
                if len(shape) != 3:
                    raise ConfigError(f"{where}: needs a [C,H,W] input, has {shape}")
                if layer.window > shape[1] or layer.window > shape[2]:
                    raise ConfigError(f"{where}: window {layer.window} exceeds grid {shape[1]}x{shape[2]}")
                try:
                    oh, ow = ConvGeom(layer.window, layer.window, layer.stride).output_size(shape[1], shape[2])
                except Exception as exc:
                    raise ConfigError(f"{where}: {exc}") from exc
                shape = (shape[0], oh, ow)
            elif layer.kind == "flatten":
                shape = (int(np.prod(shape)),)
            elif layer.kind == "dense":
                if len(shape) != 1:
                    raise ConfigError(f"{where}: needs a flat input, has {shape}")
                if layer.in_width is not None and layer.in_width != shape[0]:
                    raise ConfigError(
                        f"{where}: declared input width {layer.in_width} "
                        f"does not match chained width {shape[0]}"
                    )
                shape = (layer.width,)
            elif layer.kind in OUTPUT_KINDS:
                if shape != (self.classes,):
                    raise ConfigError(
                        f"{where}: expects {self.classes} class scores, has {shape}"
                    )
            # relu/sigmoid/dropout keep the shape
            chained.append(shape)
        return chained

    def to_text(self) -> str:
        """Canonical key=value document; round-trips through from_text."""
        lines = [
            f"input_shape={','.join(str(d) for d in self.input_shape)}",
            f"classes={self.classes}",
        ]
        for i, layer in enumerate(self.layers):
            parts = [layer.kind]
            if layer.kind == "conv":
                parts += [f"filters={layer.filters}", f"kernel={layer.kernel}",
                          f"stride={layer.stride}", f"padding={layer.padding}"]
            elif layer.kind == "maxpool":
                parts += [f"window={layer.window}", f"stride={layer.stride}"]
            elif layer.kind == "dropout":
                parts += [f"p={layer.p!r}"]
            elif layer.kind == "dense":
                parts += [f"width={layer.width}"]
                if layer.in_width is not None:
                    parts += [f"in_width={layer.in_width}"]
            lines.append(f"layer.{i}={' '.join(parts)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ModelSpec":
        from .config import parse_kv

        kv = parse_kv(text)
        try:
            input_shape = tuple(int(d) for d in kv.pop("input_shape").split(","))
            classes = int(kv.pop("classes"))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad model spec document: {exc}") from exc
        layers = []
        for i in range(len(kv)):
            key = f"layer.{i}"
            if key not in kv:
                raise ConfigError(f"model spec document missing {key}")
            tokens = kv[key].split()
            kind, params = tokens[0], {}
            for tok in tokens[1:]:
                name, _, value = tok.partition("=")
                if name in ("p",):
                    params[name] = float(value)
                else:
                    params[name] = int(value)
            try:
                layers.append(LayerSpec(kind, **params))
            except TypeError as exc:
                raise ConfigError(f"{key}: {exc}") from exc
        return cls(input_shape=input_shape, layers=tuple(layers), classes=classes)


def parameter_shapes(spec: ModelSpec) -> list[tuple[str, tuple[int, ...]]]:
    """Named parameter shapes in spec order (weight before bias per layer)."""
    chained = spec.validate()
    shape: tuple[int, ...] = spec.input_shape
    out: list[tuple[str, tuple[int, ...]]] = []
    for i, layer in enumerate(spec.layers):
        if layer.kind == "conv":
            out.append((f"layer{i}.weight", (layer.filters, shape[0], layer.kernel, layer.kernel)))
            out.append((f"layer{i}.bias", (layer.filters,)))
        elif layer.kind == "dense":
            out.append((f"layer{i}.weight", (shape[0], layer.width)))
            out.append((f"layer{i}.bias", (layer.width,)))
        shape = chained[i]
    return out


@dataclass
class Model:
    """A spec plus its instantiated parameters; mode gates dropout."""

    spec: ModelSpec
    params: dict[str, Tensor]
    mode: str = "train"

    def with_mode(self, mode: str) -> "Model":
        if mode not in ("train", "eval"):
            raise ConfigError(f"mode must be 'train' or 'eval', got {mode!r}")
        return Model(self.spec, self.params, mode)


def build(spec: ModelSpec, seed: int) -> Model:
    """Instantiate parameters: uniform(-sqrt(6/fan_in), +sqrt(6/fan_in)), zero biases."""
    shapes = parameter_shapes(spec)  # validates the chain
    rng = np.random.default_rng(seed)
    params: dict[str, Tensor] = {}
    for name, shape in shapes:
        if name.endswith(".bias"):
            params[name] = Tensor.zeros(shape)
        else:
            fan_in = int(np.prod(shape[1:])) if len(shape) == 4 else shape[0]
            bound = math.sqrt(6.0 / fan_in)
            params[name] = Tensor._wrap(rng.uniform(-bound, bound, shape))
    return Model(spec, params, "train")


@dataclass
class TapeCache:
    """Per-layer context saved by forward() for the matching backward()."""

    caches: list
    params: dict[str, Tensor]
    mode: str
    batch_shape: tuple[int, ...]


@dataclass
class GradientSet:
    """One gradient per parameter (same shapes) plus the batch-input gradient."""

    params: dict[str, Tensor]
    input: Tensor

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]


def forward(model: Model, batch: Tensor,
            rng: int | np.random.Generator | None = None) -> tuple[Tensor, TapeCache]:
    """Run the stack; returns class probabilities [N,K] and the tape.

    `rng` seeds dropout masks and is required only in train mode when some
    dropout layer has p > 0. Eval mode is a pure function of (params, batch).
    """
    spec = model.spec
    if batch.ndim != 4:
        raise DimensionError(f"batch must be [N,C,H,W], got shape {batch.shape}")
    if batch.shape[1:] != spec.input_shape:
        raise DimensionError(
            f"batch shape {batch.shape[1:]} does not match model input {spec.input_shape}"
        )
    gen = as_generator(rng)
    training = model.mode == "train"

    x = batch.array
    caches: list = []
    for i, layer in enumerate(spec.layers):
        if layer.kind == "conv":
            w = model.params[f"layer{i}.weight"].array
            b = model.params[f"layer{i}.bias"].array
            padded = (x.shape[0], x.shape[1],
                      x.shape[2] + 2 * layer.padding, x.shape[3] + 2 * layer.padding)
            out, cols = _conv_forward_array(x, w, b, layer.stride, layer.padding)
            caches.append(("conv", cols, padded, w.shape, layer))
            x = out
        elif layer.kind == "maxpool":
            out, argmax = _maxpool_forward_array(x, layer.window, layer.stride)
            caches.append(("maxpool", argmax, x.shape))
            x = out
        elif layer.kind == "relu":
            mask = x > 0
            caches.append(("relu", mask))
            x = x * mask
        elif layer.kind == "sigmoid":
            x = stable_sigmoid(x)
            caches.append(("sigmoid", x))
        elif layer.kind == "dropout":
            if training and layer.p > 0.0:
                if gen is None:
                    raise ConfigError("train-mode dropout needs an rng seed")
                keep = (gen.random(x.shape) >= layer.p) / (1.0 - layer.p)
                caches.append(("dropout", keep))
                x = x * keep
            else:
                caches.append(("dropout", None))  # eval: identity, mask of ones
        elif layer.kind == "flatten":
            caches.append(("flatten", x.shape))
            x = x.reshape(x.shape[0], -1)
        elif layer.kind == "dense":
            w = model.params[f"layer{i}.weight"].array
            b = model.params[f"layer{i}.bias"].array
            caches.append(("dense", x))
            x = x @ w + b
        elif layer.kind == "softmax-output":
            z = x - x.max(axis=1, keepdims=True)
            ez = np.exp(z)
            x = ez / ez.sum(axis=1, keepdims=True)
            caches.append(("softmax-output", x))
        elif layer.kind == "sigmoid-output":
            x = stable_sigmoid(x)
            caches.append(("sigmoid-output", x))

    tape = TapeCache(caches=caches, params=dict(model.params),
                     mode=model.mode, batch_shape=batch.shape)
    return Tensor._wrap(x), tape


def backward(model: Model, tape: TapeCache, loss_grad: Tensor) -> GradientSet:
    """Reverse-mode pass over the taped forward; pure chain rule on loss_grad."""
    spec = model.spec
    if tape.params.keys() != model.params.keys() or any(
        tape.params[k] is not model.params[k] for k in model.params
    ):
        raise StaleTapeError("tape was recorded against different parameters")

    g = np.array(loss_grad.array, dtype=np.float64)
    grads: dict[str, Tensor] = {}
    for i in range(len(spec.layers) - 1, -1, -1):
        layer = spec.layers[i]
        cache = tape.caches[i]
        if layer.kind == "conv":
            _, cols, padded, wshape, lay = cache
            f = wshape[0]
            n = g.shape[0]
            g2 = g.reshape(n, f, -1)
            gw = np.matmul(g2, cols.transpose(0, 2, 1)).sum(axis=0).reshape(wshape)
            gb = g2.sum(axis=(0, 2))
            w2 = model.params[f"layer{i}.weight"].array.reshape(f, -1)
            gcols = np.matmul(w2.T, g2)
            gx = _col2im(gcols, padded, lay.kernel, lay.kernel, lay.stride)
            if lay.padding:
                p = lay.padding
                gx = gx[:, :, p:-p, p:-p]
            grads[f"layer{i}.weight"] = Tensor._wrap(gw)
            grads[f"layer{i}.bias"] = Tensor._wrap(gb)
            g = np.ascontiguousarray(gx)
        elif layer.kind == "maxpool":
            _, argmax, in_shape = cache
            flat = np.zeros(int(np.prod(in_shape)), dtype=np.float64)
            np.add.at(flat, argmax.ravel(), g.ravel())
            g = flat.reshape(in_shape)
        elif layer.kind == "relu":
            g = g * cache[1]
        elif layer.kind == "sigmoid":
            s = cache[1]
            g = g * s * (1.0 - s)
        elif layer.kind == "dropout":
            keep = cache[1]
            if keep is not None:
                g = g * keep
        elif layer.kind == "flatten":
            g = g.reshape(cache[1])
        elif layer.kind == "dense":
            x_in = cache[1]
            w = model.params[f"layer{i}.weight"].array
            grads[f"layer{i}.weight"] = Tensor._wrap(x_in.T @ g)
            grads[f"layer{i}.bias"] = Tensor._wrap(g.sum(axis=0))
            g = g @ w.T
        elif layer.kind == "softmax-output":
            p = cache[1]
            g = p * (g - (g * p).sum(axis=1, keepdims=True))
        elif layer.kind == "sigmoid-output":
            s = cache[1]
            g = g * s * (1.0 - s)

    ordered = {name: grads[name] for name, _ in parameter_shapes(spec)}
    return GradientSet(params=ordered, input=Tensor._wrap(g))


@dataclass(frozen=True)
class SpecTemplate:
    """Builds the reference conv stack for a given set of hyperparameters.

    `hidden_layers` controls the number of conv/act/pool blocks; filters
    double per block. Convs pad by 1 so pooling always sees even grids.
    """

    input_shape: tuple[int, int, int]
    classes: int = 3
    base_filters: int = 8
    dense_width: int = 64
    output: str = "softmax-output"

    def build(self, hp) -> ModelSpec:
        act = relu if hp.activation == "relu" else sigmoid
        stack: list[LayerSpec] = []
        for block in range(hp.hidden_layers):
            stack.append(conv(self.base_filters * (2 ** block), 3, stride=1, padding=1))
            stack.append(act())
            stack.append(maxpool(2, 2))
        stack.append(flatten())
        stack.append(dense(self.dense_width))
        stack.append(dropout(hp.dropout_p))
        stack.append(dense(self.classes))
        stack.append(sigmoid_output() if self.output == "sigmoid-output" else softmax_output())
        spec = ModelSpec(input_shape=self.input_shape, layers=tuple(stack), classes=self.classes)
        spec.validate()
        return spec


def reference_spec(input_shape: tuple[int, int, int], hp, classes: int = 3,
                   output: str = "softmax-output") -> ModelSpec:
    return SpecTemplate(input_shape=input_shape, classes=classes, output=output).build(hp)


def predict_labels(scores: Tensor) -> np.ndarray:
    """Argmax class per row of a [N,K] score matrix."""
    return np.argmax(scores.array, axis=1)
