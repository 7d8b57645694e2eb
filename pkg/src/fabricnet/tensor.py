"""Dense float64 tensors and the array kernels everything else builds on.

Tensors are immutable once constructed, so they can be shared freely across
threads; every operation returns a new Tensor. Summation order is fixed for
a given input, which keeps results bit-reproducible run to run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, GeometryError

# Flat int64 source index of each pooling winner, shaped like the pool output.
ArgmaxIndexMap = np.ndarray


class Tensor:
    """Immutable n-dimensional array of 64-bit floats, row-major layout.

    `data` exposes the flat buffer; `array` the shaped (read-only) view.
    All dimension sizes are at least 1 and product(shape) == len(data).
    """

    __slots__ = ("_array",)

    def __init__(self, values, shape: tuple[int, ...] | list[int] | None = None):
        arr = np.array(values, dtype=np.float64, order="C")
        if shape is not None:
            try:
                arr = arr.reshape(tuple(shape))
            except ValueError as exc:
                raise DimensionError(
                    f"cannot reshape {arr.size} values into shape {tuple(shape)}"
                ) from exc
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if any(d < 1 for d in arr.shape):
            raise DimensionError(f"all dimension sizes must be >= 1, got {arr.shape}")
        arr.flags.writeable = False
        self._array = arr

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        """Adopt a freshly computed float64 array without copying."""
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if any(d < 1 for d in arr.shape):
            raise DimensionError(f"all dimension sizes must be >= 1, got {arr.shape}")
        arr.flags.writeable = False
        t = object.__new__(cls)
        t._array = arr
        return t

    @classmethod
    def zeros(cls, shape) -> "Tensor":
        return cls._wrap(np.zeros(shape, dtype=np.float64))

    @classmethod
    def full(cls, shape, value: float) -> "Tensor":
        return cls._wrap(np.full(shape, float(value), dtype=np.float64))

    @property
    def shape(self) -> tuple[int, ...]:
        return self._array.shape

    @property
    def ndim(self) -> int:
        return self._array.ndim

    @property
    def size(self) -> int:
        return self._array.size

    @property
    def data(self) -> np.ndarray:
        """Flat row-major view of the buffer (read-only)."""
        return self._array.reshape(-1)

    @property
    def array(self) -> np.ndarray:
        """Shaped read-only ndarray view."""
        return self._array

    def tolist(self):
        return self._array.tolist()

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


@dataclass(frozen=True)
class ConvGeom:
    """Sliding-window geometry: kernel size, stride, symmetric zero padding."""

    kernel_h: int
    kernel_w: int
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if self.kernel_h < 1 or self.kernel_w < 1:
            raise GeometryError(f"kernel sizes must be positive, got {self.kernel_h}x{self.kernel_w}")
        if self.stride < 1:
            raise GeometryError(f"stride must be positive, got {self.stride}")
        if self.padding < 0:
            raise GeometryError(f"padding must be non-negative, got {self.padding}")

    def output_size(self, h: int, w: int) -> tuple[int, int]:
        """Output grid for an HxW input; rejects any non-integer size."""
        out = []
        for name, size, k in (("height", h, self.kernel_h), ("width", w, self.kernel_w)):
            span = size + 2 * self.padding - k
            if span < 0 or span % self.stride != 0:
                raise GeometryError(
                    f"{name} {size} with kernel {k}, stride {self.stride}, "
                    f"padding {self.padding} gives no integer output size"
                )
            out.append(span // self.stride + 1)
        return out[0], out[1]


def stable_sigmoid(x: np.ndarray) -> np.ndarray:
    """1/(1+e^-x) computed via e^x on the negative branch, so exp never overflows."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, padding: int) -> np.ndarray:
    """(N,C,H,W) -> patch matrix (N, C*kh*kw, H'*W'). Copies once at the reshape."""
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    n, c, h, w = x.shape
    oh = (h - kh) // stride + 1
    ow = (w - kw) // stride + 1
    sn, sc, sh, sw = x.strides
    windows = np.lib.stride_tricks.as_strided(
        x,
        shape=(n, c, kh, kw, oh, ow),
        strides=(sn, sc, sh, sw, sh * stride, sw * stride),
        writeable=False,
    )
    return windows.reshape(n, c * kh * kw, oh * ow)


def _col2im(cols: np.ndarray, padded_shape: tuple[int, int, int, int],
            kh: int, kw: int, stride: int) -> np.ndarray:
    """Scatter-add patch columns back onto the padded input grid."""
    n, c, hp, wp = padded_shape
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1
    out = np.zeros(padded_shape, dtype=np.float64)
    cols6 = cols.reshape(n, c, kh, kw, oh, ow)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += cols6[:, :, i, j]
    return out


def _conv_forward_array(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray,
                        stride: int, padding: int) -> tuple[np.ndarray, np.ndarray]:
    """Raw conv kernel; returns (output, patch columns) so callers can tape cols."""
    n = x.shape[0]
    f, _, kh, kw = kernels.shape
    oh = (x.shape[2] + 2 * padding - kh) // stride + 1
    ow = (x.shape[3] + 2 * padding - kw) // stride + 1
    cols = _im2col(x, kh, kw, stride, padding)
    out = np.matmul(kernels.reshape(f, -1), cols)  # (N, F, oh*ow)
    out = out.reshape(n, f, oh, ow) + bias[None, :, None, None]
    return out, cols


def conv2d(input: Tensor, kernels: Tensor, bias: Tensor, geom: ConvGeom) -> Tensor:
    """Cross-correlation of a [N,C,H,W] batch with [F,C,kh,kw] filters plus bias.

    Each output cell is the sliding-window dot product of an input patch and
    one kernel, plus that filter's bias.
    """
    if input.ndim != 4:
        raise DimensionError(f"conv2d input must be [N,C,H,W], got shape {input.shape}")
    if kernels.ndim != 4:
        raise DimensionError(f"conv2d kernels must be [F,C,kh,kw], got shape {kernels.shape}")
    n, c, h, w = input.shape
    f, kc, kh, kw = kernels.shape
    if kc != c:
        raise DimensionError(
            f"channel mismatch: input axis 1 has size {c}, kernel axis 1 has size {kc}"
        )
    if (kh, kw) != (geom.kernel_h, geom.kernel_w):
        raise DimensionError(
            f"kernel tensor is {kh}x{kw} but geometry declares "
            f"{geom.kernel_h}x{geom.kernel_w}"
        )
    if bias.shape != (f,):
        raise DimensionError(f"bias must have shape ({f},), got {bias.shape}")
    geom.output_size(h, w)
    out, _ = _conv_forward_array(input.array, kernels.array, bias.array,
                                 geom.stride, geom.padding)
    return Tensor._wrap(out)


def _maxpool_forward_array(x: np.ndarray, window: int, stride: int
                           ) -> tuple[np.ndarray, np.ndarray]:
    """Raw max-pool kernel; returns (output, flat argmax indices into x)."""
    n, c, h, w = x.shape
    oh = (h - window) // stride + 1
    ow = (w - window) // stride + 1
    sn, sc, sh, sw = x.strides
    patches = np.lib.stride_tricks.as_strided(
        x,
        shape=(n, c, oh, ow, window, window),
        strides=(sn, sc, sh * stride, sw * stride, sh, sw),
        writeable=False,
    ).reshape(n, c, oh, ow, window * window)
    local = patches.argmax(axis=-1)  # first max wins: deterministic tie-break
    out = np.take_along_axis(patches, local[..., None], axis=-1)[..., 0]
    wy, wx = np.divmod(local, window)
    src_h = np.arange(oh)[None, None, :, None] * stride + wy
    src_w = np.arange(ow)[None, None, None, :] * stride + wx
    plane = (np.arange(n)[:, None, None, None] * c + np.arange(c)[None, :, None, None])
    flat = (plane * h + src_h) * w + src_w
    return out, flat.astype(np.int64)


def maxpool2d(input: Tensor, window: int, stride: int) -> tuple[Tensor, ArgmaxIndexMap]:
    """Max over window x window patches; also returns each winner's flat source index."""
    if input.ndim != 4:
        raise DimensionError(f"maxpool2d input must be [N,C,H,W], got shape {input.shape}")
    if window < 1 or stride < 1:
        raise GeometryError(f"window and stride must be positive, got {window}, {stride}")
    _, _, h, w = input.shape
    if window > h or window > w:
        raise GeometryError(f"window {window} exceeds input extent {h}x{w}")
    ConvGeom(window, window, stride, 0).output_size(h, w)
    out, argmax = _maxpool_forward_array(input.array, window, stride)
    return Tensor._wrap(out), argmax


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of [M,K] and [K,P]."""
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul needs 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"inner dimensions differ: a axis 1 has size {a.shape[1]}, "
            f"b axis 0 has size {b.shape[0]}"
        )
    return Tensor._wrap(a.array @ b.array)


def elementwise(input: Tensor, fn: str, arg=None) -> Tensor:
    """Shape-preserving map: 'sigmoid', 'relu', 'scale' (by arg), 'add-bias' (arg along axis 1)."""
    x = input.array
    if fn == "sigmoid":
        return Tensor._wrap(stable_sigmoid(x))
    if fn == "relu":
        return Tensor._wrap(np.maximum(x, 0.0))
    if fn == "scale":
        if arg is None:
            raise ValueError("scale needs a numeric factor")
        return Tensor._wrap(x * float(arg))
    if fn == "add-bias":
        if not isinstance(arg, Tensor) or arg.ndim != 1:
            raise DimensionError("add-bias needs a 1-d bias Tensor")
        if input.ndim < 2 or arg.shape[0] != input.shape[1]:
            raise DimensionError(
                f"bias of length {arg.shape[0]} does not match axis 1 of {input.shape}"
            )
        expand = (1, -1) + (1,) * (input.ndim - 2)
        return Tensor._wrap(x + arg.array.reshape(expand))
    raise ValueError(f"unknown elementwise fn {fn!r}")
