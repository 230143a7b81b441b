"""Layer specifications, model configuration and the functional layer ops.

All image tensors are ``[batch, height, width, channels]``. Convolution
weights are ``[kh, kw, in_channels, out_channels]``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Union

import numpy as np

from . import kernels
from .errors import (
    IllegalStateError,
    InvalidArgumentError,
    InvalidConfigError,
    ShapeMismatchError,
)
from .tensor import Tensor

# Keeps one im2col buffer around 64 MiB regardless of batch size.
_COLS_BUDGET = 8 * 1024 * 1024


@dataclass(frozen=True)
class Conv2D:
    out_channels: int
    kernel_h: int
    kernel_w: int
    stride: int = 1
    padding_mode: str = "valid"

    def __post_init__(self):
        if min(self.out_channels, self.kernel_h, self.kernel_w, self.stride) < 1:
            raise InvalidConfigError(f"conv2d sizes must be >= 1: {self}")
        if self.padding_mode != "valid":
            raise InvalidConfigError(f"unsupported padding mode {self.padding_mode!r}")


@dataclass(frozen=True)
class MaxPool2D:
    pool_h: int = 2
    pool_w: int = 2
    stride: int = 2

    def __post_init__(self):
        if min(self.pool_h, self.pool_w, self.stride) < 1:
            raise InvalidConfigError(f"maxpool sizes must be >= 1: {self}")


@dataclass(frozen=True)
class Dropout:
    rate: float

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise InvalidConfigError(f"dropout rate must be in [0, 1), got {self.rate}")


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Dense:
    units: int

    def __post_init__(self):
        if self.units < 1:
            raise InvalidConfigError(f"dense units must be >= 1, got {self.units}")


@dataclass(frozen=True)
class Activation:
    kind: str

    def __post_init__(self):
        if self.kind not in ("relu", "sigmoid"):
            raise InvalidConfigError(f"unknown activation {self.kind!r}")


LayerSpec = Union[Conv2D, MaxPool2D, Dropout, Flatten, Dense, Activation]

_LAYER_TYPES = {
    "conv2d": Conv2D,
    "maxpool2d": MaxPool2D,
    "dropout": Dropout,
    "flatten": Flatten,
    "dense": Dense,
    "activation": Activation,
}
_TYPE_NAMES = {cls: name for name, cls in _LAYER_TYPES.items()}


@dataclass(frozen=True)
class ModelConfig:
    input_height: int
    input_width: int
    input_channels: int
    layers: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        self.output_shapes()

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return (self.input_height, self.input_width, self.input_channels)

    def output_shapes(self) -> list[tuple[int, ...]]:
        """Per-sample output shape of every layer; raises on impossible inputs."""
        if min(self.input_shape) < 1:
            raise InvalidConfigError(f"input dimensions must be >= 1, got {self.input_shape}")
        if not self.layers:
            raise InvalidConfigError("model has no layers")
        shape: tuple[int, ...] = self.input_shape
        shapes = []
        for i, spec in enumerate(self.layers):
            shape = _propagate(spec, shape, i)
            shapes.append(shape)
        if shape != (1,):
            raise InvalidConfigError(f"final layer must produce one value per sample, got {shape}")
        return shapes

    def to_dict(self) -> dict:
        return {
            "input_height": self.input_height,
            "input_width": self.input_width,
            "input_channels": self.input_channels,
            "layers": [{"type": _TYPE_NAMES[type(s)], **asdict(s)} for s in self.layers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        try:
            layers = []
            for item in d["layers"]:
                item = dict(item)
                layers.append(_LAYER_TYPES[item.pop("type")](**item))
            return cls(int(d["input_height"]), int(d["input_width"]), int(d["input_channels"]), tuple(layers))
        except (KeyError, TypeError) as exc:
            raise InvalidConfigError(f"malformed model config: {exc}") from None

    def canonical_text(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def _propagate(spec, shape, index):
    where = f"layer {index} ({_TYPE_NAMES[type(spec)]})"
    if isinstance(spec, (Conv2D, MaxPool2D)):
        if len(shape) != 3:
            raise InvalidConfigError(f"{where} needs an image input, got {shape}")
        h, w, c = shape
        if isinstance(spec, Conv2D):
            kh, kw, s, out_c = spec.kernel_h, spec.kernel_w, spec.stride, spec.out_channels
        else:
            kh, kw, s, out_c = spec.pool_h, spec.pool_w, spec.stride, c
        if h < kh or w < kw:
            raise InvalidConfigError(f"{where}: window {kh}x{kw} larger than input {h}x{w}")
        return ((h - kh) // s + 1, (w - kw) // s + 1, out_c)
    if isinstance(spec, Flatten):
        return (int(np.prod(shape)),)
    if isinstance(spec, Dense):
        if len(shape) != 1:
            raise InvalidConfigError(f"{where} needs a flat input, got {shape}")
        return (spec.units,)
    return shape


def default_model_config(input_size: int = 128, dropout_rate: float = 0.25, dense_units: int = 256) -> ModelConfig:
    """The two-stage conv/pool cascade with a dense sigmoid head for RGB input."""
    try:
        return ModelConfig(
            input_size, input_size, 3,
            (
                Conv2D(32, 5, 5),
                Activation("relu"),
                MaxPool2D(2, 2, 2),
                Conv2D(32, 5, 5),
                Activation("relu"),
                MaxPool2D(2, 2, 2),
                Dropout(dropout_rate),
                Flatten(),
                Dense(dense_units),
                Activation("relu"),
                Dense(1),
                Activation("sigmoid"),
            ),
        )
    except InvalidConfigError as exc:
        raise InvalidConfigError(f"input size {input_size} too small for the default model: {exc}") from None


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Weight and bias shapes keyed ``"<layer>.weight"`` / ``"<layer>.bias"``."""
    shapes = {}
    in_shape: tuple[int, ...] = config.input_shape
    for i, (spec, out_shape) in enumerate(zip(config.layers, config.output_shapes())):
        if isinstance(spec, Conv2D):
            shapes[f"{i}.weight"] = (spec.kernel_h, spec.kernel_w, in_shape[2], spec.out_channels)
            shapes[f"{i}.bias"] = (spec.out_channels,)
        elif isinstance(spec, Dense):
            shapes[f"{i}.weight"] = (in_shape[0], spec.units)
            shapes[f"{i}.bias"] = (spec.units,)
        in_shape = out_shape
    return shapes


def param_count(config: ModelConfig) -> tuple[list[int], int]:
    """Per-layer parameter counts (zero for parameter-free layers) and the total."""
    counts = []
    in_shape: tuple[int, ...] = config.input_shape
    for spec, out_shape in zip(config.layers, config.output_shapes()):
        if isinstance(spec, Conv2D):
            n = (spec.kernel_h * spec.kernel_w * in_shape[2] + 1) * spec.out_channels
        elif isinstance(spec, Dense):
            n = (in_shape[0] + 1) * spec.units
        else:
            n = 0
        counts.append(n)
        in_shape = out_shape
    return counts, sum(counts)


# ---------------------------------------------------------------------------
# functional ops


class ConvCache(NamedTuple):
    input: np.ndarray
    weights: np.ndarray
    stride: int


class DenseCache(NamedTuple):
    input: np.ndarray
    weights: np.ndarray


class PoolCache(NamedTuple):
    argmax: np.ndarray
    input_shape: tuple
    overlapping: bool


def _chunks(batch, per_sample):
    step = max(1, _COLS_BUDGET // max(per_sample, 1))
    for start in range(0, batch, step):
        yield slice(start, min(batch, start + step))


def conv2d_forward(x: Tensor, weights: Tensor, bias: Tensor, stride: int = 1,
                   padding_mode: str = "valid") -> tuple[Tensor, ConvCache]:
    if padding_mode != "valid":
        raise InvalidArgumentError(f"unsupported padding mode {padding_mode!r}")
    if x.ndim != 4 or weights.ndim != 4:
        raise ShapeMismatchError(f"conv2d needs [B,H,W,C] input and [kh,kw,C,F] weights, got {list(x.shape)}, {list(weights.shape)}")
    B, H, W, C = x.shape
    kh, kw, wc, F = weights.shape
    if wc != C:
        raise ShapeMismatchError(f"input has {C} channels, weights expect {wc}")
    if bias.shape != (F,):
        raise ShapeMismatchError(f"bias shape {list(bias.shape)} != [{F}]")
    if kh > H or kw > W:
        raise ShapeMismatchError(f"kernel {kh}x{kw} larger than input {H}x{W}")
    if stride < 1:
        raise InvalidArgumentError("stride must be >= 1")
    OH, OW = (H - kh) // stride + 1, (W - kw) // stride + 1
    wmat = weights.array.reshape(kh * kw * C, F)
    out = np.empty((B, OH, OW, F))
    for sl in _chunks(B, OH * OW * kh * kw * C):
        cols = kernels.im2col(x.array[sl], kh, kw, stride)
        n = cols.shape[0]
        out[sl] = (cols.reshape(n * OH * OW, -1) @ wmat).reshape(n, OH, OW, F)
    out += bias.array
    return Tensor.wrap(out), ConvCache(x.array, weights.array, stride)


def conv2d_backward(cache: ConvCache | None, grad_out: Tensor, need_input_grad: bool = True):
    """Return ``(grad_input, grad_weights, grad_bias)``; ``grad_input`` is None when not requested."""
    if cache is None:
        raise IllegalStateError("conv2d backward called without a forward cache")
    x, w, stride = cache
    B, H, W, C = x.shape
    kh, kw, _, F = w.shape
    OH, OW = (H - kh) // stride + 1, (W - kw) // stride + 1
    if grad_out.shape != (B, OH, OW, F):
        raise ShapeMismatchError(f"grad_out shape {list(grad_out.shape)} != {[B, OH, OW, F]}")
    g = grad_out.array
    wmat = w.reshape(kh * kw * C, F)
    grad_w = np.zeros((kh * kw * C, F))
    grad_x = np.empty((B, H, W, C)) if need_input_grad else None
    for sl in _chunks(B, OH * OW * kh * kw * C):
        cols = kernels.im2col(x[sl], kh, kw, stride)
        n = cols.shape[0]
        gmat = g[sl].reshape(n * OH * OW, F)
        grad_w += cols.reshape(n * OH * OW, -1).T @ gmat
        if need_input_grad:
            dcols = (gmat @ wmat.T).reshape(n, OH, OW, kh, kw, C)
            grad_x[sl] = kernels.col2im(dcols, H, W, stride)
    grad_b = g.reshape(-1, F).sum(axis=0)
    return (
        Tensor.wrap(grad_x) if need_input_grad else None,
        Tensor.wrap(grad_w.reshape(kh, kw, C, F)),
        Tensor.wrap(grad_b),
    )


def maxpool_forward(x: Tensor, pool: int | tuple[int, int] = 2, stride: int = 2) -> tuple[Tensor, PoolCache]:
    ph, pw = (pool, pool) if isinstance(pool, int) else pool
    if x.ndim != 4:
        raise ShapeMismatchError(f"maxpool needs [B,H,W,C] input, got {list(x.shape)}")
    _, H, W, _ = x.shape
    if ph > H or pw > W:
        raise ShapeMismatchError(f"pool {ph}x{pw} larger than input {H}x{W}")
    if min(ph, pw, stride) < 1:
        raise InvalidArgumentError("pool sizes and stride must be >= 1")
    out, argmax = kernels.maxpool_forward(x.array, ph, pw, stride)
    overlapping = stride < ph or stride < pw
    return Tensor.wrap(out), PoolCache(argmax, x.shape, overlapping)


def maxpool_backward(cache: PoolCache | None, grad_out: Tensor) -> Tensor:
    if cache is None:
        raise IllegalStateError("maxpool backward called without a forward cache")
    argmax, in_shape, overlapping = cache
    if grad_out.shape != argmax.shape:
        raise ShapeMismatchError(f"grad_out shape {list(grad_out.shape)} != {list(argmax.shape)}")
    return Tensor.wrap(kernels.maxpool_backward(argmax, grad_out.array, in_shape[1], in_shape[2], overlapping))


def dropout_forward(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None = None):
    """Inverted dropout. Returns ``(output, mask)``; the mask already carries the 1/(1-rate) scale."""
    if not 0.0 <= rate < 1.0:
        raise InvalidArgumentError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, np.ones(x.shape)
    if rng is None:
        raise InvalidArgumentError("training-mode dropout needs an rng")
    keep = rng.random(x.shape) >= rate
    mask = keep / (1.0 - rate)
    return Tensor.wrap(x.array * mask), mask


def dropout_backward(mask: np.ndarray | None, grad_out: Tensor) -> Tensor:
    if mask is None:
        raise IllegalStateError("dropout backward called without a mask")
    if mask.shape != grad_out.shape:
        raise ShapeMismatchError(f"mask shape {list(mask.shape)} != grad shape {list(grad_out.shape)}")
    return Tensor.wrap(grad_out.array * mask)


def dense_forward(x: Tensor, weights: Tensor, bias: Tensor) -> tuple[Tensor, DenseCache]:
    if x.ndim != 2 or weights.ndim != 2 or x.shape[1] != weights.shape[0]:
        raise ShapeMismatchError(f"dense: input {list(x.shape)} incompatible with weights {list(weights.shape)}")
    if bias.shape != (weights.shape[1],):
        raise ShapeMismatchError(f"bias shape {list(bias.shape)} != [{weights.shape[1]}]")
    out = x.array @ weights.array
    out += bias.array
    return Tensor.wrap(out), DenseCache(x.array, weights.array)


def dense_backward(cache: DenseCache | None, grad_out: Tensor, need_input_grad: bool = True):
    if cache is None:
        raise IllegalStateError("dense backward called without a forward cache")
    x, w = cache
    if grad_out.shape != (x.shape[0], w.shape[1]):
        raise ShapeMismatchError(f"grad_out shape {list(grad_out.shape)} != {[x.shape[0], w.shape[1]]}")
    g = grad_out.array
    grad_x = Tensor.wrap(g @ w.T) if need_input_grad else None
    return grad_x, Tensor.wrap(x.T @ g), Tensor.wrap(g.sum(axis=0))


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def activation_forward(kind: str, x: Tensor) -> Tensor:
    if kind == "relu":
        return Tensor.wrap(np.maximum(x.array, 0.0))
    if kind == "sigmoid":
        return Tensor.wrap(sigmoid(x.array))
    raise InvalidArgumentError(f"unknown activation {kind!r}")


def activation_backward(kind: str, x: Tensor, grad_out: Tensor, output: Tensor | None = None) -> Tensor:
    """Gradient w.r.t. the activation input ``x``; ``output`` avoids recomputing sigmoid."""
    if x.shape != grad_out.shape:
        raise ShapeMismatchError(f"activation grad shape {list(grad_out.shape)} != {list(x.shape)}")
    if kind == "relu":
        return Tensor.wrap(grad_out.array * (x.array > 0.0))
    if kind == "sigmoid":
        s = output.array if output is not None else sigmoid(x.array)
        return Tensor.wrap(grad_out.array * s * (1.0 - s))
    raise InvalidArgumentError(f"unknown activation {kind!r}")
