"""Sequential network assembled from a :class:`ModelConfig`."""

from __future__ import annotations

import numpy as np

from . import layers as L
from .errors import IllegalStateError, InvalidArgumentError, ShapeMismatchError
from .rng import Stream, make_rng
from .tensor import Tensor


def init_params(config: L.ModelConfig, seed: int = 0) -> dict[str, Tensor]:
    """Glorot-uniform weights and zero biases, drawn from the INIT stream in layer order."""
    rng = make_rng(seed, Stream.INIT)
    params = {}
    for name, shape in L.param_shapes(config).items():
        if name.endswith(".weight"):
            if len(shape) == 4:
                kh, kw, c, f = shape
                fan_in, fan_out = kh * kw * c, kh * kw * f
            else:
                fan_in, fan_out = shape
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            params[name] = Tensor.wrap(rng.uniform(-limit, limit, size=shape))
        else:
            params[name] = Tensor.wrap(np.zeros(shape))
    return params


class Network:
    """Forward/backward over a layer cascade, holding per-layer caches between passes.

    ``params`` is shared, not copied: the optimizer mutates it in place.
    """

    def __init__(self, config: L.ModelConfig, params: dict[str, Tensor]):
        expected = L.param_shapes(config)
        if set(params) != set(expected):
            raise InvalidArgumentError(
                f"parameter names {sorted(params)} do not match config {sorted(expected)}"
            )
        for name, shape in expected.items():
            if params[name].shape != shape:
                raise ShapeMismatchError(f"{name}: shape {list(params[name].shape)} != {list(shape)}")
        self.config = config
        self.params = params
        self._caches: list | None = None
        self.dropout_masks: dict[int, np.ndarray] = {}

    def forward(self, x: Tensor, training: bool = False, rng: np.random.Generator | None = None,
                masks: dict[int, np.ndarray] | None = None) -> Tensor:
        """Return P(fake) of shape ``[B, 1]``.

        ``masks`` replays previously drawn dropout masks (keyed by layer index)
        instead of sampling new ones.
        """
        if x.ndim != 4 or x.shape[1:] != self.config.input_shape:
            raise InvalidArgumentError(
                f"input shape {list(x.shape)} does not match model input {list(self.config.input_shape)}"
            )
        caches = []
        self.dropout_masks = {}
        for i, spec in enumerate(self.config.layers):
            if isinstance(spec, L.Conv2D):
                x, cache = L.conv2d_forward(x, self.params[f"{i}.weight"], self.params[f"{i}.bias"], spec.stride)
            elif isinstance(spec, L.MaxPool2D):
                x, cache = L.maxpool_forward(x, (spec.pool_h, spec.pool_w), spec.stride)
            elif isinstance(spec, L.Dropout):
                if training and masks is not None and i in masks:
                    cache = masks[i]
                    x = Tensor.wrap(x.array * cache)
                else:
                    x, cache = L.dropout_forward(x, spec.rate, training, rng)
                self.dropout_masks[i] = cache
            elif isinstance(spec, L.Flatten):
                cache = x.shape
                x = Tensor.wrap(x.array.reshape(x.shape[0], -1))
            elif isinstance(spec, L.Dense):
                x, cache = L.dense_forward(x, self.params[f"{i}.weight"], self.params[f"{i}.bias"])
            else:
                out = L.activation_forward(spec.kind, x)
                cache = (x, out)
                x = out
            caches.append(cache)
        self._caches = caches
        return x

    def backward(self, grad_out: Tensor) -> dict[str, Tensor]:
        """Gradients of the loss w.r.t. every parameter, given dLoss/dOutput."""
        if self._caches is None:
            raise IllegalStateError("backward called before forward")
        grads: dict[str, Tensor] = {}
        g = grad_out
        first_param_layer = min(
            (i for i, s in enumerate(self.config.layers) if isinstance(s, (L.Conv2D, L.Dense))), default=0
        )
        for i in range(len(self.config.layers) - 1, -1, -1):
            spec = self.config.layers[i]
            cache = self._caches[i]
            need_input = i > first_param_layer
            if isinstance(spec, L.Conv2D):
                g, grads[f"{i}.weight"], grads[f"{i}.bias"] = L.conv2d_backward(cache, g, need_input)
            elif isinstance(spec, L.MaxPool2D):
                g = L.maxpool_backward(cache, g)
            elif isinstance(spec, L.Dropout):
                g = L.dropout_backward(cache, g)
            elif isinstance(spec, L.Flatten):
                g = Tensor.wrap(g.array.reshape(cache))
            elif isinstance(spec, L.Dense):
                g, grads[f"{i}.weight"], grads[f"{i}.bias"] = L.dense_backward(cache, g, need_input)
            else:
                x, out = cache
                g = L.activation_backward(spec.kind, x, g, out)
            if g is None:
                break
        self._caches = None
        return {name: grads[name] for name in self.params}

    def predict(self, x: Tensor) -> np.ndarray:
        """Inference-mode P(fake) per sample as a flat array."""
        out = self.forward(x, training=False)
        self._caches = None
        return out.array[:, 0].copy()
