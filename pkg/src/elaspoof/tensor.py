"""Dense float64 tensors with an explicit shape.

A :class:`Tensor` is a thin wrapper over a C-contiguous ``float64`` numpy
array. There is no broadcasting anywhere in this module: every binary
operation requires identical shapes.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import InvalidShapeError, ShapeMismatchError


def _check_shape(shape: Iterable[int]) -> tuple[int, ...]:
    shape = tuple(int(d) for d in shape)
    if not shape:
        raise InvalidShapeError("shape must have at least one dimension")
    if any(d < 1 for d in shape):
        raise InvalidShapeError(f"dimensions must be >= 1, got {list(shape)}")
    return shape


class Tensor:
    """Row-major float64 array with shape ``shape`` and flat ``data``."""

    __slots__ = ("_array",)

    def __init__(self, values, shape: Sequence[int] | None = None):
        arr = np.array(values, dtype=np.float64, order="C", copy=True)
        if shape is not None:
            shape = _check_shape(shape)
            if arr.size != math.prod(shape):
                raise ShapeMismatchError(
                    f"{arr.size} values cannot fill shape {list(shape)}"
                )
            arr = arr.reshape(shape)
        else:
            _check_shape(arr.shape)
        self._array = arr

    @classmethod
    def wrap(cls, arr: np.ndarray) -> "Tensor":
        """Adopt ``arr`` without copying when it is already float64/C-order."""
        t = cls.__new__(cls)
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        _check_shape(arr.shape)
        t._array = arr
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self._array.shape

    @property
    def data(self) -> np.ndarray:
        """Flat row-major view; ``len(data) == prod(shape)``."""
        return self._array.reshape(-1)

    @property
    def array(self) -> np.ndarray:
        return self._array

    @property
    def ndim(self) -> int:
        return self._array.ndim

    @property
    def size(self) -> int:
        return self._array.size

    def copy(self) -> "Tensor":
        return Tensor.wrap(self._array.copy())

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and not isinstance(shape[0], int):
            shape = shape[0]
        return tensor_reshape(self, shape)

    def tolist(self):
        return self._array.tolist()

    def all_finite(self) -> bool:
        return bool(np.isfinite(self._array).all())

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return tensor_matmul(self, other)

    def __add__(self, other: "Tensor") -> "Tensor":
        return tensor_zip(self, other, np.add)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return tensor_zip(self, other, np.subtract)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return tensor_zip(self, other, np.multiply)

    def __len__(self) -> int:
        return self._array.shape[0]

    def __repr__(self) -> str:
        return f"Tensor(shape={list(self.shape)}, data={self._array.tolist()!r})"


def tensor_create(shape: Sequence[int], fill: float = 0.0) -> Tensor:
    shape = _check_shape(shape)
    return Tensor.wrap(np.full(shape, float(fill), dtype=np.float64))


def tensor_reshape(t: Tensor, new_shape: Sequence[int]) -> Tensor:
    new_shape = _check_shape(new_shape)
    if math.prod(new_shape) != t.size:
        raise ShapeMismatchError(
            f"cannot reshape {list(t.shape)} ({t.size} elements) to {list(new_shape)}"
        )
    return Tensor.wrap(t.array.reshape(new_shape))


def tensor_matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeMismatchError(f"matmul needs rank-2 operands, got {list(a.shape)} and {list(b.shape)}")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"inner dimensions differ: {list(a.shape)} @ {list(b.shape)}")
    return Tensor.wrap(a.array @ b.array)


def tensor_map(t: Tensor, f: Callable[[float], float]) -> Tensor:
    """Apply a scalar function element-wise."""
    out = np.fromiter((f(x) for x in t.data), dtype=np.float64, count=t.size)
    return Tensor.wrap(out.reshape(t.shape))


def tensor_zip(a: Tensor, b: Tensor, f: Callable[[float, float], float]) -> Tensor:
    """Combine two same-shaped tensors element-wise.

    ``f`` may be a numpy ufunc (applied vectorised) or any binary scalar
    callable.
    """
    if a.shape != b.shape:
        raise ShapeMismatchError(f"zip needs identical shapes, got {list(a.shape)} and {list(b.shape)}")
    if isinstance(f, np.ufunc):
        return Tensor.wrap(f(a.array, b.array))
    out = np.fromiter((f(x, y) for x, y in zip(a.data, b.data)), dtype=np.float64, count=a.size)
    return Tensor.wrap(out.reshape(a.shape))
