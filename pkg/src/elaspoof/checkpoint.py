"""Versioned binary checkpoints.

Layout (all integers little-endian)::

    b"ELASPOOF"  u32 version
    u32 len + model config (canonical JSON, UTF-8)
    u32 len + training block {"train": ..., "ela": ...} (canonical JSON, UTF-8)
    u32 count + parameter records
    u8 has_adam  [u64 step, u32 count + moment records]

A record is ``u32 len + name, u32 rank, u64 dims[rank], f64 payload``.
Moment records are named ``m/<param>`` and ``v/<param>``.
"""

from __future__ import annotations

import io
import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ela import ElaConfig
from .errors import CorruptCheckpointError, InvalidConfigError, UnsupportedVersionError
from .layers import ModelConfig, param_shapes
from .tensor import Tensor
from .training import Adam, AdamState, TrainConfig

MAGIC = b"ELASPOOF"
VERSION = 1


@dataclass
class Checkpoint:
    model_config: ModelConfig
    params: dict[str, Tensor]
    train_config: TrainConfig | None = None
    ela_config: ElaConfig | None = None
    adam: Adam | None = None
    version: int = VERSION


def _canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _write_record(out, name: str, arr: np.ndarray):
    raw = name.encode("utf-8")
    out.write(struct.pack("<I", len(raw)))
    out.write(raw)
    out.write(struct.pack("<I", arr.ndim))
    out.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    out.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def to_bytes(ckpt: Checkpoint) -> bytes:
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<I", ckpt.version))
    for block in (
        _canonical(ckpt.model_config.to_dict()),
        _canonical({
            "train": ckpt.train_config.to_dict() if ckpt.train_config else None,
            "ela": ckpt.ela_config.to_dict() if ckpt.ela_config else None,
        }),
    ):
        out.write(struct.pack("<I", len(block)))
        out.write(block)
    shapes = param_shapes(ckpt.model_config)
    for name, shape in shapes.items():
        if name not in ckpt.params or ckpt.params[name].shape != shape:
            raise InvalidConfigError(f"parameter {name} does not match the model config {list(shape)}")
    names = list(shapes)
    out.write(struct.pack("<I", len(names)))
    for name in names:
        _write_record(out, name, ckpt.params[name].array)
    if ckpt.adam is not None and ckpt.adam.states:
        out.write(b"\x01")
        out.write(struct.pack("<Q", ckpt.adam.t))
        out.write(struct.pack("<I", 2 * len(names)))
        for name in names:
            _write_record(out, f"m/{name}", ckpt.adam.states[name].m.array)
            _write_record(out, f"v/{name}", ckpt.adam.states[name].v.array)
    else:
        out.write(b"\x00")
    return out.getvalue()


def checkpoint_save(path, ckpt: Checkpoint) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(to_bytes(ckpt))
    os.replace(tmp, path)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.buf):
            raise CorruptCheckpointError(f"truncated at byte {self.pos} (wanted {n} more)")
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def record(self) -> tuple[str, np.ndarray]:
        (n,) = self.unpack("<I")
        try:
            name = self.take(n).decode("utf-8")
        except UnicodeDecodeError:
            raise CorruptCheckpointError("parameter name is not UTF-8") from None
        (rank,) = self.unpack("<I")
        if not 1 <= rank <= 8:
            raise CorruptCheckpointError(f"{name}: implausible rank {rank}")
        dims = self.unpack(f"<{rank}Q")
        count = int(np.prod(dims, dtype=np.uint64)) if all(d > 0 for d in dims) else 0
        if count == 0:
            raise CorruptCheckpointError(f"{name}: zero-sized dimension in {list(dims)}")
        arr = np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64).reshape(dims)
        return name, arr

    def block(self) -> dict:
        (n,) = self.unpack("<I")
        try:
            return json.loads(self.take(n).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CorruptCheckpointError(f"config block unreadable: {exc}") from None


def from_bytes(buf: bytes) -> Checkpoint:
    r = _Reader(buf)
    if r.take(len(MAGIC)) != MAGIC:
        raise CorruptCheckpointError("bad magic; not an elaspoof checkpoint")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise UnsupportedVersionError(f"checkpoint version {version} not supported (expected {VERSION})")
    try:
        config = ModelConfig.from_dict(r.block())
    except InvalidConfigError as exc:
        raise CorruptCheckpointError(str(exc)) from None
    training = r.block()
    try:
        train_cfg = TrainConfig.from_dict(training["train"]) if training.get("train") else None
        ela_cfg = ElaConfig.from_dict(training["ela"]) if training.get("ela") else None
    except (TypeError, ValueError, AttributeError) as exc:
        raise CorruptCheckpointError(f"training block invalid: {exc}") from None

    expected = param_shapes(config)
    (n,) = r.unpack("<I")
    if n != len(expected):
        raise CorruptCheckpointError(f"{n} parameter records, config needs {len(expected)}")
    params = {}
    for _ in range(n):
        name, arr = r.record()
        if expected.get(name) != arr.shape:
            raise CorruptCheckpointError(f"unexpected parameter {name} with shape {list(arr.shape)}")
        params[name] = Tensor.wrap(arr)
    if set(params) != set(expected):
        raise CorruptCheckpointError("duplicate parameter records")

    adam = None
    (flag,) = r.unpack("<B")
    if flag == 1:
        (t,) = r.unpack("<Q")
        (n,) = r.unpack("<I")
        moments = dict(r.record() for _ in range(n))
        states = {}
        for name, shape in expected.items():
            m, v = moments.get(f"m/{name}"), moments.get(f"v/{name}")
            if m is None or v is None or m.shape != shape or v.shape != shape:
                raise CorruptCheckpointError(f"adam moments missing or misshapen for {name}")
            states[name] = AdamState(Tensor.wrap(m), Tensor.wrap(v), int(t))
        adam = Adam(states)
    elif flag != 0:
        raise CorruptCheckpointError(f"bad optimizer flag {flag}")
    if r.pos != len(buf):
        raise CorruptCheckpointError(f"{len(buf) - r.pos} trailing bytes")
    return Checkpoint(config, params, train_cfg, ela_cfg, adam, version)


def checkpoint_load(path) -> Checkpoint:
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise CorruptCheckpointError(f"cannot read {path}: {exc.strerror}") from None
    return from_bytes(buf)
