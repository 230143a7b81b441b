"""Image ingestion, Error Level Analysis and dataset construction."""

from __future__ import annotations

import csv
import io
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    DecodeError,
    InvalidArgumentError,
    InvalidDatasetError,
    ManifestError,
    ProcessingError,
)
from .rng import Stream, make_rng
from .tensor import Tensor
from .training import round_half_up

log = logging.getLogger(__name__)

REAL, FAKE = 0, 1
LABEL_NAMES = {REAL: "real", FAKE: "fake"}
_LABEL_VALUES = {"real": REAL, "fake": FAKE}

DEFAULT_NOISE_THRESHOLD = 12.0


@dataclass(frozen=True)
class RawImage:
    """8-bit RGB image; ``pixels`` is a ``[height, width, 3]`` uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3 or px.shape[0] < 1 or px.shape[1] < 1:
            raise InvalidArgumentError(f"expected [H, W, 3] pixels, got shape {px.shape}")
        object.__setattr__(self, "pixels", np.ascontiguousarray(px, dtype=np.uint8))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def data(self) -> np.ndarray:
        """Flat row-major RGB bytes, length ``3 * H * W``."""
        return self.pixels.reshape(-1)

    def to_pil(self) -> Image.Image:
        return Image.fromarray(self.pixels, "RGB")


Amplification = Union[float, str]


@dataclass(frozen=True)
class ElaConfig:
    jpeg_quality: int = 90
    amplification: Amplification = "auto"
    target_size: int = 128

    def __post_init__(self):
        if not 1 <= int(self.jpeg_quality) <= 100:
            raise InvalidArgumentError(f"jpeg quality must be in 1..100, got {self.jpeg_quality}")
        if self.amplification != "auto":
            try:
                amp = float(self.amplification)
            except (TypeError, ValueError):
                raise InvalidArgumentError(f"amplification must be 'auto' or a number, got {self.amplification!r}") from None
            if not amp > 0:
                raise InvalidArgumentError(f"amplification must be > 0, got {amp}")
            object.__setattr__(self, "amplification", amp)
        if self.target_size < 1:
            raise InvalidArgumentError(f"target size must be >= 1, got {self.target_size}")

    def to_dict(self) -> dict:
        return {"jpeg_quality": self.jpeg_quality, "amplification": self.amplification, "target_size": self.target_size}

    @classmethod
    def from_dict(cls, d: dict) -> "ElaConfig":
        return cls(**d)


@dataclass(frozen=True)
class Sample:
    features: Tensor
    label: int
    path: str = ""


@dataclass(frozen=True)
class ManifestRecord:
    path: str
    label: int


@dataclass
class DatasetManifest:
    records: list[ManifestRecord] = field(default_factory=list)
    # Directory relative paths are resolved against.
    root: Path = field(default_factory=Path)

    def __len__(self):
        return len(self.records)

    def resolve(self, record: ManifestRecord) -> Path:
        p = Path(record.path)
        return p if p.is_absolute() else self.root / p


# ---------------------------------------------------------------------------
# images


def decode_image(path) -> RawImage:
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("I;16", "I;16B", "I;16L", "I"):
                arr = np.asarray(im, dtype=np.float64)
                im = Image.fromarray(np.clip(arr / 257.0, 0, 255).astype(np.uint8), "L")
            rgb = im.convert("RGB")
    except FileNotFoundError:
        raise DecodeError(path, "no such file") from None
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise DecodeError(path, f"cannot decode image ({exc})") from None
    return RawImage(np.asarray(rgb))


def jpeg_roundtrip(img: RawImage, quality: int) -> RawImage:
    """Encode as JPEG at ``quality`` and decode again."""
    buf = io.BytesIO()
    try:
        img.to_pil().save(buf, format="JPEG", quality=int(quality))
        buf.seek(0)
        with Image.open(buf) as im:
            return RawImage(np.asarray(im.convert("RGB")))
    except (OSError, ValueError) as exc:
        raise ProcessingError(f"jpeg re-encode failed: {exc}") from None


def ela_transform(img: RawImage, cfg: ElaConfig = ElaConfig()) -> RawImage:
    """Amplified absolute difference between ``img`` and its JPEG re-encoding."""
    resaved = jpeg_roundtrip(img, cfg.jpeg_quality)
    diff = np.abs(img.pixels.astype(np.int16) - resaved.pixels.astype(np.int16)).astype(np.float64)
    if cfg.amplification == "auto":
        peak = diff.max()
        scale = 255.0 / peak if peak > 0 else 0.0
    else:
        scale = float(cfg.amplification)
    return RawImage(np.clip(np.rint(diff * scale), 0, 255).astype(np.uint8))


def grayscale(img: RawImage) -> np.ndarray:
    return img.pixels.astype(np.float64) @ np.array([0.299, 0.587, 0.114])


def median3x3(gray: np.ndarray) -> np.ndarray:
    """3x3 median with edge-replicated borders."""
    padded = np.pad(gray, 1, mode="edge")
    windows = np.lib.stride_tricks.sliding_window_view(padded, (3, 3))
    return np.median(windows.reshape(gray.shape + (9,)), axis=-1)


def noise_score(img: RawImage) -> float:
    """Mean absolute deviation of the grayscale image from its 3x3 median."""
    gray = grayscale(img)
    return float(np.mean(np.abs(gray - median3x3(gray))))


def resize_normalize(img: RawImage, target: int) -> Tensor:
    """Bilinear resize to ``target x target`` and scale into [0, 1]."""
    pixels = img.pixels
    if img.height != target or img.width != target:
        pixels = np.asarray(img.to_pil().resize((target, target), Image.BILINEAR))
    return Tensor.wrap(np.clip(pixels.astype(np.float64) / 255.0, 0.0, 1.0))


def save_png(img: RawImage, path) -> None:
    img.to_pil().save(path, format="PNG")


def preprocess(img: RawImage, cfg: ElaConfig) -> Tensor:
    return resize_normalize(ela_transform(img, cfg), cfg.target_size)


# ---------------------------------------------------------------------------
# manifests


def parse_label(text: str) -> int:
    try:
        return _LABEL_VALUES[text.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown label {text!r} (expected real or fake)") from None


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ManifestError(f"cannot read {path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["path", "label"]:
            raise ManifestError("missing header 'path,label'", line=1)
        records = []
        seen: dict[str, int] = {}
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ManifestError(f"expected 2 fields, got {len(row)}", line=line)
            p = row[0].strip()
            if not p:
                raise ManifestError("empty path", line=line)
            try:
                label = parse_label(row[1])
            except ValueError as exc:
                raise ManifestError(str(exc), line=line) from None
            if p in seen:
                raise ManifestError(f"duplicate path {p!r} (first on line {seen[p]})", line=line)
            seen[p] = line
            records.append(ManifestRecord(p, label))
    return DatasetManifest(records, path.parent)


def write_manifest(records: Sequence[ManifestRecord], path, source_root: Path | None = None) -> None:
    """Write a ``path,label`` CSV; relative paths are rewritten relative to the new file."""
    path = Path(path)
    out_dir = path.parent.resolve()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path", "label"])
        for r in records:
            p = Path(r.path)
            if source_root is not None and not p.is_absolute():
                p = Path(os.path.relpath((source_root / p).resolve(), out_dir))
            w.writerow([p.as_posix(), LABEL_NAMES[r.label]])


# ---------------------------------------------------------------------------
# splitting and dataset construction


def stratified_split(labels: Sequence[int], split: float, seed: int, shuffle: bool = True):
    """Indices ``(train, test)`` with ``round(split * n_c)`` training items per class.

    Class membership of the training part is drawn from the DATASET_SPLIT
    stream; the training order is then shuffled with the SHUFFLE stream.
    """
    if not 0.0 < split <= 1.0:
        raise InvalidArgumentError(f"split must be in (0, 1], got {split}")
    labels = np.asarray(labels)
    for c in (REAL, FAKE):
        if not (labels == c).any():
            raise InvalidDatasetError(f"no {LABEL_NAMES[c]} samples")
    split_rng = make_rng(seed, Stream.DATASET_SPLIT)
    train, test = [], []
    for c in (REAL, FAKE):
        idx = np.flatnonzero(labels == c)
        perm = split_rng.permutation(len(idx))
        k = round_half_up(split * len(idx))
        train.extend(idx[np.sort(perm[:k])].tolist())
        test.extend(idx[np.sort(perm[k:])].tolist())
    train = np.array(sorted(train), dtype=np.int64)
    test = np.array(sorted(test), dtype=np.int64)
    if shuffle:
        train = train[make_rng(seed, Stream.SHUFFLE).permutation(len(train))]
    return train, test


def load_samples(manifest: DatasetManifest, cfg: ElaConfig) -> tuple[list[Sample], list[str]]:
    """Decode and preprocess every record; undecodable files are skipped and returned."""
    samples, skipped = [], []
    for rec in manifest.records:
        try:
            img = decode_image(manifest.resolve(rec))
        except DecodeError as exc:
            log.warning("skipping %s", exc)
            skipped.append(rec.path)
            continue
        samples.append(Sample(preprocess(img, cfg), rec.label, rec.path))
    return samples, skipped


def build_dataset(manifest: DatasetManifest, ela_cfg: ElaConfig = ElaConfig(), split: float = 0.7,
                  seed: int = 0, shuffle: bool = True) -> tuple[list[Sample], list[Sample]]:
    """Preprocess the manifest and split it per class into (train, test)."""
    if len(manifest) == 0:
        raise InvalidDatasetError("manifest is empty")
    samples, skipped = load_samples(manifest, ela_cfg)
    if skipped:
        log.warning("%d of %d images could not be decoded", len(skipped), len(manifest))
    train, test = stratified_split([s.label for s in samples], split, seed, shuffle)
    return [samples[i] for i in train], [samples[i] for i in test]
