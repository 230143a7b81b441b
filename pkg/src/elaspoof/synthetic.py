"""Synthetic clean / spliced image corpus for smoke tests and benchmarks.

Clean images are smooth random scenes that went through a single JPEG
compression. Spliced images take a clean image and paste in a patch cut
from a different scene that was compressed at a lower quality, at an offset
that is generally not aligned to the 8x8 JPEG grid. Both are stored as PNG
so the compression history is preserved exactly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .ela import FAKE, REAL, ManifestRecord, RawImage, jpeg_roundtrip, save_png, write_manifest
from .rng import Stream, make_rng


def random_scene(rng: np.random.Generator, size: int) -> RawImage:
    """Smooth colour gradients, a few soft blobs and mild sensor noise."""
    yy, xx = np.mgrid[0:size, 0:size] / size
    img = np.empty((size, size, 3))
    for c in range(3):
        a, b, base = rng.uniform(-80, 80), rng.uniform(-80, 80), rng.uniform(60, 190)
        img[..., c] = base + a * (xx - 0.5) + b * (yy - 0.5)
    for _ in range(rng.integers(2, 6)):
        cy, cx = rng.uniform(0, 1, size=2)
        r = rng.uniform(0.05, 0.3)
        blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * r * r))
        img += blob[..., None] * rng.uniform(-70, 70, size=3)
    freq = rng.uniform(4, 16)
    img += 12 * np.sin(2 * np.pi * freq * (xx * rng.uniform(-1, 1) + yy * rng.uniform(-1, 1)))[..., None]
    img += rng.normal(0, 3.0, size=img.shape)
    return RawImage(np.clip(np.rint(img), 0, 255).astype(np.uint8))


def clean_image(rng: np.random.Generator, size: int, quality: int = 90) -> RawImage:
    return jpeg_roundtrip(random_scene(rng, size), quality)


def spliced_image(rng: np.random.Generator, size: int, quality: int = 90,
                  patch_quality: int = 60) -> tuple[RawImage, tuple[int, int, int, int]]:
    """A clean image with a low-quality patch pasted in; returns the patch box (top, left, h, w)."""
    base = clean_image(rng, size, quality).pixels.copy()
    donor = jpeg_roundtrip(random_scene(rng, size), patch_quality).pixels
    ph = int(rng.integers(size // 4, size // 2 + 1))
    pw = int(rng.integers(size // 4, size // 2 + 1))
    top, left = int(rng.integers(0, size - ph + 1)), int(rng.integers(0, size - pw + 1))
    sy, sx = int(rng.integers(0, size - ph + 1)), int(rng.integers(0, size - pw + 1))
    base[top:top + ph, left:left + pw] = donor[sy:sy + ph, sx:sx + pw]
    return RawImage(base), (top, left, ph, pw)


def write_corpus(out_dir, n_clean: int = 100, n_spliced: int = 100, size: int = 128,
                 seed: int = 0, quality: int = 90, patch_quality: int = 60) -> Path:
    """Write PNGs plus ``manifest.csv`` (clean = real, spliced = fake); returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = make_rng(seed, Stream.SYNTHETIC)
    records = []
    for i in range(max(n_clean, n_spliced)):
        if i < n_clean:
            name = f"real_{i:04d}.png"
            save_png(clean_image(rng, size, quality), out_dir / name)
            records.append(ManifestRecord(name, REAL))
        if i < n_spliced:
            name = f"fake_{i:04d}.png"
            save_png(spliced_image(rng, size, quality, patch_quality)[0], out_dir / name)
            records.append(ManifestRecord(name, FAKE))
    manifest = out_dir / "manifest.csv"
    write_manifest(records, manifest)
    return manifest
