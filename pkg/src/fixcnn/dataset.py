"""Digit dataset ingestion: IDX binaries, plain-text matrices, subsetting.

IDX layout (big-endian throughout):
    images  0x00000803, count, rows, cols, then count*rows*cols unsigned bytes
    labels  0x00000801, count, then count unsigned bytes
Pixels are scaled to [0, 1] by dividing by 255.

Matrix text layout: a header line ``range <lo> <hi>`` declaring the pixel
value range, then one image per line as ``<label> <p1> ... <pN>`` with
N = side*side row-major pixels. Values are rescaled linearly from
[lo, hi] to [0, 1]; images smaller than 28x28 are zero-padded centered.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .errors import ConsistencyError, FormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class LabeledImage(NamedTuple):
    pixels: np.ndarray  # (1, side, side) float64 in [0, 1]
    label: int


@dataclass
class Dataset:
    name: str
    side: int
    images: np.ndarray  # (n, 1, side, side) float64 in [0, 1]
    labels: np.ndarray  # (n,) int64 in [0, 9]

    def __post_init__(self):
        n = len(self.labels)
        if self.images.shape != (n, 1, self.side, self.side):
            raise ValueError(f"images shape {self.images.shape} inconsistent with {n} labels")
        if n and (self.labels.min() < 0 or self.labels.max() > 9):
            raise FormatError("labels outside [0, 9]")
        if n and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise ValueError("pixels outside [0, 1]")

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i: int) -> LabeledImage:
        return LabeledImage(self.images[i], int(self.labels[i]))

    def __iter__(self) -> Iterator[LabeledImage]:
        for i in range(len(self)):
            yield self[i]


def _read_exact(f, n: int, path) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise OSError(f"{path}: truncated file, wanted {n} bytes, got {len(buf)}")
    return buf


def load_idx(images_path, labels_path, name: str = "idx") -> Dataset:
    """Parse an IDX image/label file pair into a normalized dataset."""
    with open(images_path, "rb") as f:
        magic, count, rows, cols = struct.unpack(">IIII", _read_exact(f, 16, images_path))
        if magic != IDX_IMAGES_MAGIC:
            raise FormatError(
                f"{images_path}: bad magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}"
            )
        if rows != cols:
            raise FormatError(f"{images_path}: non-square images {rows}x{cols}")
        raw = _read_exact(f, count * rows * cols, images_path)
    with open(labels_path, "rb") as f:
        magic, lcount = struct.unpack(">II", _read_exact(f, 8, labels_path))
        if magic != IDX_LABELS_MAGIC:
            raise FormatError(
                f"{labels_path}: bad magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}"
            )
        labels = np.frombuffer(_read_exact(f, lcount, labels_path), dtype=np.uint8)
    if count != lcount:
        raise ConsistencyError(f"{count} images but {lcount} labels")
    images = np.frombuffer(raw, dtype=np.uint8).reshape(count, 1, rows, cols)
    return Dataset(
        name=name,
        side=rows,
        images=images.astype(np.float64) / 255.0,
        labels=labels.astype(np.int64),
    )


def write_idx(dataset: Dataset, images_path, labels_path) -> None:
    """Inverse of load_idx; pixels are stored as round(p * 255)."""
    n = len(dataset)
    codes = np.clip(np.round(dataset.images * 255.0), 0, 255).astype(np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, dataset.side, dataset.side))
        f.write(codes.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, n))
        f.write(dataset.labels.astype(np.uint8).tobytes())


def _pad_to(img: np.ndarray, target: int) -> np.ndarray:
    side = img.shape[-1]
    lo = (target - side) // 2
    hi = target - side - lo
    return np.pad(img, ((0, 0), (lo, hi), (lo, hi)))


def load_matrix_text(path, side: int, name: str = "matrix", target_side: int = 28) -> Dataset:
    """Parse a labeled pixel-matrix text file (see module docstring)."""
    if side > target_side:
        raise FormatError(f"side {side} larger than target {target_side}")
    with open(path, "r") as f:
        header = f.readline().split()
        if len(header) != 3 or header[0] != "range":
            raise FormatError(f"{path}: line 1: expected 'range <lo> <hi>' header")
        lo, hi = float(header[1]), float(header[2])
        if not hi > lo:
            raise FormatError(f"{path}: line 1: empty range [{lo}, {hi}]")
        images, labels = [], []
        for lineno, line in enumerate(f, start=2):
            if not line.strip():
                continue
            fields = line.split()
            if len(fields) != 1 + side * side:
                raise FormatError(
                    f"{path}: line {lineno}: expected {1 + side * side} fields, got {len(fields)}"
                )
            try:
                label = int(fields[0])
                pixels = np.array([float(v) for v in fields[1:]], dtype=np.float64)
            except ValueError as e:
                raise FormatError(f"{path}: line {lineno}: {e}") from None
            scaled = np.clip((pixels - lo) / (hi - lo), 0.0, 1.0)
            img = scaled.reshape(1, side, side)
            if side != target_side:
                img = _pad_to(img, target_side)
            images.append(img)
            labels.append(label)
    if not images:
        return Dataset(name, target_side, np.zeros((0, 1, target_side, target_side)), np.zeros(0, np.int64))
    return Dataset(name, target_side, np.stack(images), np.array(labels, dtype=np.int64))


def take(dataset: Dataset, n: int, seed: int) -> Dataset:
    """Deterministic pseudo-random subset of n images."""
    if n > len(dataset):
        raise ValueError(f"cannot take {n} of {len(dataset)} images")
    idx = np.random.default_rng(seed).permutation(len(dataset))[:n]
    return Dataset(
        name=f"{dataset.name}[{n}@{seed}]",
        side=dataset.side,
        images=dataset.images[idx].copy(),
        labels=dataset.labels[idx].copy(),
    )
