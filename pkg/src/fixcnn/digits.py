"""Procedural handwritten-style digit corpus.

Offline stand-in for scanned digit databases: each class is a fixed stroke
glyph, and every sample gets a random affine warp (rotation, shear,
anisotropic scale, shift), stroke-width jitter, amplitude jitter and pixel
noise. Rendering is deterministic for a given seed and quantized to 8-bit
levels so that an IDX round trip is exact.
"""
from __future__ import annotations

import numpy as np

from .dataset import Dataset

# Polylines in a unit box, y pointing down. One list of polylines per digit.
_GLYPHS: dict[int, list[list[tuple[float, float]]]] = {
    0: [[(0.50, 0.12), (0.72, 0.22), (0.80, 0.50), (0.72, 0.78), (0.50, 0.88),
         (0.28, 0.78), (0.20, 0.50), (0.28, 0.22), (0.50, 0.12)]],
    1: [[(0.38, 0.28), (0.56, 0.12)], [(0.56, 0.12), (0.56, 0.88)]],
    2: [[(0.24, 0.30), (0.32, 0.15), (0.55, 0.10), (0.74, 0.18), (0.78, 0.34),
         (0.66, 0.52), (0.24, 0.86)], [(0.24, 0.86), (0.80, 0.86)]],
    3: [[(0.25, 0.16), (0.55, 0.10), (0.75, 0.22), (0.68, 0.42), (0.48, 0.48)],
        [(0.48, 0.48), (0.74, 0.56), (0.78, 0.74), (0.58, 0.88), (0.26, 0.82)]],
    4: [[(0.62, 0.10), (0.22, 0.58)], [(0.22, 0.58), (0.82, 0.58)],
        [(0.62, 0.10), (0.62, 0.90)]],
    5: [[(0.76, 0.12), (0.30, 0.12)], [(0.30, 0.12), (0.26, 0.45)],
        [(0.26, 0.45), (0.55, 0.40), (0.76, 0.52), (0.78, 0.72), (0.58, 0.88),
         (0.26, 0.82)]],
    6: [[(0.68, 0.10), (0.40, 0.28), (0.26, 0.55), (0.28, 0.78), (0.50, 0.90),
         (0.70, 0.78), (0.72, 0.60), (0.52, 0.50), (0.30, 0.60)]],
    7: [[(0.22, 0.12), (0.80, 0.12)], [(0.80, 0.12), (0.45, 0.88)],
        [(0.34, 0.50), (0.66, 0.50)]],
    8: [[(0.50, 0.10), (0.68, 0.20), (0.68, 0.36), (0.50, 0.46), (0.32, 0.36),
         (0.32, 0.20), (0.50, 0.10)],
        [(0.50, 0.46), (0.74, 0.58), (0.74, 0.78), (0.50, 0.90), (0.26, 0.78),
         (0.26, 0.58), (0.50, 0.46)]],
    9: [[(0.70, 0.30), (0.52, 0.12), (0.32, 0.22), (0.30, 0.42), (0.48, 0.52),
         (0.70, 0.42), (0.70, 0.30)], [(0.70, 0.30), (0.70, 0.62), (0.52, 0.88)]],
}


def _segments(digit: int) -> np.ndarray:
    """All stroke segments of a glyph as an (s, 2, 2) array of endpoints."""
    segs = []
    for line in _GLYPHS[digit]:
        for a, b in zip(line[:-1], line[1:]):
            segs.append((a, b))
    return np.asarray(segs, dtype=np.float64)


_SEGMENTS = {d: _segments(d) for d in range(10)}


def _render(digit: int, side: int, rng: np.random.Generator, distort: float) -> np.ndarray:
    theta = rng.uniform(-0.20, 0.20) * distort
    shear = rng.uniform(-0.18, 0.18) * distort
    sx, sy = rng.uniform(0.85, 1.12, 2) ** distort
    shift = rng.uniform(-0.06, 0.06, 2) * distort
    thickness = rng.uniform(0.050, 0.085)
    soft = 0.035
    amplitude = rng.uniform(0.72, 1.0)

    c, s = np.cos(theta), np.sin(theta)
    fwd = np.array([[c, -s], [s, c]]) @ np.array([[1.0, shear], [0.0, 1.0]])
    fwd = fwd @ np.diag([sx, sy])
    inv = np.linalg.inv(fwd)

    # pixel centers -> glyph coordinates (inverse warp around the box center)
    ax = (np.arange(side) + 0.5) / side
    px, py = np.meshgrid(ax, ax, indexing="xy")
    pts = np.stack([px.ravel(), py.ravel()], axis=1) - 0.5 - shift
    g = pts @ inv.T + 0.5

    seg = _SEGMENTS[digit]
    a, b = seg[:, 0], seg[:, 1]
    ab = b - a
    denom = np.maximum((ab * ab).sum(axis=1), 1e-12)
    ap = g[:, None, :] - a[None, :, :]
    t = np.clip((ap * ab[None, :, :]).sum(axis=2) / denom[None, :], 0.0, 1.0)
    closest = a[None, :, :] + t[:, :, None] * ab[None, :, :]
    dist = np.sqrt(((g[:, None, :] - closest) ** 2).sum(axis=2)).min(axis=1)

    ink = np.clip((thickness - dist) / soft + 1.0, 0.0, 1.0) * amplitude
    img = ink.reshape(side, side)
    img = img + rng.normal(0.0, 0.03, img.shape)
    img = np.clip(img, 0.0, 1.0)
    return np.round(img * 255.0) / 255.0  # 8-bit levels, IDX-exact


def make_digits(n: int, seed: int, side: int = 28, name: str = "synth",
                distort: float = 1.0) -> Dataset:
    """Deterministic corpus of n labeled digit images."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 10, size=n)
    images = np.empty((n, 1, side, side), dtype=np.float64)
    for i, d in enumerate(labels):
        images[i, 0] = _render(int(d), side, rng, distort)
    return Dataset(name=name, side=side, images=images, labels=labels.astype(np.int64))


def write_matrix_text(dataset: Dataset, path, lo: float = -1.0, hi: float = 1.0) -> None:
    """Store a dataset in the labeled matrix text format with a range header."""
    with open(path, "w") as f:
        f.write(f"range {lo} {hi}\n")
        for img, label in dataset:
            vals = img.ravel() * (hi - lo) + lo
            f.write(str(label) + " " + " ".join(f"{v:.6g}" for v in vals) + "\n")
