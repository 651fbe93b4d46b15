"""Full-image <-> patch conversion and image-level utilities.

Patches of size p are cut at stride p - overlap in both axes, row-major;
when a dimension minus p is not divisible by the stride, one final origin
clamped to the image edge keeps every pixel covered.  Reassembly averages
all patch values covering each pixel, so unmodified patches reconstruct
the image exactly.
"""

from dataclasses import dataclass

import numpy as np

from .kernels import as_plane

GRAY_WEIGHTS = (0.299, 0.587, 0.114)  # ITU-R BT.601 luma


@dataclass(frozen=True)
class PatchGrid:
    """Origin lattice of an extraction; sufficient for exact reassembly."""

    patch_size: int
    stride: int
    origins: tuple  # ((row, col), ...) in row-major order
    source_shape: tuple

    @property
    def count(self):
        return len(self.origins)


def _axis_origins(dim, p, stride):
    origins = list(range(0, dim - p + 1, stride))
    if origins[-1] != dim - p:
        origins.append(dim - p)
    return origins


def extract_patches(image, patch_size, overlap):
    """Cut overlapping patches; returns (PatchGrid, patches (N, p, p))."""
    image = as_plane(image, "image")
    h, w = image.shape
    p = int(patch_size)
    if p < 1 or p > min(h, w):
        raise ValueError(f"patch size {p} incompatible with image {image.shape}")
    if not 0 <= overlap < p:
        raise ValueError(f"overlap must be in [0, {p}), got {overlap}")
    stride = p - int(overlap)
    rows = _axis_origins(h, p, stride)
    cols = _axis_origins(w, p, stride)
    origins = tuple((r, c) for r in rows for c in cols)
    patches = np.stack([image[r : r + p, c : c + p] for r, c in origins])
    grid = PatchGrid(patch_size=p, stride=stride, origins=origins, source_shape=(h, w))
    return grid, patches


def reassemble(grid: PatchGrid, patches):
    """Average overlapping patches back into a full plane."""
    patches = np.asarray(patches, dtype=np.float64)
    p = grid.patch_size
    if patches.shape != (grid.count, p, p):
        raise ValueError(
            f"expected {grid.count} patches of size {p}x{p}, got {patches.shape}"
        )
    total = np.zeros(grid.source_shape)
    count = np.zeros(grid.source_shape)
    for (r, c), patch in zip(grid.origins, patches):
        total[r : r + p, c : c + p] += patch
        count[r : r + p, c : c + p] += 1.0
    return total / count


def coverage_counts(grid: PatchGrid):
    """How many patches cover each pixel."""
    count = np.zeros(grid.source_shape)
    p = grid.patch_size
    for r, c in grid.origins:
        count[r : r + p, c : c + p] += 1.0
    return count


def shuffle_order(count, seed):
    """Uniform random permutation of range(count), deterministic per seed."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    return np.random.default_rng(seed).permutation(count)


def grayscale(rgb):
    """BT.601 luminance of an (3, H, W) image, clamped to [0, 1]."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[0] != 3:
        raise ValueError(f"expected (3, H, W), got {rgb.shape}")
    lum = GRAY_WEIGHTS[0] * rgb[0] + GRAY_WEIGHTS[1] * rgb[1] + GRAY_WEIGHTS[2] * rgb[2]
    return np.clip(lum, 0.0, 1.0)


def synth_mix(x1, x2):
    """Pixelwise sum of two planes.  No clipping: mixtures may exceed 1."""
    x1 = as_plane(x1, "x1")
    x2 = as_plane(x2, "x2")
    if x1.shape != x2.shape:
        raise ValueError(f"shape mismatch: {x1.shape} vs {x2.shape}")
    return x1 + x2


@dataclass(frozen=True)
class AffineRecord:
    """Recorded normalization v_out = (v - offset) / scale, invertible."""

    scale: float
    offset: float

    def apply(self, values):
        return (np.asarray(values, dtype=np.float64) - self.offset) / self.scale

    def invert(self, values):
        return np.asarray(values, dtype=np.float64) * self.scale + self.offset


def normalize(image, mode="minmax"):
    """Map intensities to [0, 1]; returns (plane, AffineRecord).

    minmax maps [min, max] -> [0, 1]; a constant image maps to 0.5
    everywhere.  Mode "none" is the identity.
    """
    image = as_plane(image, "image")
    if mode == "none":
        return image.copy(), AffineRecord(scale=1.0, offset=0.0)
    if mode != "minmax":
        raise ValueError(f"unknown normalization mode {mode!r}")
    lo = float(image.min())
    hi = float(image.max())
    if hi == lo:
        record = AffineRecord(scale=1.0, offset=lo - 0.5)
    else:
        record = AffineRecord(scale=hi - lo, offset=lo)
    return record.apply(image), record
