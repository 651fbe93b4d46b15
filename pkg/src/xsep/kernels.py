"""Dense 2-D array kernels: same-size convolution, its exact adjoint,
block-mean downsampling, gradient magnitude, and reductions.

All functions are pure, operate on float64 arrays, and are deterministic:
identical inputs give identical outputs across runs.  Planes are 2-D
arrays (height x width); filters are odd-sized square arrays; code stacks
are 3-D arrays (channels x height x width).
"""

import numpy as np

from .backend import conv2d_raw, frob_sq_raw, inner_raw, l1_raw


def as_plane(values, name="plane"):
    """Validate and return a float64 C-contiguous 2-D array.

    Raises ValueError on wrong rank, empty dimensions, or non-finite
    entries.
    """
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must have positive dimensions, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_filter(taps, name="filter"):
    """Validate and return an odd-sized square float64 filter."""
    arr = np.ascontiguousarray(taps, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{name} must be square, got shape {arr.shape}")
    if arr.shape[0] % 2 == 0:
        raise ValueError(f"{name} size must be odd, got {arr.shape[0]}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


def rot180(taps):
    """180-degree rotation of a filter (transpose of the convolution)."""
    return np.ascontiguousarray(taps[::-1, ::-1])


def conv2d_same(x, taps):
    """Same-size zero-padded convolution of a plane with a filter.

    out(i, j) = sum_{p,q} taps(p, q) * x(i - p + c, j - q + c), with
    center offset c = (f - 1) / 2 and zero contribution outside the
    input grid.  Linear in both arguments; a centered delta filter is
    the identity.
    """
    x = as_plane(x, "input")
    taps = as_filter(taps)
    return conv2d_raw(x, taps)


def adjoint_conv2d(y, taps):
    """Exact adjoint of conv2d_same under the standard inner product.

    Satisfies <conv2d_same(x, a), y> == <x, adjoint_conv2d(y, a)> for all
    x, y.  Equals convolution with the 180-degree-rotated filter.
    """
    y = as_plane(y, "input")
    taps = as_filter(taps)
    return conv2d_raw(y, rot180(taps))


def bilinear_downsample(x, level):
    """Downsample a plane by a factor 2**(level-1) per axis.

    Convention: pixel-center alignment, averaging each aligned
    2**(level-1) x 2**(level-1) neighborhood (partial blocks at the
    bottom/right edges average the pixels that exist).  level=1 returns
    the input unchanged; constants map to constants.
    """
    x = as_plane(x, "input")
    if level < 1 or int(level) != level:
        raise ValueError(f"level must be a positive integer, got {level}")
    m = 2 ** (int(level) - 1)
    h, w = x.shape
    if m > h or m > w:
        raise ValueError(f"downsample factor {m} exceeds input dims {x.shape}")
    if m == 1:
        return x.copy()
    row_idx = np.arange(0, h, m)
    col_idx = np.arange(0, w, m)
    sums = np.add.reduceat(np.add.reduceat(x, row_idx, axis=0), col_idx, axis=1)
    row_counts = np.minimum(row_idx + m, h) - row_idx
    col_counts = np.minimum(col_idx + m, w) - col_idx
    return sums / np.outer(row_counts, col_counts)


def bilinear_downsample_adjoint(g, level, in_shape):
    """Adjoint of bilinear_downsample: spread g(I,J)/count over each block."""
    m = 2 ** (int(level) - 1)
    h, w = in_shape
    if m == 1:
        return np.array(g, dtype=np.float64, copy=True)
    row_idx = np.arange(0, h, m)
    col_idx = np.arange(0, w, m)
    row_counts = np.minimum(row_idx + m, h) - row_idx
    col_counts = np.minimum(col_idx + m, w) - col_idx
    scaled = g / np.outer(row_counts, col_counts)
    out = np.repeat(np.repeat(scaled, row_counts, axis=0), col_counts, axis=1)
    return np.ascontiguousarray(out)


def _forward_diffs(x):
    # Forward differences with replicated last row/column (zero difference
    # at the far edge).
    dx = np.zeros_like(x)
    dy = np.zeros_like(x)
    dx[:, :-1] = x[:, 1:] - x[:, :-1]
    dy[:-1, :] = x[1:, :] - x[:-1, :]
    return dx, dy


def gradient_magnitude(x):
    """Per-pixel gradient magnitude sqrt(dx^2 + dy^2).

    dx, dy are forward differences with the last column/row replicated,
    so a constant plane maps to zeros and a unit ramp has interior
    magnitude 1.
    """
    x = as_plane(x, "input")
    if x.shape[0] < 2 or x.shape[1] < 2:
        raise ValueError(f"input dims must be >= 2, got {x.shape}")
    dx, dy = _forward_diffs(x)
    return np.sqrt(dx * dx + dy * dy)


def gradient_magnitude_vjp(x, g):
    """Vector-Jacobian product of gradient_magnitude at x; zero subgradient
    where the magnitude vanishes."""
    dx, dy = _forward_diffs(x)
    mag = np.sqrt(dx * dx + dy * dy)
    with np.errstate(invalid="ignore", divide="ignore"):
        a = np.where(mag > 0.0, g * dx / mag, 0.0)
        b = np.where(mag > 0.0, g * dy / mag, 0.0)
    out = -a - b
    out[:, 1:] += a[:, :-1]
    out[1:, :] += b[:-1, :]
    return out


def _reduce_over(arr, fn):
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    if arr.ndim == 2:
        return fn(arr)
    if arr.ndim == 3:
        # Channel-ordered accumulation keeps the reduction deterministic.
        total = 0.0
        for k in range(arr.shape[0]):
            total += fn(arr[k])
        return total
    raise ValueError(f"expected a plane or a stack, got shape {arr.shape}")


def frobenius_sq(v):
    """Sum of squared entries (row-major accumulation order)."""
    return _reduce_over(v, frob_sq_raw)


def l1_norm(v):
    """Sum of absolute entries (row-major accumulation order)."""
    return _reduce_over(v, l1_raw)


def inner(u, v):
    """Inner product sum(u * v); operands must share shape."""
    u = np.ascontiguousarray(u, dtype=np.float64)
    v = np.ascontiguousarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"shape mismatch for inner: {u.shape} vs {v.shape}")
    if u.ndim == 2:
        return inner_raw(u, v)
    if u.ndim == 3:
        total = 0.0
        for k in range(u.shape[0]):
            total += inner_raw(u[k], v[k])
        return total
    raise ValueError(f"expected planes or stacks, got shape {u.shape}")
