"""Pure-numpy kernel implementations.

Fallback used when the compiled extension is unavailable.  Semantics are
identical to ``xsep._kernels``: convolutions accumulate filter taps in
row-major order into per-pixel accumulators, and reductions accumulate in
strict row-major element order, so both backends agree bit-for-bit.
"""

import numpy as np


def _conv_acc(x, taps, out):
    # out += conv(x, taps); per-pixel accumulation in row-major tap order.
    h, w = x.shape
    f = taps.shape[0]
    c = (f - 1) // 2
    for p in range(f):
        di = c - p  # x row offset relative to the output row
        for q in range(f):
            dj = c - q
            i0, i1 = max(0, -di), min(h, h - di)
            j0, j1 = max(0, -dj), min(w, w - dj)
            if i0 >= i1 or j0 >= j1:
                continue
            out[i0:i1, j0:j1] += taps[p, q] * x[i0 + di:i1 + di, j0 + dj:j1 + dj]


def conv2d(x, taps):
    """Same-size zero-padded 2-D convolution.

    out(i, j) = sum_{p,q} taps(p, q) * x(i - p + c, j - q + c) with
    c = (f - 1) // 2 and zero contribution outside the grid.
    """
    out = np.zeros(x.shape, dtype=np.float64)
    _conv_acc(x, taps, out)
    return out


def filter_grad(x, g, f):
    """Gradient of conv2d(x, taps) with respect to taps, given output grad g.

    fg(p, q) = sum_{i,j} g(i, j) * x(i - p + c, j - q + c).
    """
    h, w = x.shape
    c = (f - 1) // 2
    fg = np.empty((f, f), dtype=np.float64)
    for p in range(f):
        di = c - p
        for q in range(f):
            dj = c - q
            i0, i1 = max(0, -di), min(h, h - di)
            j0, j1 = max(0, -dj), min(w, w - dj)
            if i0 >= i1 or j0 >= j1:
                fg[p, q] = 0.0
                continue
            fg[p, q] = np.sum(g[i0:i1, j0:j1] * x[i0 + di:i1 + di, j0 + dj:j1 + dj])
    return fg


def conv_bank(x, w):
    """out[k] = conv2d(x, w[k]) for every filter in the bank."""
    return np.stack([conv2d(x, w[k]) for k in range(w.shape[0])])


def stack_conv_sum(z, w):
    """sum_k conv2d(z[k], w[k]); channel-ordered per-tap accumulation into
    one output, all-zero channels skipped (exact: they contribute exact
    zeros)."""
    out = np.zeros(z.shape[1:], dtype=np.float64)
    for k in range(z.shape[0]):
        if not z[k].any():
            continue
        _conv_acc(z[k], w[k], out)
    return out


def filter_grad_bank_stack(z, g, f):
    """fg[k] = filter_grad(z[k], g); zero channels give zero blocks."""
    fg = np.zeros((z.shape[0], f, f), dtype=np.float64)
    for k in range(z.shape[0]):
        if z[k].any():
            fg[k] = filter_grad(z[k], g, f)
    return fg


def filter_grad_bank_shared(x, g, f):
    """fg[k] = filter_grad(x, g[k]) for a shared input plane."""
    return np.stack([filter_grad(x, g[k], f) for k in range(g.shape[0])])


def _seq_sum(v):
    # np.add.accumulate is a strict left-to-right scan, unlike np.sum's
    # pairwise reduction, which keeps the summation order row-major.
    flat = np.ascontiguousarray(v).ravel()
    if flat.size == 0:
        return 0.0
    return float(np.add.accumulate(flat)[-1])


def frob_sq(v):
    """Sum of squared entries, row-major accumulation order."""
    return _seq_sum(np.multiply(v, v))


def l1(v):
    """Sum of absolute entries, row-major accumulation order."""
    return _seq_sum(np.abs(v))


def inner(u, v):
    """Inner product sum(u * v), row-major accumulation order."""
    return _seq_sum(np.multiply(u, v))
