"""Redundant wavelet transform: a union of orthogonal single-level Haar
transforms at distinct circular shifts (cycle spinning).

Each component transform is exactly orthogonal on even-sized planes, so
its inverse equals its adjoint and the union satisfies
(1/I) * sum_i W_i^T W_i = identity.  Odd-sized planes are edge-padded to
even dimensions before the transform and cropped on the inverse; the
roundtrip stays exact but norm preservation holds only for even sizes.
"""

import numpy as np

SHIFTS = {
    1: ((0, 0),),
    2: ((0, 0), (1, 1)),
    4: ((0, 0), (1, 0), (0, 1), (1, 1)),
}


def _haar2(x):
    a = x[0::2, 0::2]
    b = x[0::2, 1::2]
    c = x[1::2, 0::2]
    d = x[1::2, 1::2]
    h, w = x.shape
    out = np.empty_like(x)
    out[: h // 2, : w // 2] = (a + b + c + d) / 2.0
    out[: h // 2, w // 2 :] = (a - b + c - d) / 2.0
    out[h // 2 :, : w // 2] = (a + b - c - d) / 2.0
    out[h // 2 :, w // 2 :] = (a - b - c + d) / 2.0
    return out


def _haar2_inv(z):
    h, w = z.shape
    ll = z[: h // 2, : w // 2]
    lh = z[: h // 2, w // 2 :]
    hl = z[h // 2 :, : w // 2]
    hh = z[h // 2 :, w // 2 :]
    out = np.empty_like(z)
    out[0::2, 0::2] = (ll + lh + hl + hh) / 2.0
    out[0::2, 1::2] = (ll - lh + hl - hh) / 2.0
    out[1::2, 0::2] = (ll + lh - hl - hh) / 2.0
    out[1::2, 1::2] = (ll - lh - hl + hh) / 2.0
    return out


def _pad_even(x):
    h, w = x.shape
    ph, pw = h % 2, w % 2
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, ph), (0, pw)), mode="edge")


def _roll2(x, shift, forward):
    r, c = shift
    if r == 0 and c == 0:
        return x
    if forward:
        r, c = -r, -c
    return np.roll(x, (r, c), axis=(0, 1))


def _fold_even(g, shape):
    # Adjoint of _pad_even: padded rows/columns fold back onto the edge.
    h, w = shape
    out = np.array(g[:h, :w], copy=True)
    if g.shape[0] > h:
        out[h - 1, :] += g[h, :w]
    if g.shape[1] > w:
        out[:, w - 1] += g[:h, w]
    if g.shape[0] > h and g.shape[1] > w:
        out[h - 1, w - 1] += g[h, w]
    return out


class WaveletBank:
    """Union of ``count`` orthogonal Haar transforms at circular shifts."""

    def __init__(self, count=4):
        if count not in SHIFTS:
            raise ValueError(f"transform count must be one of {sorted(SHIFTS)}, got {count}")
        self.count = count
        self.shifts = SHIFTS[count]

    def forward(self, i, x):
        """Coefficients of the i-th transform (i in [0, count))."""
        self._check_index(i)
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] < 2 or x.shape[1] < 2:
            raise ValueError(f"plane dims must be >= 2, got {x.shape}")
        return _haar2(_pad_even(_roll2(x, self.shifts[i], forward=True)))

    def inverse(self, i, z, shape=None):
        """Exact inverse of forward(i, .).

        ``shape`` must be passed when the original plane was odd-sized
        (the coefficients then live on the padded even grid).
        """
        self._check_index(i)
        z = np.asarray(z, dtype=np.float64)
        out = _haar2_inv(z)
        if shape is not None:
            out = out[: shape[0], : shape[1]]
        return _roll2(out, self.shifts[i], forward=False)

    def forward_adjoint(self, i, g, shape):
        """Adjoint of forward(i, .) for an input of the given shape.

        Coincides with the inverse on even shapes; on odd shapes the
        padding adjoint folds edge contributions back.
        """
        self._check_index(i)
        folded = _fold_even(_haar2_inv(np.asarray(g, dtype=np.float64)), shape)
        return _roll2(folded, self.shifts[i], forward=False)

    def roundtrip_shape(self, shape):
        """Coefficient shape for a plane of the given shape."""
        return (shape[0] + shape[0] % 2, shape[1] + shape[1] % 2)

    def _check_index(self, i):
        if not 0 <= i < self.count:
            raise IndexError(f"transform index {i} out of range [0, {self.count})")


def build_bank(count=4):
    """Construct the redundant transform with ``count`` components."""
    return WaveletBank(count)
