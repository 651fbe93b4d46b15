# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel core: same-size 2-D convolution, channel-stacked
variants, filter gradients, and row-major reductions.

Semantics match xsep._kernels_np exactly (same tap accumulation order per
output element, same element order in reductions), so results are
bit-identical across backends.  Stacked sums skip all-zero channels; this
is exact since a zero channel contributes exact zeros.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef void _conv_acc(double[:, ::1] x, double[:, ::1] taps, double[:, ::1] out) noexcept nogil:
    # out += conv(x, taps); per-pixel accumulation in row-major tap order.
    cdef Py_ssize_t h = x.shape[0]
    cdef Py_ssize_t w = x.shape[1]
    cdef Py_ssize_t f = taps.shape[0]
    cdef Py_ssize_t c = (f - 1) // 2
    cdef Py_ssize_t p, q, i, j, i0, i1, j0, j1, di, dj
    cdef double tap
    for p in range(f):
        di = c - p
        for q in range(f):
            dj = c - q
            tap = taps[p, q]
            i0 = 0 if di >= 0 else -di
            i1 = h if di <= 0 else h - di
            j0 = 0 if dj >= 0 else -dj
            j1 = w if dj <= 0 else w - dj
            for i in range(i0, i1):
                for j in range(j0, j1):
                    out[i, j] += tap * x[i + di, j + dj]


cdef void _filter_grad_into(double[:, ::1] x, double[:, ::1] g, double[:, ::1] fg) noexcept nogil:
    # fg[p, q] = sum_ij g(i, j) * x(i - p + c, j - q + c); four-lane
    # accumulation (fixed association, deterministic) so it vectorizes.
    cdef Py_ssize_t h = x.shape[0]
    cdef Py_ssize_t w = x.shape[1]
    cdef Py_ssize_t f = fg.shape[0]
    cdef Py_ssize_t c = (f - 1) // 2
    cdef Py_ssize_t p, q, i, j, i0, i1, j0, j1, di, dj, n, jj
    cdef double a0, a1, a2, a3
    for p in range(f):
        di = c - p
        for q in range(f):
            dj = c - q
            i0 = 0 if di >= 0 else -di
            i1 = h if di <= 0 else h - di
            j0 = 0 if dj >= 0 else -dj
            j1 = w if dj <= 0 else w - dj
            a0 = a1 = a2 = a3 = 0.0
            n = j1 - j0
            for i in range(i0, i1):
                for j in range(j0, j0 + 4 * (n // 4), 4):
                    a0 += g[i, j] * x[i + di, j + dj]
                    a1 += g[i, j + 1] * x[i + di, j + 1 + dj]
                    a2 += g[i, j + 2] * x[i + di, j + 2 + dj]
                    a3 += g[i, j + 3] * x[i + di, j + 3 + dj]
                for jj in range(j0 + 4 * (n // 4), j1):
                    a0 += g[i, jj] * x[i + di, jj + dj]
            fg[p, q] = (a0 + a1) + (a2 + a3)


cdef bint _all_zero(double[:, ::1] z) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(z.shape[0]):
        for j in range(z.shape[1]):
            if z[i, j] != 0.0:
                return False
    return True


def conv2d(double[:, ::1] x, double[:, ::1] taps):
    cdef cnp.ndarray[double, ndim=2] out = np.zeros((x.shape[0], x.shape[1]), dtype=np.float64)
    cdef double[:, ::1] mv = out
    _conv_acc(x, taps, mv)
    return out


def filter_grad(double[:, ::1] x, double[:, ::1] g, Py_ssize_t f):
    cdef cnp.ndarray[double, ndim=2] fg = np.zeros((f, f), dtype=np.float64)
    cdef double[:, ::1] mv = fg
    _filter_grad_into(x, g, mv)
    return fg


def conv_bank(double[:, ::1] x, double[:, :, ::1] w):
    """out[k] = conv2d(x, w[k]) for every filter in the bank."""
    cdef Py_ssize_t k
    cdef cnp.ndarray[double, ndim=3] out = np.zeros(
        (w.shape[0], x.shape[0], x.shape[1]), dtype=np.float64
    )
    cdef double[:, :, ::1] mv = out
    for k in range(w.shape[0]):
        _conv_acc(x, w[k], mv[k])
    return out


def stack_conv_sum(double[:, :, ::1] z, double[:, :, ::1] w):
    """sum_k conv2d(z[k], w[k]); channel-ordered accumulation, all-zero
    channels skipped."""
    cdef Py_ssize_t k
    cdef cnp.ndarray[double, ndim=2] out = np.zeros((z.shape[1], z.shape[2]), dtype=np.float64)
    cdef double[:, ::1] mv = out
    for k in range(z.shape[0]):
        if _all_zero(z[k]):
            continue
        _conv_acc(z[k], w[k], mv)
    return out


def filter_grad_bank_stack(double[:, :, ::1] z, double[:, ::1] g, Py_ssize_t f):
    """fg[k] = filter_grad(z[k], g); zero channels give zero blocks."""
    cdef Py_ssize_t k
    cdef cnp.ndarray[double, ndim=3] fg = np.zeros((z.shape[0], f, f), dtype=np.float64)
    cdef double[:, :, ::1] mv = fg
    for k in range(z.shape[0]):
        if _all_zero(z[k]):
            continue
        _filter_grad_into(z[k], g, mv[k])
    return fg


def filter_grad_bank_shared(double[:, ::1] x, double[:, :, ::1] g, Py_ssize_t f):
    """fg[k] = filter_grad(x, g[k]) for a shared input plane."""
    cdef Py_ssize_t k
    cdef cnp.ndarray[double, ndim=3] fg = np.zeros((g.shape[0], f, f), dtype=np.float64)
    cdef double[:, :, ::1] mv = fg
    for k in range(g.shape[0]):
        _filter_grad_into(x, g[k], mv[k])
    return fg


def frob_sq(double[:, ::1] v):
    cdef Py_ssize_t i, j
    cdef double acc = 0.0
    for i in range(v.shape[0]):
        for j in range(v.shape[1]):
            acc += v[i, j] * v[i, j]
    return acc


def l1(double[:, ::1] v):
    cdef Py_ssize_t i, j
    cdef double acc = 0.0
    cdef double a
    for i in range(v.shape[0]):
        for j in range(v.shape[1]):
            a = v[i, j]
            acc += a if a >= 0.0 else -a
    return acc


def inner(double[:, ::1] u, double[:, ::1] v):
    cdef Py_ssize_t i, j
    cdef double acc = 0.0
    for i in range(u.shape[0]):
        for j in range(u.shape[1]):
            acc += u[i, j] * v[i, j]
    return acc
