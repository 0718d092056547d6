"""Loop kernels compiled with numba; same contracts as ``_numpy.py``."""
import numpy as np
from numba import njit


@njit(cache=True)
def _im2col(x, cols):
    n, c, h, w = x.shape
    for ci in range(c):
        for di in range(3):
            for dj in range(3):
                for ni in range(n):
                    for i in range(h):
                        si = i + di - 1
                        for j in range(w):
                            sj = j + dj - 1
                            if 0 <= si < h and 0 <= sj < w:
                                cols[ci, di, dj, ni, i, j] = x[ni, ci, si, sj]
                            else:
                                cols[ci, di, dj, ni, i, j] = 0.0


def im2col3x3(x):
    n, c, h, w = x.shape
    cols = np.empty((c, 3, 3, n, h, w), dtype=x.dtype)
    _im2col(np.ascontiguousarray(x), cols)
    return cols.reshape(c * 9, n * h * w)


@njit(cache=True)
def _col2im(d, dx):
    c, _, _, n, h, w = d.shape
    # (di, dj) outermost per channel keeps the numpy backend's summation order
    for ci in range(c):
        for di in range(3):
            for dj in range(3):
                for ni in range(n):
                    for i in range(h):
                        ti = i + di - 1
                        if ti < 0 or ti >= h:
                            continue
                        for j in range(w):
                            tj = j + dj - 1
                            if 0 <= tj < w:
                                dx[ni, ci, ti, tj] += d[ci, di, dj, ni, i, j]


def col2im3x3(dcols, shape):
    n, c, h, w = shape
    dx = np.zeros((n, c, h, w), dtype=dcols.dtype)
    _col2im(np.ascontiguousarray(dcols).reshape(c, 3, 3, n, h, w), dx)
    return dx


@njit(cache=True)
def _maxpool_fwd(x, out, idx):
    n, c, ho, wo = out.shape
    for ni in range(n):
        for ci in range(c):
            for i in range(ho):
                for j in range(wo):
                    best = x[ni, ci, 2 * i, 2 * j]
                    k = 0
                    for q in range(1, 4):
                        v = x[ni, ci, 2 * i + q // 2, 2 * j + q % 2]
                        if v > best:
                            best = v
                            k = q
                    out[ni, ci, i, j] = best
                    idx[ni, ci, i, j] = k


def maxpool2_forward(x):
    n, c, h, w = x.shape
    out = np.empty((n, c, h // 2, w // 2), dtype=x.dtype)
    idx = np.empty((n, c, h // 2, w // 2), dtype=np.int8)
    _maxpool_fwd(np.ascontiguousarray(x), out, idx)
    return out, idx


@njit(cache=True)
def _maxpool_bwd(dout, idx, dx):
    n, c, ho, wo = dout.shape
    for ni in range(n):
        for ci in range(c):
            for i in range(ho):
                for j in range(wo):
                    k = idx[ni, ci, i, j]
                    dx[ni, ci, 2 * i + k // 2, 2 * j + k % 2] = dout[ni, ci, i, j]


def maxpool2_backward(dout, idx):
    n, c, ho, wo = dout.shape
    dx = np.zeros((n, c, 2 * ho, 2 * wo), dtype=dout.dtype)
    _maxpool_bwd(np.ascontiguousarray(dout), idx, dx)
    return dx


@njit(cache=True)
def _upsample_fwd(x, out):
    n, c, h, w = x.shape
    for ni in range(n):
        for ci in range(c):
            for i in range(h):
                for j in range(w):
                    v = x[ni, ci, i, j]
                    out[ni, ci, 2 * i, 2 * j] = v
                    out[ni, ci, 2 * i, 2 * j + 1] = v
                    out[ni, ci, 2 * i + 1, 2 * j] = v
                    out[ni, ci, 2 * i + 1, 2 * j + 1] = v


def upsample2_forward(x):
    n, c, h, w = x.shape
    out = np.empty((n, c, 2 * h, 2 * w), dtype=x.dtype)
    _upsample_fwd(np.ascontiguousarray(x), out)
    return out


@njit(cache=True)
def _upsample_bwd(g, dx):
    n, c, h, w = dx.shape
    for ni in range(n):
        for ci in range(c):
            for i in range(h):
                for j in range(w):
                    a = g[ni, ci, 2 * i, 2 * j] + g[ni, ci, 2 * i, 2 * j + 1]
                    a = a + g[ni, ci, 2 * i + 1, 2 * j]
                    dx[ni, ci, i, j] = a + g[ni, ci, 2 * i + 1, 2 * j + 1]


def upsample2_backward(dout):
    n, c, h2, w2 = dout.shape
    dx = np.empty((n, c, h2 // 2, w2 // 2), dtype=dout.dtype)
    _upsample_bwd(np.ascontiguousarray(dout), dx)
    return dx
