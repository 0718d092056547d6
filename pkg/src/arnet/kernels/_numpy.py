"""Vectorised numpy reference kernels.

Every kernel here has a loop twin in ``_numba.py``; both accumulate in the
same order so the two backends agree bitwise.
"""
import numpy as np


def im2col3x3(x):
    """Unfold (N, C, H, W) into (C*9, N*H*W) columns with zero padding 1."""
    n, c, h, w = x.shape
    xp = np.zeros((n, c, h + 2, w + 2), dtype=x.dtype)
    xp[:, :, 1:-1, 1:-1] = x
    cols = np.empty((c, 3, 3, n, h, w), dtype=x.dtype)
    for di in range(3):
        for dj in range(3):
            cols[:, di, dj] = xp[:, :, di:di + h, dj:dj + w].transpose(1, 0, 2, 3)
    return cols.reshape(c * 9, n * h * w)


def col2im3x3(dcols, shape):
    n, c, h, w = shape
    d = dcols.reshape(c, 3, 3, n, h, w)
    dxp = np.zeros((c, n, h + 2, w + 2), dtype=dcols.dtype)
    for di in range(3):
        for dj in range(3):
            dxp[:, :, di:di + h, dj:dj + w] += d[:, di, dj]
    return np.ascontiguousarray(dxp[:, :, 1:-1, 1:-1].transpose(1, 0, 2, 3))


def _windows(x):
    n, c, h, w = x.shape
    return (x.reshape(n, c, h // 2, 2, w // 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(n, c, h // 2, w // 2, 4))


def maxpool2_forward(x):
    win = _windows(x)
    idx = np.argmax(win, axis=-1).astype(np.int8)
    out = np.take_along_axis(win, idx[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(out), idx


def maxpool2_backward(dout, idx):
    n, c, ho, wo = dout.shape
    z = np.zeros((n, c, ho, wo, 4), dtype=dout.dtype)
    np.put_along_axis(z, idx[..., None].astype(np.intp), dout[..., None], axis=-1)
    return np.ascontiguousarray(
        z.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * ho, 2 * wo))


def upsample2_forward(x):
    n, c, h, w = x.shape
    return np.ascontiguousarray(
        np.broadcast_to(x[:, :, :, None, :, None], (n, c, h, 2, w, 2)).reshape(n, c, 2 * h, 2 * w))


def upsample2_backward(dout):
    n, c, h2, w2 = dout.shape
    g = dout.reshape(n, c, h2 // 2, 2, w2 // 2, 2)
    return ((g[:, :, :, 0, :, 0] + g[:, :, :, 0, :, 1]) + g[:, :, :, 1, :, 0]) + g[:, :, :, 1, :, 1]
