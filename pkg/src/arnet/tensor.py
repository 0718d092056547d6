"""Dense tensor numerics for the fixed ARNet topology.

Tensors are plain numpy arrays laid out C x H x W, or N x C x H x W for a
batch; every layer op accepts both. Forward functions named ``*_forward``
return ``(out, cache)`` and the matching ``*_backward(dout, cache)`` returns
input (and parameter) gradients. Storage is float32; the same code runs in
float64 when handed float64 arrays (used by the gradient checker).
"""
import numpy as np

from . import kernels
from .errors import ContractError, TrainingDivergence

DTYPE = np.float32


def _batched(x, name="input"):
    x = np.asarray(x)
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ContractError(f"{name} must be C x H x W or N x C x H x W, got shape {x.shape}")


def _unbatch(y, squeeze):
    return y[0] if squeeze else y


# --- convolution ---------------------------------------------------------

def conv3x3_forward(x, weight, bias):
    xb, squeeze = _batched(x)
    n, c, h, w = xb.shape
    if weight.ndim != 4 or weight.shape[2:] != (3, 3):
        raise ContractError(f"conv3x3 weight must be C_out x C_in x 3 x 3, got {weight.shape}")
    c_out, c_in = weight.shape[:2]
    if c_in != c:
        raise ContractError(f"conv3x3: input has {c} channels, weight expects {c_in}")
    if bias.shape != (c_out,):
        raise ContractError(f"conv3x3: bias shape {bias.shape} != ({c_out},)")
    if h < 1 or w < 1:
        raise ContractError("conv3x3: spatial dims must be >= 1")
    cols = kernels.im2col3x3(xb)
    wm = weight.reshape(c_out, c_in * 9)
    out = (wm @ cols).reshape(c_out, n, h, w)
    out += bias.reshape(c_out, 1, 1, 1)
    out = np.ascontiguousarray(out.transpose(1, 0, 2, 3))
    return _unbatch(out, squeeze), (cols, weight, xb.shape, squeeze)


def conv3x3_backward(dout, cache):
    """Gradients of a 3x3 same-padded convolution.

    Returns ``(dx, dweight, dbias)``; ``dx`` has the input's rank.
    """
    cols, weight, xshape, squeeze = cache
    n, c, h, w = xshape
    c_out = weight.shape[0]
    db, _ = _batched(dout, "dout")
    dm = np.ascontiguousarray(db.transpose(1, 0, 2, 3)).reshape(c_out, n * h * w)
    dweight = (dm @ cols.T).reshape(weight.shape)
    dbias = dm.sum(axis=1)
    dcols = weight.reshape(c_out, c * 9).T @ dm
    dx = kernels.col2im3x3(dcols, xshape)
    return _unbatch(dx, squeeze), dweight, dbias


def conv3x3(x, weight, bias):
    return conv3x3_forward(x, weight, bias)[0]


# --- pooling / upsampling ------------------------------------------------

def maxpool2_forward(x):
    xb, squeeze = _batched(x)
    h, w = xb.shape[2:]
    if h % 2 or w % 2:
        raise ContractError(f"maxpool2 needs even spatial dims, got {h} x {w}")
    out, idx = kernels.maxpool2_forward(xb)
    return _unbatch(out, squeeze), (idx, squeeze)


def maxpool2_backward(dout, cache):
    idx, squeeze = cache
    db, _ = _batched(dout, "dout")
    return _unbatch(kernels.maxpool2_backward(db, idx), squeeze)


def maxpool2(x):
    return maxpool2_forward(x)[0]


def upsample2_forward(x):
    xb, squeeze = _batched(x)
    return _unbatch(kernels.upsample2_forward(xb), squeeze), squeeze


def upsample2_backward(dout, cache):
    db, _ = _batched(dout, "dout")
    return _unbatch(kernels.upsample2_backward(db), cache)


def upsample2(x):
    return upsample2_forward(x)[0]


# --- channel concat ------------------------------------------------------

def concat_channels(a, b):
    """Stack ``a``'s channels then ``b``'s along the channel axis."""
    if a.ndim != b.ndim or a.shape[-2:] != b.shape[-2:] or a.shape[:-3] != b.shape[:-3]:
        raise ContractError(f"concat_channels: incompatible shapes {a.shape} and {b.shape}")
    if b.shape[-3] == 0:
        return a
    return np.concatenate([a, b], axis=-3)


def concat_backward(dout, c1):
    return dout[..., :c1, :, :], dout[..., c1:, :, :]


# --- activations ---------------------------------------------------------

def relu_forward(x):
    mask = x > 0
    return np.maximum(x, 0), mask


def relu_backward(dout, mask):
    return dout * mask


def relu(x):
    return relu_forward(x)[0]


def tanh_forward(x):
    y = np.tanh(x)
    return y, y


def tanh_backward(dout, y):
    return dout * (1 - y * y)


def tanh(x):
    return np.tanh(x)


# --- losses --------------------------------------------------------------

def _same_shape(pred, target, op):
    if pred.shape != target.shape:
        raise ContractError(f"{op}: shape mismatch {pred.shape} vs {target.shape}")


def l2_loss(pred, target):
    """Sum of squared differences and its gradient ``2 (pred - target)``."""
    _same_shape(pred, target, "l2_loss")
    d = pred - target
    return float(np.sum(np.square(d, dtype=np.float64))), 2 * d


def l1_error(pred, target):
    _same_shape(pred, target, "l1_error")
    return float(np.sum(np.abs(pred - target), dtype=np.float64))


# --- optimiser -----------------------------------------------------------

def sgd_step(params, grads, lr):
    """Plain SGD: returns a new parameter dict ``theta - lr * g``.

    Raises TrainingDivergence naming the first parameter whose gradient is
    not finite.
    """
    if not lr > 0:
        raise ContractError(f"learning rate must be > 0, got {lr}")
    if params.keys() != grads.keys():
        raise ContractError("params and grads have different parameter names")
    out = {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ContractError(f"gradient for {name} has shape {g.shape}, expected {p.shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingDivergence(f"non-finite gradient in {name}", layer=name)
        out[name] = (p - p.dtype.type(lr) * g).astype(p.dtype, copy=False)
    return out
