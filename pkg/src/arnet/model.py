"""ARNet: a four-level U-Net encoder-decoder with concatenated skip connections.

Layer layout (``w0..w4`` are the 64/128/256/512/512 base widths scaled by the
width multiplier)::

    enc0: in -> w0 -> w0                      H
    enc1: pool, w0 -> w1 -> w1                H/2
    enc2: pool, w1 -> w2 -> w2                H/4
    enc3: pool, w2 -> w3 -> w3                H/8
    enc4: pool, w3 -> w4 -> w4                H/16 (bottleneck)
    dec3: up, [up, enc3] -> w2 -> w2          H/8
    dec2: up, [up, enc2] -> w1 -> w1          H/4
    dec1: up, [up, enc1] -> w0 -> w0          H/2
    dec0: up, [up, enc0] -> w0 -> w0          H
    out:  w0 -> out_channels, tanh

Every conv is 3x3 / pad 1 followed by ReLU, except ``out`` (tanh).
Parameters live in an insertion-ordered dict ``{"enc0.conv1.weight": ...}``.
"""
from dataclasses import asdict, dataclass
from math import floor, sqrt

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError, TrainingDivergence

BASE_WIDTHS = (64, 128, 256, 512, 512)
N_LEVELS = 4


def _round_half_up(x):
    return int(floor(x + 0.5))


@dataclass(frozen=True)
class ArchConfig:
    in_channels: int
    out_channels: int
    width: float = 1.0
    input_size: int = 32

    def __post_init__(self):
        if self.in_channels < 1 or self.out_channels < 1:
            raise ConfigError("in_channels and out_channels must be >= 1")
        if not self.width > 0:
            raise ConfigError(f"width multiplier must be > 0, got {self.width}")
        if self.input_size < 16 or self.input_size % 16:
            raise ConfigError(f"input_size must be a positive multiple of 16, got {self.input_size}")

    @property
    def widths(self):
        return tuple(max(1, _round_half_up(b * self.width)) for b in BASE_WIDTHS)

    def layer_specs(self):
        """``(name, c_in, c_out)`` for every conv, in parameter order."""
        w = self.widths
        specs = []
        c = self.in_channels
        for lvl in range(N_LEVELS + 1):
            specs += [(f"enc{lvl}.conv1", c, w[lvl]), (f"enc{lvl}.conv2", w[lvl], w[lvl])]
            c = w[lvl]
        for lvl in reversed(range(N_LEVELS)):
            c_out = w[max(lvl - 1, 0)]
            specs += [(f"dec{lvl}.conv1", c + w[lvl], c_out), (f"dec{lvl}.conv2", c_out, c_out)]
            c = c_out
        specs.append(("out", c, self.out_channels))
        return specs

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["in_channels"]), int(d["out_channels"]), float(d["width"]),
                   int(d["input_size"]))


def param_shapes(cfg):
    shapes = {}
    for name, c_in, c_out in cfg.layer_specs():
        shapes[f"{name}.weight"] = (c_out, c_in, 3, 3)
        shapes[f"{name}.bias"] = (c_out,)
    return shapes


def init_params(cfg, seed):
    """Fan-in uniform init ``U(-b, b)`` with ``b = sqrt(2 / (9 C_in))``; zero biases.

    Weight variance is ``b^2 / 3 = 2 / (27 C_in)``, small enough that the
    final tanh starts out unsaturated.
    """
    rng = np.random.default_rng(seed)
    params = {}
    for name, c_in, c_out in cfg.layer_specs():
        bound = sqrt(2.0 / (c_in * 9))
        params[f"{name}.weight"] = rng.uniform(-bound, bound,
                                               size=(c_out, c_in, 3, 3)).astype(T.DTYPE)
        params[f"{name}.bias"] = np.zeros(c_out, dtype=T.DTYPE)
    return params


def _check_input(params, x):
    c_in = params["enc0.conv1.weight"].shape[1]
    xb = x if x.ndim == 4 else x[None] if x.ndim == 3 else None
    if xb is None or xb.shape[1] != c_in:
        raise ContractError(f"ARNet expects {c_in} x H x W input, got {x.shape}")
    h, w = xb.shape[2:]
    if h % 16 or w % 16 or h < 16 or w < 16:
        raise ContractError(f"ARNet input spatial dims must be multiples of 16, got {h} x {w}")


def _conv(x, params, name, caches, act="relu"):
    y, cc = T.conv3x3_forward(x, params[f"{name}.weight"], params[f"{name}.bias"])
    if act == "relu":
        y, ac = T.relu_forward(y)
    else:
        y, ac = T.tanh_forward(y)
    caches[name] = (cc, ac)
    return y


def _conv_back(dy, name, caches, grads, act="relu"):
    cc, ac = caches[name]
    dy = T.relu_backward(dy, ac) if act == "relu" else T.tanh_backward(dy, ac)
    dx, dw, db = T.conv3x3_backward(dy, cc)
    grads[f"{name}.weight"] = dw
    grads[f"{name}.bias"] = db
    return dx


def _forward(params, x):
    caches = {}
    skips = []
    h = x
    for lvl in range(N_LEVELS + 1):
        if lvl:
            h, caches[f"pool{lvl}"] = T.maxpool2_forward(h)
        h = _conv(h, params, f"enc{lvl}.conv1", caches)
        h = _conv(h, params, f"enc{lvl}.conv2", caches)
        skips.append(h)
    for lvl in reversed(range(N_LEVELS)):
        h, caches[f"up{lvl}"] = T.upsample2_forward(h)
        caches[f"cat{lvl}"] = h.shape[-3]
        h = T.concat_channels(h, skips[lvl])
        h = _conv(h, params, f"dec{lvl}.conv1", caches)
        h = _conv(h, params, f"dec{lvl}.conv2", caches)
    h = _conv(h, params, "out", caches, act="tanh")
    return h, caches


def forward(params, x):
    """Restore ``x`` (C_in x H x W or a batch); output lies in (-1, 1)."""
    _check_input(params, x)
    return _forward(params, x)[0]


def _backward_from(dout, caches):
    grads = {}
    d = _conv_back(dout, "out", caches, grads, act="tanh")
    dskips = {}
    for lvl in range(N_LEVELS):
        d = _conv_back(d, f"dec{lvl}.conv2", caches, grads)
        d = _conv_back(d, f"dec{lvl}.conv1", caches, grads)
        d, dskips[lvl] = T.concat_backward(d, caches[f"cat{lvl}"])
        d = T.upsample2_backward(d, caches[f"up{lvl}"])
    for lvl in reversed(range(N_LEVELS + 1)):
        if lvl < N_LEVELS:
            d = d + dskips[lvl]
        d = _conv_back(d, f"enc{lvl}.conv2", caches, grads)
        d = _conv_back(d, f"enc{lvl}.conv1", caches, grads)
        if lvl:
            d = T.maxpool2_backward(d, caches[f"pool{lvl}"])
    return grads


def backward(params, x_in, target):
    """Restoration loss and its parameter gradients.

    For a single image the loss is ``||forward(x_in) - target||_2^2``; for a
    batch it is the batch mean of the per-image sums. Gradients come back
    in the same order as ``params``.
    """
    _check_input(params, x_in)
    pred, caches = _forward(params, x_in)
    loss, dpred = T.l2_loss(pred, target)
    if pred.ndim == 4:
        n = pred.shape[0]
        loss /= n
        dpred = dpred / dpred.dtype.type(n)
    if not np.isfinite(loss):
        raise TrainingDivergence(f"non-finite restoration loss {loss}")
    grads = _backward_from(dpred, caches)
    return loss, {name: grads[name] for name in params}


def layer_shapes(params, x):
    """Output shape of every conv and pool/upsample stage, for bookkeeping checks."""
    _check_input(params, x)
    _, caches = _forward(params, x)
    shapes = {}
    for key, val in caches.items():
        if key.startswith(("enc", "dec", "out")):
            cc = val[0]
            n, _, h, w = cc[2]
            shapes[key] = (cc[1].shape[0], h, w)
    return shapes
