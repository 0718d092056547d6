"""Central finite-difference checks for every backward pass.

Each check draws random instances, reduces the op's output to a scalar with
a fixed random projection (losses are used directly), and compares the
analytic gradient against ``(f(x + eps) - f(x - eps)) / (2 eps)`` element by
element. The error of one instance is ``max |analytic - numeric|`` divided by
the larger of the two gradients' max magnitudes.
"""
from dataclasses import asdict, dataclass

import numpy as np

from . import model as M
from . import tensor as T

# (eps, tolerance) per precision
PRECISION = {
    "float32": (1e-3, 1e-3),
    "float64": (1e-5, 1e-6),
}
# the full model sums ~20 layers of float32 rounding, so it needs a wider step;
# positions whose +-eps interval crosses a switch are skipped (see check_model)
MODEL_PRECISION = {
    "float32": (3e-2, 1e-3),
    "float64": (1e-5, 1e-6),
}


@dataclass
class CheckResult:
    op: str
    max_rel_error: float
    tolerance: float
    instances: int
    passed: bool

    def to_dict(self):
        return asdict(self)


def rel_error(analytic, numeric):
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    scale = max(np.abs(a).max(initial=0.0), np.abs(n).max(initial=0.0))
    if scale == 0.0:
        return 0.0
    return float(np.abs(a - n).max() / scale)


def numeric_grad(f, x, eps, index=None):
    """Central differences of scalar ``f()`` w.r.t. ``x`` (perturbed in place).

    ``index`` restricts the check to a subset of flat positions.
    """
    flat = x.reshape(-1)
    positions = range(flat.size) if index is None else index
    out = np.zeros(len(positions), dtype=np.float64)
    for k, i in enumerate(positions):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f()
        flat[i] = orig - eps
        fm = f()
        flat[i] = orig
        out[k] = (fp - fm) / (2 * eps)
    return out


def _project(y, proj):
    return float(np.sum(y.astype(np.float64) * proj))


def _distinct(rng, shape, dtype, spacing=0.01):
    """Random values pairwise at least ``spacing`` apart (no argmax flips under eps)."""
    n = int(np.prod(shape))
    return ((rng.permutation(n) - n / 2) * spacing).reshape(shape).astype(dtype)


def _away_from_zero(rng, shape, dtype, margin=0.05):
    x = rng.uniform(margin, 2.0, size=shape) * rng.choice([-1.0, 1.0], size=shape)
    return x.astype(dtype)


def _check_layer(forward, backward, inputs, rng, eps, dtype):
    """Largest relative error over all inputs of one layer instance."""
    y, cache = forward(*inputs)
    proj = rng.standard_normal(y.shape).astype(dtype)
    grads = backward(proj, cache)
    if not isinstance(grads, tuple):
        grads = (grads,)
    err = 0.0
    for x, g in zip(inputs, grads):
        num = numeric_grad(lambda: _project(forward(*inputs)[0], proj), x, eps)
        err = max(err, rel_error(g, num))
    return err


def _conv_case(rng, dtype):
    x = rng.standard_normal((2, 5, 5)).astype(dtype)
    w = rng.standard_normal((3, 2, 3, 3)).astype(dtype)
    b = rng.standard_normal(3).astype(dtype)
    return (lambda *a: T.conv3x3_forward(*a)), (lambda d, c: T.conv3x3_backward(d, c)), [x, w, b]


def _pool_case(rng, dtype):
    return ((lambda x: T.maxpool2_forward(x)), (lambda d, c: T.maxpool2_backward(d, c)),
            [_distinct(rng, (2, 6, 6), dtype)])


def _upsample_case(rng, dtype):
    return ((lambda x: T.upsample2_forward(x)), (lambda d, c: T.upsample2_backward(d, c)),
            [rng.standard_normal((2, 3, 4)).astype(dtype)])


def _concat_case(rng, dtype):
    a = rng.standard_normal((2, 3, 3)).astype(dtype)
    b = rng.standard_normal((1, 3, 3)).astype(dtype)
    return ((lambda a, b: (T.concat_channels(a, b), a.shape[0])),
            (lambda d, c: T.concat_backward(d, c)), [a, b])


def _relu_case(rng, dtype):
    return ((lambda x: T.relu_forward(x)), (lambda d, c: T.relu_backward(d, c)),
            [_away_from_zero(rng, (2, 4, 4), dtype)])


def _tanh_case(rng, dtype):
    return ((lambda x: T.tanh_forward(x)), (lambda d, c: T.tanh_backward(d, c)),
            [rng.uniform(-2, 2, size=(2, 4, 4)).astype(dtype)])


LAYER_CASES = {
    "conv3x3": _conv_case,
    "maxpool2": _pool_case,
    "upsample2": _upsample_case,
    "concat_channels": _concat_case,
    "relu": _relu_case,
    "tanh": _tanh_case,
}


def _l2_error(rng, dtype, eps):
    pred = rng.standard_normal((3, 4, 4)).astype(dtype)
    target = rng.standard_normal((3, 4, 4)).astype(dtype)
    _, g = T.l2_loss(pred, target)
    num = numeric_grad(lambda: T.l2_loss(pred, target)[0], pred, eps)
    return rel_error(g, num)


def _pattern(caches):
    """Every ReLU mask and max-pool argmax of one forward pass, concatenated."""
    parts = []
    for key, val in caches.items():
        if key.startswith("pool"):
            parts.append(val[0].ravel())
        elif isinstance(val, tuple) and val[1].dtype == bool:
            parts.append(val[1].ravel())
    return np.concatenate([p.astype(np.int8) for p in parts])


def _smooth_difference(params, x, target, arr, pos, eps, base):
    """Central difference at one position, or None if a switch lies within +-eps.

    Inside an interval where no ReLU mask or max-pool argmax changes, the
    network is a composition of affine maps and tanh, so central
    differences converge at second order.
    """
    flat = arr.reshape(-1)
    orig = flat[pos]
    vals, points = [], []
    for step in (eps, -eps):
        flat[pos] = orig + arr.dtype.type(step)
        points.append(float(flat[pos]))
        pred, caches = M._forward(params, x)
        flat[pos] = orig
        if not np.array_equal(_pattern(caches), base):
            return None
        vals.append(T.l2_loss(pred, target)[0])
    # the perturbed value is rounded to the parameter dtype; use the real step
    return (vals[0] - vals[1]) / (points[0] - points[1])


def model_instance(dtype, seed, width=1 / 16, size=16):
    """A small ARNet whose units are mostly alive.

    Weights are ``U(-1, 3) / fan_in`` (positive mean keeps activations O(1)
    without many dead ReLUs), biases ``U(0, 0.2)``, input in [0, 1], target
    in [-1, 1]. With zero-mean init at this width most sampled gradients are
    exactly zero and the few live ones drown in float32 rounding.
    """
    rng = np.random.default_rng(seed)
    cfg = M.ArchConfig(1, 1, width, size)
    params = {}
    for name, c_in, c_out in cfg.layer_specs():
        fan = 9 * c_in
        params[f"{name}.weight"] = (rng.uniform(-1, 3, size=(c_out, c_in, 3, 3)) / fan).astype(dtype)
        params[f"{name}.bias"] = rng.uniform(0, 0.2, size=c_out).astype(dtype)
    x = rng.uniform(0, 1, size=(1, size, size)).astype(dtype)
    target = rng.uniform(-1, 1, size=(1, size, size)).astype(dtype)
    return params, x, target, rng


def check_model(dtype="float32", seed=0, n_params=30, width=1 / 16, size=16):
    """Finite-difference check of the whole ARNet on ``n_params`` sampled parameters.

    A sampled position is replaced by a fresh draw when perturbing it by
    +-eps flips any ReLU or max-pool decision, since the loss has a kink
    there and central differences say nothing about the gradient.
    """
    eps, tol = MODEL_PRECISION[dtype]
    params, x, target, rng = model_instance(dtype, seed, width, size)
    _, grads = M.backward(params, x, target)
    base = _pattern(M._forward(params, x)[1])
    names = list(params)
    sizes = np.array([params[k].size for k in names])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    analytic, numeric = [], []
    tried = set()
    while len(analytic) < n_params and len(tried) < offsets[-1]:
        f = int(rng.integers(offsets[-1]))
        if f in tried:
            continue
        tried.add(f)
        li = int(np.searchsorted(offsets, f, side="right") - 1)
        name, pos = names[li], f - int(offsets[li])
        num = _smooth_difference(params, x, target, params[name], pos, eps, base)
        if num is None:
            continue
        numeric.append(num)
        analytic.append(grads[name].reshape(-1)[pos])
    err = rel_error(analytic, numeric)
    return CheckResult("arnet", err, tol, 1, bool(err < tol))


def run(dtype="float32", instances=20, seed=0, model=True, model_instances=5):
    """Check every tensor-core op (``instances`` draws each) and optionally the full model."""
    eps, tol = PRECISION[dtype]
    rng = np.random.default_rng(seed)
    results = []
    for name, case in LAYER_CASES.items():
        worst = 0.0
        for _ in range(instances):
            fwd, bwd, inputs = case(rng, dtype)
            worst = max(worst, _check_layer(fwd, bwd, inputs, rng, eps, dtype))
        results.append(CheckResult(name, worst, tol, instances, bool(worst < tol)))
    worst = max(_l2_error(rng, dtype, eps) for _ in range(instances))
    results.append(CheckResult("l2_loss", worst, tol, instances, bool(worst < tol)))
    if model:
        checks = [check_model(dtype, seed + k) for k in range(model_instances)]
        worst = max(c.max_rel_error for c in checks)
        results.append(CheckResult("arnet", worst, checks[0].tolerance,
                                   model_instances, bool(worst < checks[0].tolerance)))
    return results
