import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arnet import kernels
from arnet.kernels import _numba, _numpy

shapes = st.tuples(st.integers(1, 3), st.integers(1, 4), st.integers(1, 5), st.integers(1, 5))


def _x(shape, seed, dtype=np.float32):
    return np.random.default_rng(seed).standard_normal(shape).astype(dtype)


@settings(max_examples=40, deadline=None)
@given(shapes, st.integers(0, 2**31), st.sampled_from([np.float32, np.float64]))
def test_im2col_col2im_bitwise(shape, seed, dtype):
    x = _x(shape, seed, dtype)
    a, b = _numpy.im2col3x3(x), _numba.im2col3x3(x)
    assert a.dtype == b.dtype == dtype
    np.testing.assert_array_equal(a, b)
    d = np.random.default_rng(seed + 1).standard_normal(a.shape).astype(dtype)
    np.testing.assert_array_equal(_numpy.col2im3x3(d, shape), _numba.col2im3x3(d, shape))


@settings(max_examples=40, deadline=None)
@given(shapes, st.integers(0, 2**31))
def test_pool_upsample_bitwise(shape, seed):
    n, c, h, w = shape
    x = _x((n, c, 2 * h, 2 * w), seed)
    x[..., ::3, ::2] = 0.5  # force ties
    (ya, ia), (yb, ib) = _numpy.maxpool2_forward(x), _numba.maxpool2_forward(x)
    np.testing.assert_array_equal(ya, yb)
    np.testing.assert_array_equal(ia, ib)
    np.testing.assert_array_equal(_numpy.maxpool2_backward(ya, ia), _numba.maxpool2_backward(yb, ib))
    np.testing.assert_array_equal(_numpy.upsample2_forward(x), _numba.upsample2_forward(x))
    np.testing.assert_array_equal(_numpy.upsample2_backward(x), _numba.upsample2_backward(x))


def test_model_step_bitwise_across_backends():
    from arnet.model import ArchConfig, backward, init_params

    params = init_params(ArchConfig(1, 1, 1 / 8, 16), 0)
    x = _x((2, 1, 16, 16), 5)
    out = {}
    for name in kernels.BACKENDS:
        with kernels.use_backend(name):
            loss, g = backward(params, x, np.tanh(x))
            out[name] = (loss, [v.tobytes() for v in g.values()])
    assert out["numba"] == out["numpy"]


def test_use_backend_restores():
    before = kernels.get_backend()
    with kernels.use_backend("numpy"):
        assert kernels.get_backend() == "numpy"
    assert kernels.get_backend() == before


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.set_backend("cuda")


def test_env_flag_selects_backend():
    env = dict(os.environ, ARNET_BACKEND="numpy")
    out = subprocess.run([sys.executable, "-c", "from arnet import kernels; print(kernels.get_backend())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
