import numpy as np
import pytest

from arnet import tensor as T
from arnet.errors import ContractError, TrainingDivergence
from arnet.gradcheck import LAYER_CASES, PRECISION, _check_layer, _l2_error


def test_conv_all_ones_padding():
    x = np.ones((1, 3, 3), np.float32)
    w = np.ones((1, 1, 3, 3), np.float32)
    y = T.conv3x3(x, w, np.zeros(1, np.float32))
    assert y[0, 1, 1] == 9
    assert y[0, 0, 0] == y[0, 0, 2] == y[0, 2, 0] == y[0, 2, 2] == 4
    assert y[0, 0, 1] == 6


def test_conv_identity_kernel(rng):
    x = rng.standard_normal((2, 5, 7)).astype(np.float32)
    w = np.zeros((2, 2, 3, 3), np.float32)
    w[0, 0, 1, 1] = w[1, 1, 1, 1] = 1
    np.testing.assert_array_equal(T.conv3x3(x, w, np.zeros(2, np.float32)), x)


def test_conv_matches_direct_loop(rng):
    x = rng.standard_normal((2, 5, 4))
    w = rng.standard_normal((3, 2, 3, 3))
    b = rng.standard_normal(3)
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    ref = np.zeros((3, 5, 4))
    for o in range(3):
        for i in range(5):
            for j in range(4):
                ref[o, i, j] = np.sum(xp[:, i:i + 3, j:j + 3] * w[o]) + b[o]
    np.testing.assert_allclose(T.conv3x3(x, w, b), ref, rtol=1e-12, atol=1e-12)


def test_conv_batch_equals_single(rng):
    x = rng.standard_normal((3, 2, 4, 4)).astype(np.float32)
    w = rng.standard_normal((4, 2, 3, 3)).astype(np.float32)
    b = rng.standard_normal(4).astype(np.float32)
    yb = T.conv3x3(x, w, b)
    for k in range(3):
        np.testing.assert_allclose(yb[k], T.conv3x3(x[k], w, b), rtol=1e-6, atol=1e-6)


def test_conv_channel_mismatch():
    with pytest.raises(ContractError):
        T.conv3x3(np.zeros((2, 4, 4)), np.zeros((1, 3, 3, 3)), np.zeros(1))


def test_maxpool_examples():
    y = T.maxpool2_forward(np.array([[[1., 2.], [3., 4.]]]))[0]
    np.testing.assert_array_equal(y, [[[4.]]])
    x = np.full((1, 2, 2), 7.0)
    y, cache = T.maxpool2_forward(x)
    dx = T.maxpool2_backward(np.ones_like(y), cache)
    np.testing.assert_array_equal(dx, [[[1., 0.], [0., 0.]]])


def test_maxpool_odd_dims():
    with pytest.raises(ContractError):
        T.maxpool2_forward(np.zeros((1, 3, 4)))


def test_upsample_examples(rng):
    np.testing.assert_array_equal(T.upsample2_forward(np.array([[[5.]]]))[0],
                                  np.full((1, 2, 2), 5.))
    x = rng.standard_normal((2, 6, 4))
    assert T.upsample2_forward(T.maxpool2_forward(x)[0])[0].shape == x.shape


def test_concat_order_and_split(rng):
    a = rng.standard_normal((2, 3, 3))
    b = rng.standard_normal((1, 3, 3))
    c = T.concat_channels(a, b)
    np.testing.assert_array_equal(c[:2], a)
    np.testing.assert_array_equal(c[2:], b)
    da, db = T.concat_backward(c, 2)
    np.testing.assert_array_equal(da, a)
    np.testing.assert_array_equal(db, b)
    with pytest.raises(ContractError):
        T.concat_channels(a, np.zeros((1, 2, 3)))


def test_activations():
    np.testing.assert_array_equal(T.relu(np.array([-1., 0., 2.])), [0, 0, 2])
    assert T.tanh(np.array(0.0)) == 0


def test_losses():
    x = np.arange(12, dtype=np.float32).reshape(3, 2, 2)
    assert T.l2_loss(x, x)[0] == 0
    assert T.l2_loss(x + 1, x)[0] == 12
    np.testing.assert_array_equal(T.l2_loss(x + 1, x)[1], np.full_like(x, 2))
    assert T.l1_error(x - 1, x) == 12
    assert T.l1_error(np.array([1., 2.]), np.array([0., 4.])) == 3
    with pytest.raises(ContractError):
        T.l2_loss(x, x[:2])
    with pytest.raises(ContractError):
        T.l1_error(x, x[:, :1])


def test_sgd_step_and_divergence():
    p = {"a.weight": np.ones(3, np.float32)}
    g = {"a.weight": np.full(3, 2.0, np.float32)}
    out = T.sgd_step(p, g, 0.5)
    np.testing.assert_array_equal(out["a.weight"], 0.0)
    np.testing.assert_array_equal(p["a.weight"], 1.0)
    g["a.weight"][1] = np.nan
    with pytest.raises(TrainingDivergence) as exc:
        T.sgd_step(p, g, 0.5)
    assert exc.value.layer == "a.weight"
    with pytest.raises(ContractError):
        T.sgd_step(p, {"a.weight": np.ones(3)}, 0.0)


def test_ops_deterministic(rng):
    x = rng.standard_normal((2, 8, 8)).astype(np.float32)
    w = rng.standard_normal((3, 2, 3, 3)).astype(np.float32)
    b = rng.standard_normal(3).astype(np.float32)
    assert T.conv3x3(x, w, b).tobytes() == T.conv3x3(x.copy(), w.copy(), b.copy()).tobytes()


@pytest.mark.parametrize("op", sorted(LAYER_CASES))
@pytest.mark.parametrize("dtype", ["float32", "float64"])
def test_layer_gradients(op, dtype):
    eps, tol = PRECISION[dtype]
    rng = np.random.default_rng(7)
    for _ in range(20):
        fwd, bwd, inputs = LAYER_CASES[op](rng, dtype)
        assert _check_layer(fwd, bwd, inputs, rng, eps, dtype) < tol


@pytest.mark.parametrize("dtype", ["float32", "float64"])
def test_l2_gradient(dtype):
    eps, tol = PRECISION[dtype]
    rng = np.random.default_rng(8)
    assert max(_l2_error(rng, dtype, eps) for _ in range(20)) < tol
