import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arnet import tensor as T
from arnet.erasing import (ErasingOpSet, Selection, apply, enumerate_selections, gray,
                           rotate90, sample_selection, scale_half)
from arnet.errors import ConfigError, ContractError

images = st.tuples(st.integers(1, 3), st.integers(1, 6), st.integers(0, 2**31))


def _img(c, n, seed):
    return np.random.default_rng(seed).uniform(-1, 1, size=(c, n, n)).astype(np.float32)


def test_gray_examples():
    px = np.array([0.3, 0.6, 0.9]).reshape(3, 1, 1)
    np.testing.assert_allclose(gray(px), [[[0.6]]])
    x = np.ones((1, 2, 2))
    assert gray(x) is x


def test_rotate_example():
    x = np.array([[[1, 2], [3, 4]]])
    np.testing.assert_array_equal(rotate90(x, 1), [[[2, 4], [1, 3]]])
    np.testing.assert_array_equal(rotate90(x, 0), x)
    assert rotate90(np.zeros((1, 2, 3)), 1).shape == (1, 3, 2)


@settings(max_examples=200, deadline=None)
@given(images, st.integers(0, 3))
def test_transform_algebra(case, k):
    x = _img(*case)
    r = x
    for _ in range(4):
        r = rotate90(r, k)
    np.testing.assert_array_equal(r, x)
    np.testing.assert_array_equal(gray(gray(x)), gray(x))
    np.testing.assert_array_equal(gray(rotate90(x, k)), rotate90(gray(x), k))
    assert T.l1_error(rotate90(x, k), np.zeros_like(rotate90(x, k))) == T.l1_error(x, np.zeros_like(x))
    assert abs(gray(x).mean() - x.mean()) < 1e-6


def test_scale_half_examples():
    np.testing.assert_array_equal(scale_half(np.array([[[0., 2.], [0., 2.]]])), np.ones((1, 2, 2)))
    c = np.full((2, 4, 4), 0.25, np.float32)
    np.testing.assert_array_equal(scale_half(c), c)
    x = _img(3, 6, 1)
    assert abs(scale_half(x).mean() - x.mean()) < 1e-6
    with pytest.raises(ContractError):
        scale_half(np.zeros((1, 3, 4)))


def test_opset_counts():
    assert ErasingOpSet.from_names(["gray", "rot90"]).n_selections == 4
    assert ErasingOpSet.from_names([]).n_selections == 1
    assert enumerate_selections(ErasingOpSet.from_names([])) == [Selection(0, ())]
    assert ErasingOpSet.from_names(["rot90", "rot90"]).n_selections == 16
    with pytest.raises(ConfigError):
        ErasingOpSet.from_names(["blur"])


@pytest.mark.parametrize("names", [[], ["rot90"], ["gray", "rot90"], ["rot90", "rot90"],
                                   ["gray", "rot90", "scale"]])
def test_enumeration_bijective(names):
    ops = ErasingOpSet.from_names(names)
    sels = enumerate_selections(ops)
    assert len(sels) == ops.n_selections
    assert len({s.choices for s in sels}) == len(sels)
    for i, s in enumerate(sels):
        assert s.index == i
        assert ops.encode(s.choices) == i


def test_last_operator_fastest():
    sels = enumerate_selections(ErasingOpSet.from_names(["rot90", "rot90"]))
    assert [s.choices for s in sels[:5]] == [(0, 0), (0, 1), (0, 2), (0, 3), (1, 0)]


def test_apply_examples():
    x = _img(3, 4, 2)
    ops = ErasingOpSet.from_names(["gray", "rot90"])
    np.testing.assert_array_equal(apply(ops, x, ops.decode(0)), gray(x))
    assert apply(ops, x, ops.decode(3)).shape == (1, 4, 4)
    rr = ErasingOpSet.from_names(["rot90", "rot90"])
    np.testing.assert_array_equal(apply(rr, x, rr.decode(rr.encode((2, 2)))), x)
    assert ErasingOpSet.from_names(["rot90"]).output_channels(3) == 3
    assert ops.output_channels(3) == 1


def test_non_square_rejected():
    with pytest.raises(ConfigError):
        ErasingOpSet.from_names(["rot90"]).validate_shape((1, 4, 6))
    ErasingOpSet.from_names(["gray"]).validate_shape((3, 4, 6))


def test_sampling_uniform_and_reproducible():
    ops = ErasingOpSet.from_names(["gray", "rot90"])
    rng = np.random.default_rng(0)
    draws = [sample_selection(ops, rng).index for _ in range(10000)]
    freq = np.bincount(draws, minlength=4) / 10000
    assert np.all((freq >= 0.22) & (freq <= 0.28))
    again = np.random.default_rng(0)
    assert draws[:100] == [sample_selection(ops, again).index for _ in range(100)]
    single = ErasingOpSet.from_names([])
    assert all(sample_selection(single, rng).index == 0 for _ in range(10))
