import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ffnet.errors import RangeError, ShapeError, SizeError
from ffnet.tensor import (concat_channels, crop, flip_horizontal, make_rng, slice_channels,
                          tensor_new)


def test_constant_fill():
    t = tensor_new((1, 3, 32, 32), 0)
    assert t.shape == (1, 3, 32, 32) and t.size == 3072 and not t.any()
    assert tensor_new((2, 1, 1, 1), 7.5).ravel().tolist() == [7.5, 7.5]


def test_normal_fill_is_reproducible():
    a = tensor_new((1, 1, 2, 2), "normal", make_rng(42))
    b = tensor_new((1, 1, 2, 2), "normal", make_rng(42))
    assert a.tobytes() == b.tobytes()
    c = tensor_new((1, 1, 2, 2), "normal", make_rng(43))
    assert a.tobytes() != c.tobytes()


@pytest.mark.parametrize("shape", [(0, 1, 1, 1), (1, 0, 2, 2), (1, 1, -1, 2)])
def test_bad_extent(shape):
    with pytest.raises(SizeError):
        tensor_new(shape)


def test_overflowing_extent():
    with pytest.raises(SizeError):
        tensor_new((2**31, 2**31, 2**31, 2**31))


def test_concat_shapes_and_order():
    a = np.zeros((1, 64, 28, 28), np.float32)
    assert concat_channels(a, a).shape == (1, 128, 28, 28)
    x = np.arange(1, 5, dtype=np.float32).reshape(1, 1, 2, 2)
    y = np.arange(5, 9, dtype=np.float32).reshape(1, 1, 2, 2)
    out = concat_channels(x, y)
    assert out[0, 0].ravel().tolist() == [1, 2, 3, 4]
    assert out[0, 1].ravel().tolist() == [5, 6, 7, 8]


def test_concat_mismatch():
    with pytest.raises(ShapeError):
        concat_channels(np.zeros((1, 64, 28, 28)), np.zeros((1, 64, 27, 28)))
    with pytest.raises(ShapeError):
        concat_channels(np.zeros((2, 1, 3, 3)), np.zeros((1, 1, 3, 3)))
    with pytest.raises(ShapeError):
        concat_channels(np.zeros((1, 3, 3)), np.zeros((1, 1, 3, 3)))


@settings(max_examples=50, deadline=None)
@given(ca=st.integers(1, 5), cb=st.integers(1, 5), seed=st.integers(0, 2**32 - 1))
def test_concat_then_slice_recovers_inputs(ca, cb, seed):
    r = np.random.default_rng(seed)
    a = r.standard_normal((2, ca, 3, 4)).astype(np.float32)
    b = r.standard_normal((2, cb, 3, 4)).astype(np.float32)
    out = concat_channels(a, b)
    assert slice_channels(out, 0, ca).tobytes() == a.tobytes()
    assert slice_channels(out, ca, ca + cb).tobytes() == b.tobytes()


def test_crop():
    t = np.arange(1, 10, dtype=np.float32).reshape(1, 1, 3, 3)
    assert np.array_equal(crop(t, 0, 0, 3, 3), t)
    assert crop(t, 1, 1, 2, 2).ravel().tolist() == [5, 6, 8, 9]
    with pytest.raises(RangeError):
        crop(t, 2, 0, 2, 2)
    with pytest.raises(RangeError):
        crop(t, 0, -1, 2, 2)


def test_flip_is_involution(rng):
    t = rng.standard_normal((2, 3, 4, 5))
    assert np.array_equal(flip_horizontal(flip_horizontal(t)), t)
    assert np.array_equal(flip_horizontal(t)[..., 0], t[..., -1])


def test_seed_range():
    make_rng(2**64 - 1)
    with pytest.raises(ValueError):
        make_rng(2**64)
