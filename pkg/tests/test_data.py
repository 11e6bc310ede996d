import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ffnet import data
from ffnet.errors import FormatError, LabelError


def _records(r, n, classes=10):
    raw = np.empty((n, data.RECORD_BYTES), np.uint8)
    raw[:, 0] = r.integers(0, classes, n)
    raw[:, 1:] = r.integers(0, 256, (n, data.RECORD_PIXELS))
    return raw.tobytes()


def test_parse_layout(rng):
    raw = _records(rng, 3)
    d = data.parse_records(raw)
    rec = np.frombuffer(raw, np.uint8).reshape(3, -1)
    assert d.labels.tolist() == rec[:, 0].tolist()
    assert d.images.shape == (3, 3, 32, 32) and d.images.dtype == np.float32
    # red plane first, row-major
    assert d.images[1, 0, 0, 1] == np.float32(rec[1, 2]) / np.float32(255)
    assert d.images[2, 1, 0, 0] == np.float32(rec[2, 1 + 1024]) / np.float32(255)
    assert d.images[0, 2, 31, 31] == np.float32(rec[0, 3072]) / np.float32(255)
    assert d.images.min() >= 0 and d.images.max() <= 1


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 4))
def test_parse_is_byte_exact(seed, n):
    raw = _records(np.random.default_rng(seed), n)
    assert data.encode_records(data.parse_records(raw)) == raw


def test_truncated_record():
    with pytest.raises(FormatError):
        data.parse_records(bytes(3072))
    with pytest.raises(FormatError):
        data.parse_records(b"")


def test_bad_label(rng):
    raw = bytearray(_records(rng, 2))
    raw[data.RECORD_BYTES] = 11
    with pytest.raises(LabelError):
        data.parse_records(bytes(raw))


def test_generic_loader_class_count(tmp_path, rng):
    p = tmp_path / "recs.bin"
    raw = bytearray(_records(rng, 4, classes=2))
    p.write_bytes(raw)
    d = data.load_records(p, classes=2)
    assert d.class_count == 2 and len(d) == 4
    raw[0] = 2
    p.write_bytes(raw)
    with pytest.raises(LabelError):
        data.load_records(p, classes=2)


def test_load_cifar10_layout(tmp_path, rng):
    for name in data.CIFAR10_TRAIN_FILES:
        (tmp_path / name).write_bytes(_records(rng, 7))
    with pytest.raises(FileNotFoundError):
        data.load_cifar10(tmp_path)
    (tmp_path / data.CIFAR10_TEST_FILE).write_bytes(_records(rng, 5))
    train, test = data.load_cifar10(tmp_path)
    assert (len(train), len(test), train.class_count) == (35, 5, 10)


@pytest.mark.skipif(not os.environ.get("FFNET_CIFAR10_DIR"), reason="FFNET_CIFAR10_DIR not set")
def test_real_cifar10():
    train, test = data.load_cifar10(os.environ["FFNET_CIFAR10_DIR"])
    assert (len(train), len(test), train.class_count) == (50000, 10000, 10)
    assert np.bincount(train.labels).tolist() == [5000] * 10


def test_validation_split():
    d = data.synthetic_dataset("noise", 20, 2, seed=0, image_shape=(3, 4, 4))
    tr, va = data.split_validation(d, 5)
    assert len(tr) == 15 and np.array_equal(va.images, d.images[15:])


def test_normalize_identity_and_errors():
    d = data.synthetic_dataset("noise", 10, 2, seed=0, image_shape=(3, 4, 4))
    same = data.normalize(d, (np.zeros(3), np.ones(3)))
    assert np.array_equal(same.images, d.images)
    const = data.Dataset(np.full((2, 3, 4, 4), 0.5, np.float32), np.array([0, 1]), 2)
    with pytest.raises(ValueError):
        data.normalize(const)
    with pytest.raises(ValueError):
        data.normalize(d, (np.full(3, np.nan), np.ones(3)))


def test_normalized_statistics():
    d = data.synthetic_dataset("noise", 200, 10, seed=3)
    out = data.normalize(d)
    x = out.images.astype(np.float64)
    assert np.all(np.abs(x.mean(axis=(0, 2, 3))) < 1e-6)
    assert np.all(np.abs(x.std(axis=(0, 2, 3)) - 1) < 1e-4)


def test_test_split_uses_training_stats():
    train = data.synthetic_dataset("noise", 50, 2, seed=1)
    test = data.synthetic_dataset("noise", 50, 2, seed=2)
    stats = data.channel_stats(train)
    a = data.normalize(test, stats)
    np.testing.assert_array_equal(a.mean, stats[0])
    other = data.synthetic_dataset("noise", 50, 2, seed=9)
    assert np.array_equal(data.channel_stats(train)[0], stats[0])
    assert not np.array_equal(data.channel_stats(other)[0], stats[0])


def test_ten_crop():
    img = np.random.default_rng(0).standard_normal((3, 32, 32)).astype(np.float32)
    crops = data.ten_crop(img)
    assert crops.shape == (10, 3, 32, 32)
    assert np.array_equal(crops[4], img)           # center of the padded image
    assert np.array_equal(crops[9], img[..., ::-1])
    assert np.array_equal(crops[0][:, 4:, 4:], img[:, :28, :28])
    assert not crops[0][:, :4].any()               # zero border
    for i in range(5):
        assert np.array_equal(crops[i + 5], crops[i][..., ::-1])
    batch = data.ten_crop(np.stack([img, img]))
    assert batch.shape == (10, 2, 3, 32, 32)


def test_ten_crop_edge_mode_constant_image():
    img = np.full((3, 32, 32), 0.3, np.float32)
    crops = data.ten_crop(img, mode="edge")
    assert all(np.array_equal(c, img) for c in crops)


def test_flip_involution(rng):
    img = rng.standard_normal((3, 32, 32))
    assert np.array_equal(data.flip(data.flip(img)), img)


def test_augment_deterministic_and_shape_preserving():
    d = data.synthetic_dataset("noise", 4, 2, seed=0)
    a = data.augment(d.images[0], np.random.default_rng(5))
    b = data.augment(d.images[0], np.random.default_rng(5))
    assert a.shape == (3, 32, 32) and np.array_equal(a, b)
    outs = {data.augment(d.images[0], np.random.default_rng(s)).tobytes() for s in range(20)}
    assert len(outs) > 1


def test_augment_is_a_shifted_window():
    img = np.arange(3 * 32 * 32, dtype=np.float32).reshape(3, 32, 32) + 1
    for s in range(10):
        out = data.augment(img, np.random.default_rng(s))
        padded = np.pad(img, ((0, 0), (4, 4), (4, 4)))
        views = [padded[:, t:t + 32, l:l + 32] for t in range(9) for l in range(9)]
        assert any(np.array_equal(out, v) or np.array_equal(out, v[..., ::-1]) for v in views)


def test_synthetic_datasets():
    a = data.synthetic_dataset("separable", 16, 2, seed=4)
    b = data.synthetic_dataset("separable", 16, 2, seed=4)
    assert np.array_equal(a.images, b.images) and np.array_equal(a.labels, b.labels)
    assert a.images.shape == (16, 3, 32, 32) and sorted(set(a.labels.tolist())) == [0, 1]
    n = data.synthetic_dataset("noise", 30, 3, seed=0)
    assert n.labels.max() < 3
    with pytest.raises(ValueError):
        data.synthetic_dataset("separable", 1, 2)
    with pytest.raises(ValueError):
        data.synthetic_dataset("stripes", 4, 2)
