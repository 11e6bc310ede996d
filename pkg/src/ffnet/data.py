"""Datasets: CIFAR-10 binary batches, synthetic sets, normalization and
crop/flip augmentation.

Binary records follow the CIFAR-10 layout: one label byte followed by 1024
red, 1024 green and 1024 blue bytes (row-major 32x32 planes).
"""
from __future__ import annotations

import os
from dataclasses import dataclass, replace

import numpy as np

from .errors import FormatError, LabelError, ShapeError
from .tensor import make_rng

RECORD_PIXELS = 3 * 32 * 32
RECORD_BYTES = 1 + RECORD_PIXELS
CIFAR10_TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
CIFAR10_TEST_FILE = "test_batch.bin"
AUGMENT_PAD = 4


@dataclass
class Dataset:
    images: np.ndarray          # (n, c, h, w) float32
    labels: np.ndarray          # (n,) int64
    class_count: int
    mean: np.ndarray | None = None  # per-channel statistics, set by normalize()
    std: np.ndarray | None = None

    def __post_init__(self):
        if self.images.ndim != 4 or self.images.shape[0] != self.labels.shape[0]:
            raise ShapeError(f"images {self.images.shape} and labels {self.labels.shape} disagree")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise LabelError(f"labels must lie in [0, {self.class_count})")

    def __len__(self):
        return self.labels.shape[0]

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def subset(self, index) -> "Dataset":
        return replace(self, images=self.images[index], labels=self.labels[index])


# -- binary records ----------------------------------------------------------

def parse_records(raw: bytes, classes: int = 10, source: str = "<bytes>") -> Dataset:
    if len(raw) == 0 or len(raw) % RECORD_BYTES:
        raise FormatError(f"{source}: size {len(raw)} is not a positive multiple of {RECORD_BYTES}")
    rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, RECORD_BYTES)
    labels = rec[:, 0].astype(np.int64)
    if labels.max() >= classes:
        bad = int(np.argmax(labels >= classes))
        raise LabelError(f"{source}: record {bad} has label {labels[bad]} >= {classes}")
    images = rec[:, 1:].reshape(-1, 3, 32, 32).astype(np.float32) / np.float32(255)
    return Dataset(images, labels, classes)


def encode_records(d: Dataset) -> bytes:
    """Inverse of :func:`parse_records` for datasets holding raw ``[0, 1]`` pixels."""
    if d.image_shape != (3, 32, 32):
        raise ShapeError(f"records hold 3x32x32 images, got {d.image_shape}")
    px = np.rint(d.images * 255).astype(np.uint8).reshape(len(d), -1)
    out = np.empty((len(d), RECORD_BYTES), dtype=np.uint8)
    out[:, 0] = d.labels
    out[:, 1:] = px
    return out.tobytes()


def load_records(path, classes: int = 10) -> Dataset:
    with open(path, "rb") as f:
        raw = f.read()
    return parse_records(raw, classes, source=os.fspath(path))


def _concat(parts: list[Dataset]) -> Dataset:
    return Dataset(np.concatenate([p.images for p in parts]),
                   np.concatenate([p.labels for p in parts]), parts[0].class_count)


def load_cifar10(dir_path) -> tuple[Dataset, Dataset]:
    """Load ``data_batch_{1..5}.bin`` and ``test_batch.bin`` from ``dir_path``."""
    for name in CIFAR10_TRAIN_FILES + (CIFAR10_TEST_FILE,):
        if not os.path.isfile(os.path.join(dir_path, name)):
            raise FileNotFoundError(f"missing CIFAR-10 batch file {os.path.join(dir_path, name)}")
    train = _concat([load_records(os.path.join(dir_path, n)) for n in CIFAR10_TRAIN_FILES])
    test = load_records(os.path.join(dir_path, CIFAR10_TEST_FILE))
    return train, test


def split_validation(train: Dataset, n_val: int = 5000) -> tuple[Dataset, Dataset]:
    """Hold out the last ``n_val`` training samples."""
    if not 0 < n_val < len(train):
        raise ValueError(f"cannot hold out {n_val} of {len(train)} samples")
    cut = len(train) - n_val
    return train.subset(slice(0, cut)), train.subset(slice(cut, None))


# -- normalization -----------------------------------------------------------

def channel_stats(d: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean and (population) std, accumulated in float64."""
    x = d.images.astype(np.float64)
    return x.mean(axis=(0, 2, 3)), x.std(axis=(0, 2, 3))


def normalize(d: Dataset, stats=None) -> Dataset:
    """Per-channel ``(x - mean) / std``; ``stats`` defaults to ``d``'s own.

    Pass the training split's stats when normalizing a test split.
    """
    mean, std = channel_stats(d) if stats is None else (np.asarray(s, dtype=np.float64) for s in stats)
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(std))):
        raise ValueError("normalization statistics must be finite")
    if np.any(std <= 0):
        raise ValueError(f"zero standard deviation in channel(s) {np.flatnonzero(std <= 0).tolist()}")
    x = (d.images.astype(np.float64) - mean[None, :, None, None]) / std[None, :, None, None]
    return replace(d, images=x.astype(np.float32), mean=mean, std=std)


# -- augmentation ------------------------------------------------------------

def flip(image: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(image[..., ::-1])


def _pad(images: np.ndarray, pad: int, mode: str) -> np.ndarray:
    widths = [(0, 0)] * (images.ndim - 2) + [(pad, pad), (pad, pad)]
    return np.pad(images, widths, mode=mode)


def augment(image: np.ndarray, rng: np.random.Generator, pad: int = AUGMENT_PAD) -> np.ndarray:
    """Zero-pad by ``pad``, take a random crop of the original size, flip with p=0.5.

    Consumes exactly three draws from ``rng``: top offset, left offset, flip.
    """
    c, h, w = image.shape
    padded = _pad(image, pad, "constant")
    top = int(rng.integers(0, 2 * pad + 1))
    left = int(rng.integers(0, 2 * pad + 1))
    out = padded[:, top:top + h, left:left + w]
    if rng.random() < 0.5:
        out = out[..., ::-1]
    return np.ascontiguousarray(out)


def ten_crop_offsets(pad: int = AUGMENT_PAD) -> list[tuple[int, int]]:
    """Top-left offsets into the padded image: four corners, then center."""
    return [(0, 0), (0, 2 * pad), (2 * pad, 0), (2 * pad, 2 * pad), (pad, pad)]


def ten_crop(images: np.ndarray, pad: int = AUGMENT_PAD, mode: str = "constant") -> np.ndarray:
    """Four corner crops and the center crop of the padded image, then their mirrors.

    Accepts one image ``(c, h, w)`` or a batch ``(n, c, h, w)`` and returns
    ``(10, c, h, w)`` or ``(10, n, c, h, w)`` respectively.  ``mode`` is the
    ``numpy.pad`` mode used for the border (``"constant"`` zero-pads).
    """
    h, w = images.shape[-2:]
    padded = _pad(images, pad, mode)
    crops = [padded[..., t:t + h, l:l + w] for t, l in ten_crop_offsets(pad)]
    crops += [c[..., ::-1] for c in crops]
    return np.ascontiguousarray(np.stack(crops))


# -- synthetic data ----------------------------------------------------------

def synthetic_dataset(kind: str, n: int, classes: int, seed: int = 0,
                      image_shape=(3, 32, 32), noise: float = 0.1) -> Dataset:
    """Test datasets.

    ``separable``: each class has a fixed random per-channel colour; an image
    is its class colour plus small Gaussian noise.  Labels cycle through the
    classes so every class is represented.
    ``noise``: uniform random pixels with independent uniform random labels.
    """
    if n < classes:
        raise ValueError(f"need n >= classes, got n={n}, classes={classes}")
    rng = make_rng(seed)
    c, h, w = image_shape
    if kind == "separable":
        colors = rng.uniform(0.0, 1.0, size=(classes, c))
        labels = np.arange(n, dtype=np.int64) % classes
        rng.shuffle(labels)
        images = colors[labels][:, :, None, None] + noise * rng.standard_normal((n, c, h, w))
        images = np.clip(images, 0.0, 1.0)
    elif kind == "noise":
        images = rng.uniform(0.0, 1.0, size=(n, c, h, w))
        labels = rng.integers(0, classes, size=n)
    else:
        raise ValueError(f"unknown synthetic kind {kind!r}")
    return Dataset(images.astype(np.float32), labels.astype(np.int64), classes)
