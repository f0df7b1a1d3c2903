"""Labeled image batches for scoring.

Three sources: CIFAR-10 binary record files, the ``EPEB`` float64
container (for any other dataset export, e.g. CIFAR-100 or
ImageNet16-120), and synthetic Gaussian fixtures.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Tuple

import numpy as np

CIFAR10_RECORD = 3073
CIFAR10_SHAPE = (3, 32, 32)
CIFAR10_CLASSES = 10
# per-channel statistics of the CIFAR-10 training split, on the [0, 1] scale
CIFAR10_MEAN = (125.3 / 255, 123.0 / 255, 113.9 / 255)
CIFAR10_STD = (63.0 / 255, 62.1 / 255, 66.7 / 255)

EPEB_MAGIC = b"EPEB"
_EPEB_HEADER = struct.Struct("<4s5I")


class DataFormatError(ValueError):
    """File does not follow the expected binary layout."""


class DataRangeError(ValueError):
    """A value (label, sample count) is outside its valid range."""


@dataclass(frozen=True)
class LabeledBatch:
    images: np.ndarray
    labels: np.ndarray
    num_classes: int
    provenance: str = "synthetic"

    def __post_init__(self):
        images = np.ascontiguousarray(self.images, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if images.ndim != 4:
            raise ValueError(f"images must be [N,C,H,W], got shape {images.shape}")
        if labels.shape != (images.shape[0],):
            raise ValueError(f"{labels.size} labels for {images.shape[0]} images")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise DataRangeError(f"labels must lie in [0, {self.num_classes})")
        images.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def extent(self) -> int:
        return self.images.shape[2]

    @property
    def channels(self) -> int:
        return self.images.shape[1]


def _channel_stats(mean, std, channels: int) -> Tuple[np.ndarray, np.ndarray]:
    m = np.asarray(mean, dtype=np.float64).reshape(1, -1, 1, 1)
    s = np.asarray(std, dtype=np.float64).reshape(1, -1, 1, 1)
    if m.shape[1] != channels or s.shape[1] != channels:
        raise ValueError(f"need {channels} per-channel constants, got {m.shape[1]} means and {s.shape[1]} stds")
    if np.any(s <= 0):
        raise ValueError("standard deviations must be positive")
    return m, s


def standardize(images: np.ndarray, mean: Sequence[float] = CIFAR10_MEAN, std: Sequence[float] = CIFAR10_STD):
    m, s = _channel_stats(mean, std, images.shape[1])
    return (images - m) / s


def destandardize(images: np.ndarray, mean: Sequence[float] = CIFAR10_MEAN, std: Sequence[float] = CIFAR10_STD):
    m, s = _channel_stats(mean, std, images.shape[1])
    return images * s + m


def read_cifar10_records(path) -> Tuple[np.ndarray, np.ndarray]:
    """All records of a CIFAR-10 binary file as (uint8 images [N,3,32,32], labels)."""
    raw = Path(path).read_bytes()
    if len(raw) == 0 or len(raw) % CIFAR10_RECORD:
        raise DataFormatError(
            f"{path}: length {len(raw)} is not a positive multiple of the {CIFAR10_RECORD}-byte record"
        )
    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR10_RECORD)
    labels = records[:, 0].astype(np.int64)
    bad = np.flatnonzero(labels >= CIFAR10_CLASSES)
    if bad.size:
        raise DataRangeError(f"{path}: record {bad[0]} has label {labels[bad[0]]}, expected 0-9")
    return records[:, 1:].reshape(-1, *CIFAR10_SHAPE), labels


def load_cifar10_batch(
    path,
    n: int = 256,
    seed: int = 0,
    mean: Sequence[float] = CIFAR10_MEAN,
    std: Sequence[float] = CIFAR10_STD,
) -> LabeledBatch:
    """Sample ``n`` records without replacement, scale to [0, 1], standardize."""
    pixels, labels = read_cifar10_records(path)
    count = labels.size
    if not 1 <= n <= count:
        raise DataRangeError(f"{path}: cannot draw {n} records from {count}")
    idx = np.random.default_rng(seed).choice(count, size=n, replace=False)
    images = standardize(pixels[idx].astype(np.float64) / 255.0, mean, std)
    return LabeledBatch(images, labels[idx], CIFAR10_CLASSES, provenance="real")


def write_tensor_batch(path, batch: LabeledBatch) -> None:
    N, C, H, W = batch.images.shape
    with open(path, "wb") as fh:
        fh.write(_EPEB_HEADER.pack(EPEB_MAGIC, N, C, H, W, batch.num_classes))
        fh.write(batch.labels.astype("<u4").tobytes())
        fh.write(batch.images.astype("<f8").tobytes())


def load_tensor_batch(path, provenance: str = "real") -> LabeledBatch:
    raw = Path(path).read_bytes()
    if len(raw) < _EPEB_HEADER.size:
        raise DataFormatError(f"{path}: shorter than the {_EPEB_HEADER.size}-byte header")
    magic, N, C, H, W, K = _EPEB_HEADER.unpack_from(raw)
    if magic != EPEB_MAGIC:
        raise DataFormatError(f"{path}: bad magic {magic!r}, expected {EPEB_MAGIC!r}")
    if min(N, C, H, W) == 0:
        raise DataFormatError(f"{path}: empty batch in header ({N}x{C}x{H}x{W})")
    expected = _EPEB_HEADER.size + 4 * N + 8 * N * C * H * W
    if len(raw) != expected:
        raise DataFormatError(f"{path}: {len(raw)} bytes, header implies {expected}")
    off = _EPEB_HEADER.size
    labels = np.frombuffer(raw, dtype="<u4", count=N, offset=off).astype(np.int64)
    images = np.frombuffer(raw, dtype="<f8", count=N * C * H * W, offset=off + 4 * N).reshape(N, C, H, W)
    if labels.max() >= K:
        raise DataRangeError(f"{path}: label {labels.max()} outside [0, {K})")
    return LabeledBatch(images.astype(np.float64), labels, K, provenance=provenance)


def load_batch(path, n: int = 256, seed: int = 0, mean=CIFAR10_MEAN, std=CIFAR10_STD) -> LabeledBatch:
    """Dispatch on content: EPEB container by magic, else CIFAR-10 records.

    EPEB batches are used whole when ``n`` covers them, else subsampled.
    """
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == EPEB_MAGIC:
        batch = load_tensor_batch(path)
        if n >= len(batch):
            return batch
        idx = np.random.default_rng(seed).choice(len(batch), size=n, replace=False)
        return LabeledBatch(batch.images[idx], batch.labels[idx], batch.num_classes, batch.provenance)
    return load_cifar10_batch(path, n, seed, mean, std)


def synthetic_batch(
    n: int,
    num_classes: int,
    extent: int,
    seed: int = 0,
    offset: float = 1.0,
    channels: int = 3,
) -> LabeledBatch:
    """Unit Gaussian images whose mean is shifted by ``offset * label``.

    Labels are balanced (counts differ by at most one) and shuffled.
    """
    if num_classes < 1 or n < num_classes:
        raise DataRangeError(f"need n >= num_classes >= 1, got n={n}, num_classes={num_classes}")
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n) % num_classes)
    images = rng.standard_normal((n, channels, extent, extent))
    images += offset * labels.reshape(-1, 1, 1, 1)
    return LabeledBatch(images, labels, num_classes, provenance="synthetic")
