"""Dataset loading for the trainer: IDX files plus a small bundled surrogate.

The trainer talks to the inference engine only through files, so it
carries its own minimal IDX reader/writer pair instead of importing the
engine package.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class DatasetError(ValueError):
    """Missing or malformed dataset files."""


@dataclass(frozen=True)
class Dataset:
    """Train/test split of grayscale images with integer class labels."""

    train_images: np.ndarray
    train_labels: np.ndarray
    test_images: np.ndarray
    test_labels: np.ndarray

    def __post_init__(self):
        for images, labels, split in (
            (self.train_images, self.train_labels, "train"),
            (self.test_images, self.test_labels, "test"),
        ):
            if images.ndim != 3:
                raise DatasetError(f"{split} images must be [n, height, width]")
            if len(images) != len(labels):
                raise DatasetError(
                    f"{split}: {len(images)} images but {len(labels)} labels"
                )
        if self.train_images.shape[1:] != self.test_images.shape[1:]:
            raise DatasetError("train and test image shapes differ")

    @property
    def image_shape(self) -> tuple[int, int]:
        return self.train_images.shape[1], self.train_images.shape[2]

    def limited(self, n_train: int | None, n_test: int | None) -> "Dataset":
        return Dataset(
            self.train_images[:n_train],
            self.train_labels[:n_train],
            self.test_images[:n_test],
            self.test_labels[:n_test],
        )


def read_idx_images(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as f:
        buf = f.read()
    if len(buf) < 16:
        raise DatasetError(f"{path}: truncated IDX header")
    magic, n, rows, cols = struct.unpack(">IIII", buf[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise DatasetError(f"{path}: bad IDX image magic 0x{magic:08x}")
    if len(buf) != 16 + n * rows * cols:
        raise DatasetError(f"{path}: size does not match header")
    return np.frombuffer(buf, dtype=np.uint8, offset=16).reshape(n, rows, cols)


def read_idx_labels(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as f:
        buf = f.read()
    if len(buf) < 8:
        raise DatasetError(f"{path}: truncated IDX header")
    magic, n = struct.unpack(">II", buf[:8])
    if magic != IDX_LABELS_MAGIC:
        raise DatasetError(f"{path}: bad IDX label magic 0x{magic:08x}")
    if len(buf) != 8 + n:
        raise DatasetError(f"{path}: size does not match header")
    labels = np.frombuffer(buf, dtype=np.uint8, offset=8)
    if labels.size and labels.max() > 9:
        raise DatasetError(f"{path}: labels outside [0, 9]")
    return labels


def write_idx_images(path: str | os.PathLike, images: np.ndarray) -> None:
    images = np.ascontiguousarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols))
        f.write(images.tobytes())


def write_idx_labels(path: str | os.PathLike, labels: np.ndarray) -> None:
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)))
        f.write(labels.tobytes())


def load_idx_dataset(directory: str | os.PathLike) -> Dataset:
    """Load the four standard MNIST-layout IDX files from a directory."""
    paths = {
        name: os.path.join(directory, name)
        for name in (
            "train-images-idx3-ubyte",
            "train-labels-idx1-ubyte",
            "t10k-images-idx3-ubyte",
            "t10k-labels-idx1-ubyte",
        )
    }
    missing = [p for p in paths.values() if not os.path.exists(p)]
    if missing:
        raise DatasetError(f"missing IDX files: {missing}")
    return Dataset(
        read_idx_images(paths["train-images-idx3-ubyte"]),
        read_idx_labels(paths["train-labels-idx1-ubyte"]),
        read_idx_images(paths["t10k-images-idx3-ubyte"]),
        read_idx_labels(paths["t10k-labels-idx1-ubyte"]),
    )


def load_digits_dataset(test_fraction: float = 0.25, seed: int = 0) -> Dataset:
    """The sklearn 8x8 digits set, rescaled to uint8, as a desk-scale stand-in."""
    try:
        from sklearn.datasets import load_digits
    except ImportError as exc:
        raise DatasetError("scikit-learn is required for the digits dataset") from exc
    digits = load_digits()
    images = np.rint(digits.images * (255.0 / 16.0)).astype(np.uint8)
    labels = digits.target.astype(np.uint8)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(images))
    images, labels = images[order], labels[order]
    n_test = int(len(images) * test_fraction)
    return Dataset(images[n_test:], labels[n_test:], images[:n_test], labels[:n_test])
