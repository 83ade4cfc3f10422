"""
sdq_data.py
Dataset module for the SDQ optimization toolkit.

This module provides functionality for:
- Parsing MNIST IDX image and label files (uncompressed)
- Writing IDX fixtures
- Generating seeded synthetic Gaussian blobs
- Drawing disjoint seeded train/test subsets

MNIST files must be decompressed by the user before loading; the reader
never opens .gz archives.

IDX layout (big-endian):
    images: magic 0x00000803, n, rows, cols (uint32 each), then n*rows*cols bytes
    labels: magic 0x00000801, n (uint32 each), then n bytes

Version: 1.0.0
"""

import os
import struct
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .sdq_errors import (
    DataConsistencyError,
    DataFormatError,
    DataLengthError,
    InvalidConfigError,
    InvalidInputError,
)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
IDX_IMAGES_HEADER = 16
IDX_LABELS_HEADER = 8
PIXEL_SCALE = 255.0
MNIST_CLASSES = 10

# Accepted file names per split; both spellings circulate
MNIST_FILES = {
    'train': (('train-images-idx3-ubyte', 'train-images.idx3-ubyte'),
              ('train-labels-idx1-ubyte', 'train-labels.idx1-ubyte')),
    't10k': (('t10k-images-idx3-ubyte', 't10k-images.idx3-ubyte'),
             ('t10k-labels-idx1-ubyte', 't10k-labels.idx1-ubyte')),
}


@dataclass(frozen=True)
class Dataset:
    """
    Immutable in-memory classification data.

    Attributes:
        features: (n, d) float64 matrix
        labels: (n,) int64 class indices
        num_classes: Number of classes C; every label is < C
    """
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64)
        features.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, 'features', features)
        object.__setattr__(self, 'labels', labels)
        self.validate()

    def validate(self) -> None:
        if self.features.ndim != 2:
            raise InvalidInputError(f"features must be a matrix, got shape {self.features.shape}")
        if self.labels.ndim != 1 or self.labels.shape[0] != self.features.shape[0]:
            raise InvalidInputError(
                f"labels shape {self.labels.shape} does not match {self.features.shape[0]} feature rows"
            )
        if int(self.num_classes) < 1:
            raise InvalidInputError(f"num_classes must be positive, got {self.num_classes}")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise InvalidInputError(f"labels must lie in [0, {self.num_classes})")
        if not np.all(np.isfinite(self.features)):
            raise InvalidInputError("features contain non-finite values")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


def _read_blob(path: str) -> bytes:
    with open(path, 'rb') as f:
        return f.read()


def _check_magic(blob: bytes, expected: int, path: str) -> None:
    if len(blob) < 4:
        raise DataLengthError(f"{path}: file ends at offset {len(blob)} before the magic number",
                              offset=len(blob))
    found = struct.unpack('>I', blob[:4])[0]
    if found != expected:
        raise DataFormatError(
            f"{path}: bad magic number at offset 0: expected 0x{expected:08X}, found 0x{found:08X}",
            offset=0, expected=expected, found=found
        )


def parse_idx_images(blob: bytes, path: str = '<bytes>') -> np.ndarray:
    """Decode an IDX image blob into an (n, rows*cols) matrix scaled to [0, 1]."""
    _check_magic(blob, IDX_IMAGES_MAGIC, path)
    if len(blob) < IDX_IMAGES_HEADER:
        raise DataLengthError(f"{path}: header truncated at offset {len(blob)}", offset=len(blob))

    n, rows, cols = struct.unpack('>III', blob[4:IDX_IMAGES_HEADER])
    expected = n * rows * cols
    available = len(blob) - IDX_IMAGES_HEADER
    if available < expected:
        raise DataLengthError(
            f"{path}: expected {expected} pixel bytes after offset {IDX_IMAGES_HEADER}, found {available}",
            offset=len(blob), expected=expected, found=available
        )

    pixels = np.frombuffer(blob, dtype=np.uint8, count=expected, offset=IDX_IMAGES_HEADER)
    return pixels.reshape(n, rows * cols).astype(np.float64) / PIXEL_SCALE


def parse_idx_labels(blob: bytes, path: str = '<bytes>') -> np.ndarray:
    """Decode an IDX label blob into an int64 vector."""
    _check_magic(blob, IDX_LABELS_MAGIC, path)
    if len(blob) < IDX_LABELS_HEADER:
        raise DataLengthError(f"{path}: header truncated at offset {len(blob)}", offset=len(blob))

    n = struct.unpack('>I', blob[4:IDX_LABELS_HEADER])[0]
    available = len(blob) - IDX_LABELS_HEADER
    if available < n:
        raise DataLengthError(
            f"{path}: expected {n} label bytes after offset {IDX_LABELS_HEADER}, found {available}",
            offset=len(blob), expected=n, found=available
        )
    return np.frombuffer(blob, dtype=np.uint8, count=n, offset=IDX_LABELS_HEADER).astype(np.int64)


def load_idx_images(path: str) -> np.ndarray:
    """
    Load an uncompressed IDX image file.

    Returns:
        np.ndarray: (n, rows*cols) float64 matrix with values in [0, 1]

    Raises:
        FileNotFoundError: The file does not exist
        DataFormatError: Wrong magic number
        DataLengthError: File shorter than its header announces
    """
    return parse_idx_images(_read_blob(path), path)


def load_idx_labels(path: str) -> np.ndarray:
    """Load an uncompressed IDX label file as an int64 vector."""
    return parse_idx_labels(_read_blob(path), path)


def _find_file(directory: str, candidates: Tuple[str, ...]) -> str:
    for name in candidates:
        path = os.path.join(directory, name)
        if os.path.isfile(path):
            return path
    raise FileNotFoundError(f"None of {', '.join(candidates)} found in {directory}")


def mnist_paths(directory: str, kind: str = 'train') -> Tuple[str, str]:
    """Locate the image and label files of one MNIST split."""
    if kind not in MNIST_FILES:
        raise InvalidConfigError(f"unknown MNIST split '{kind}', expected one of {sorted(MNIST_FILES)}")
    image_names, label_names = MNIST_FILES[kind]
    return _find_file(directory, image_names), _find_file(directory, label_names)


def load_mnist(directory: str, kind: str = 'train') -> Dataset:
    """
    Load one MNIST split from a directory of uncompressed IDX files.

    Raises:
        FileNotFoundError: A file of the split is missing
        DataConsistencyError: Image and label counts differ
        DataFormatError: A label is not a digit class
    """
    image_path, label_path = mnist_paths(directory, kind)
    logging.info(f"Loading MNIST {kind} split from {directory}")

    images = load_idx_images(image_path)
    labels = load_idx_labels(label_path)
    if images.shape[0] != labels.shape[0]:
        raise DataConsistencyError(
            f"{image_path} holds {images.shape[0]} images but {label_path} holds {labels.shape[0]} labels",
            expected=images.shape[0], found=labels.shape[0]
        )

    out_of_range = np.flatnonzero(labels >= MNIST_CLASSES)
    if out_of_range.size:
        i = int(out_of_range[0])
        raise DataFormatError(
            f"{label_path}: label {labels[i]} of item {i} is not a digit class",
            offset=IDX_LABELS_HEADER + i, expected=MNIST_CLASSES - 1, found=int(labels[i])
        )

    logging.info(f"Loaded {images.shape[0]:,} images of {images.shape[1]} pixels")
    return Dataset(images, labels, MNIST_CLASSES)


def write_idx_images(path: str, features: np.ndarray, rows: int, cols: int) -> None:
    """Write features in [0, 1] as an IDX image file (quantized to bytes)."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != rows * cols:
        raise InvalidInputError(f"features of shape {features.shape} cannot be stored as {rows}x{cols} images")
    pixels = np.clip(np.rint(features * PIXEL_SCALE), 0, 255).astype(np.uint8)
    with open(path, 'wb') as f:
        f.write(struct.pack('>IIII', IDX_IMAGES_MAGIC, features.shape[0], rows, cols))
        f.write(pixels.tobytes())


def write_idx_labels(path: str, labels: np.ndarray) -> None:
    """Write class indices (0..255) as an IDX label file."""
    labels = np.asarray(labels)
    if labels.ndim != 1 or (labels.size and (labels.min() < 0 or labels.max() > 255)):
        raise InvalidInputError("labels must be a vector of values in [0, 255]")
    with open(path, 'wb') as f:
        f.write(struct.pack('>II', IDX_LABELS_MAGIC, labels.shape[0]))
        f.write(labels.astype(np.uint8).tobytes())


def _blob_centers(num_classes: int, d: int, separation: float) -> np.ndarray:
    centers = np.zeros((num_classes, d))
    if d == 1:
        centers[:, 0] = separation * (np.arange(num_classes) - (num_classes - 1) / 2.0)
        return centers
    angles = 2.0 * np.pi * np.arange(num_classes) / num_classes
    centers[:, 0] = separation * np.cos(angles)
    centers[:, 1] = separation * np.sin(angles)
    return centers


def synthetic_blobs(n_per_class: int, num_classes: int, d: int,
                    separation: float, seed: int) -> Dataset:
    """
    Seeded Gaussian blobs with unit variance.

    Class centers sit on a circle of radius `separation` in the first two
    coordinates (on a line when d == 1), so classes are distinct points.
    """
    if d < 1:
        raise InvalidConfigError(f"blob dimension must be at least 1, got {d}")
    if n_per_class < 1 or num_classes < 1:
        raise InvalidConfigError(
            f"n_per_class and num_classes must be positive, got {n_per_class} and {num_classes}"
        )

    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(num_classes), n_per_class)
    centers = _blob_centers(num_classes, d, separation)
    features = centers[labels] + rng.standard_normal((labels.shape[0], d))
    return Dataset(features, labels, num_classes)


def subset_indices(n: int, n_train: int, n_test: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Disjoint seeded index sets of sizes n_train and n_test drawn from range(n)."""
    if n_train < 0 or n_test < 0:
        raise InvalidConfigError(f"subset sizes must be non-negative, got {n_train} and {n_test}")
    if n_train + n_test > n:
        raise InvalidConfigError(f"cannot draw {n_train} + {n_test} examples from a dataset of {n}")
    perm = np.random.default_rng(seed).permutation(n)
    return perm[:n_train], perm[n_train:n_train + n_test]


def subset(dataset: Dataset, n_train: int, n_test: int, seed: int) -> Tuple[Dataset, Dataset]:
    """Split a dataset into disjoint seeded train and test samples."""
    train_idx, test_idx = subset_indices(dataset.n, n_train, n_test, seed)
    train = Dataset(dataset.features[train_idx], dataset.labels[train_idx], dataset.num_classes)
    test = Dataset(dataset.features[test_idx], dataset.labels[test_idx], dataset.num_classes)
    return train, test
