"""Datasets: MNIST IDX files, synthetic Gaussian blobs, mini-batching."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidInputError
from .rng import as_rng

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
SUBSET_SIZES = {"train": 10_000, "test": 2_000}


@dataclass
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise InvalidInputError(f"{self.inputs.shape[0]} inputs but {self.labels.shape[0]} labels")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise InvalidInputError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self):
        return self.labels.shape[0]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    def subset(self, index) -> "Dataset":
        return Dataset(self.inputs[index], self.labels[index], self.num_classes)

    def head(self, count: int) -> "Dataset":
        return self.subset(slice(0, count))


def _read_bytes(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _parse_header(raw: bytes, magic: int, ndim: int, path) -> tuple[int, ...]:
    size = 4 * (ndim + 1)
    if len(raw) < size:
        raise FormatError(f"{path}: truncated header", len(raw))
    fields = struct.unpack(f">{ndim + 1}I", raw[:size])
    if fields[0] != magic:
        raise FormatError(f"{path}: bad magic 0x{fields[0]:08x}, expected 0x{magic:08x}", 0)
    dims = fields[1:]
    expected = size + int(np.prod(dims))
    if len(raw) < expected:
        raise FormatError(f"{path}: truncated payload, {len(raw)} of {expected} bytes", len(raw))
    if len(raw) > expected:
        raise FormatError(f"{path}: {len(raw) - expected} trailing bytes", expected)
    return dims


def read_idx_images(path) -> np.ndarray:
    """Raw ``uint8`` images, shape (count, rows, cols)."""
    raw = _read_bytes(path)
    dims = _parse_header(raw, IMAGE_MAGIC, 3, path)
    return np.frombuffer(raw, dtype=np.uint8, offset=16).reshape(dims)


def read_idx_labels(path) -> np.ndarray:
    raw = _read_bytes(path)
    (count,) = _parse_header(raw, LABEL_MAGIC, 1, path)
    return np.frombuffer(raw, dtype=np.uint8, offset=8).copy()


def load_idx(images_path, labels_path, num_classes: int = 10) -> Dataset:
    """Load an IDX image/label pair; pixels are flattened and scaled by 1/255."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(f"{images.shape[0]} images but {labels.shape[0]} labels", 4)
    if labels.size and labels.max() >= num_classes:
        raise FormatError(f"label {labels.max()} outside [0, {num_classes})", 8 + int(np.argmax(labels)))
    inputs = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(inputs, labels.astype(np.int64), num_classes)


def write_idx(images, labels, images_path, labels_path) -> None:
    """Write uint8 images (count, rows, cols) and labels in IDX format."""
    images = np.asarray(images)
    labels = np.asarray(labels)
    if images.ndim != 3:
        raise InvalidInputError("images must have shape (count, rows, cols)")
    if images.dtype != np.uint8 or labels.dtype != np.uint8:
        images = _to_uint8(images, "images")
        labels = _to_uint8(labels, "labels")
    Path(images_path).write_bytes(struct.pack(">4I", IMAGE_MAGIC, *images.shape) + images.tobytes())
    Path(labels_path).write_bytes(struct.pack(">2I", LABEL_MAGIC, labels.shape[0]) + labels.tobytes())


def _to_uint8(a, name):
    a = np.asarray(a)
    if a.size and (a.min() < 0 or a.max() > 255 or np.any(a != np.round(a))):
        raise InvalidInputError(f"{name} must hold integers in [0, 255]")
    return a.astype(np.uint8)


def _find(directory: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz", stem.replace("-idx", ".idx")):
        if (directory / name).exists():
            return directory / name
    raise FileNotFoundError(f"no {stem}[.gz] in {directory}")


def load_mnist(directory, split: str = "train", full: bool = False) -> Dataset:
    """MNIST split from a directory holding the standard four IDX files.

    Unless ``full`` is set only the first 10k training / 2k test images are kept.
    """
    if split not in MNIST_FILES:
        raise InvalidInputError(f"split must be 'train' or 'test', got {split!r}")
    directory = Path(directory)
    img, lab = MNIST_FILES[split]
    data = load_idx(_find(directory, img), _find(directory, lab))
    return data if full else data.head(SUBSET_SIZES[split])


def synthetic_blobs(classes: int, per_class: int, dim: int, separation: float, rng=None) -> Dataset:
    """Unit-variance Gaussian clusters whose centres are ``separation`` apart.

    Centres sit at ``separation / sqrt(2)`` along random orthonormal
    directions, so every pair is exactly ``separation`` apart when
    ``classes <= dim``; otherwise random unit directions are used.
    """
    if classes < 2:
        raise InvalidInputError("need at least 2 classes")
    rng = as_rng(rng)
    raw = rng.normal((dim, classes))
    if classes <= dim:
        directions, _ = np.linalg.qr(raw)
    else:
        directions = raw / np.linalg.norm(raw, axis=0, keepdims=True)
    centers = directions.T * (separation / np.sqrt(2.0))
    labels = np.repeat(np.arange(classes), per_class)
    inputs = centers[labels] + rng.normal((labels.size, dim))
    order = rng.permutation(labels.size)
    return Dataset(inputs[order], labels[order], classes)


def batches(count: int, batch_size: int, rng=None) -> list[np.ndarray]:
    """Shuffled index batches covering ``range(count)``; the last may be short."""
    if batch_size < 1:
        raise InvalidInputError("batch_size must be >= 1")
    order = as_rng(rng).permutation(int(count))
    return [order[i:i + batch_size] for i in range(0, count, batch_size)]


def train_test_split(data: Dataset, test_fraction: float, rng=None) -> tuple[Dataset, Dataset]:
    order = as_rng(rng).permutation(len(data))
    cut = len(data) - int(round(test_fraction * len(data)))
    return data.subset(order[:cut]), data.subset(order[cut:])
