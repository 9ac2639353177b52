"""MNIST (IDX) and CIFAR-10 (binary batch) loading, plus deterministic batching.

Pixels are scaled to [0, 1] by dividing by 255; nothing else is done to them.
Writers for both formats are included for building test fixtures.
"""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import ConfigError, DataError, FormatError

IDX_IMAGE_MAGIC = 2051
IDX_LABEL_MAGIC = 2049
MNIST_SIDE = 28
CIFAR_SIDE = 32
CIFAR_RECORD = 1 + 3 * CIFAR_SIDE * CIFAR_SIDE
N_CLASSES = 10

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
CIFAR_FILES = {
    "train": tuple(f"data_batch_{i}.bin" for i in range(1, 6)),
    "test": ("test_batch.bin",),
}
DATA_DIR_ENV = "DVLR_DATA_DIR"


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray  # N x C x H x W, float64 in [0, 1]
    labels: np.ndarray  # N, int64 in [0, 10)
    split: str
    name: str = ""

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise DataError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices)
        return Dataset(self.images[idx], self.labels[idx], self.split, self.name)


def default_data_dir() -> Path | None:
    value = os.environ.get(DATA_DIR_ENV)
    return Path(value) if value else None


def _read_bytes(path: Path) -> bytes:
    if path.exists():
        return path.read_bytes()
    gz = path.with_name(path.name + ".gz")
    if gz.exists():
        try:
            return gzip.decompress(gz.read_bytes())
        except (OSError, EOFError) as exc:
            raise FormatError(f"corrupt gzip stream: {exc}", gz) from exc
    raise DataError(f"dataset file not found: {path} (or {gz.name})")


def _find(root: Path, names: tuple[str, ...], subdirs: tuple[str, ...]) -> Path:
    for sub in ("",) + subdirs:
        base = root / sub if sub else root
        if all((base / n).exists() or (base / (n + ".gz")).exists() for n in names):
            return base
    return root


def parse_idx(raw: bytes, expected_magic: int, path=None) -> np.ndarray:
    """Decode an unsigned-byte IDX container into an array of its dimensions."""
    if len(raw) < 8:
        raise FormatError(f"file too short for an IDX header ({len(raw)} bytes)", path, len(raw))
    magic = struct.unpack_from(">i", raw, 0)[0]
    if magic != expected_magic:
        raise FormatError(f"bad magic {magic}, expected {expected_magic}", path, 0)
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError(f"header needs {header} bytes, file has {len(raw)}", path, len(raw))
    dims = struct.unpack_from(f">{ndim}i", raw, 4)
    for i, d in enumerate(dims):
        if d < 0:
            raise FormatError(f"negative dimension {d}", path, 4 + 4 * i)
    payload = int(np.prod(dims, dtype=np.int64))
    if len(raw) != header + payload:
        raise FormatError(
            f"payload is {len(raw) - header} bytes, header promises {payload}",
            path, min(len(raw), header + payload))
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def decode_mnist(image_raw: bytes, label_raw: bytes, split: str = "train",
                 image_path=None, label_path=None) -> Dataset:
    images = parse_idx(image_raw, IDX_IMAGE_MAGIC, image_path)
    labels = parse_idx(label_raw, IDX_LABEL_MAGIC, label_path)
    if images.shape[1:] != (MNIST_SIDE, MNIST_SIDE):
        raise FormatError(f"images are {images.shape[1:]}, expected 28x28", image_path, 8)
    if labels.shape[0] != images.shape[0]:
        raise FormatError(f"{labels.shape[0]} labels for {images.shape[0]} images", label_path, 4)
    bad = np.flatnonzero(labels >= N_CLASSES)
    if bad.size:
        raise FormatError(f"label {labels[bad[0]]} out of range", label_path, 8 + int(bad[0]))
    x = images.astype(np.float64)[:, None, :, :] / 255.0
    return Dataset(x, labels.astype(np.int64), split, "mnist")


def load_mnist(directory, split: str) -> Dataset:
    """Read ``train-*`` or ``t10k-*`` IDX files (optionally gzipped)."""
    if split not in MNIST_FILES:
        raise ConfigError(f"split must be 'train' or 'test', got {split!r}")
    root = _find(Path(directory), MNIST_FILES[split], ("mnist", "MNIST", "MNIST/raw"))
    img_path, lbl_path = (root / n for n in MNIST_FILES[split])
    return decode_mnist(_read_bytes(img_path), _read_bytes(lbl_path), split, img_path, lbl_path)


def decode_cifar(raw: bytes, path=None) -> tuple[np.ndarray, np.ndarray]:
    if len(raw) == 0 or len(raw) % CIFAR_RECORD:
        raise FormatError(
            f"length {len(raw)} is not a positive multiple of the {CIFAR_RECORD}-byte record",
            path, len(raw) - len(raw) % CIFAR_RECORD)
    rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = rec[:, 0]
    bad = np.flatnonzero(labels >= N_CLASSES)
    if bad.size:
        raise FormatError(f"label {labels[bad[0]]} out of range", path, int(bad[0]) * CIFAR_RECORD)
    images = rec[:, 1:].reshape(-1, 3, CIFAR_SIDE, CIFAR_SIDE)
    return images, labels


def load_cifar10(directory, split: str) -> Dataset:
    """Read CIFAR-10 binary batches; train concatenates data_batch_1..5 in order."""
    if split not in CIFAR_FILES:
        raise ConfigError(f"split must be 'train' or 'test', got {split!r}")
    root = _find(Path(directory), CIFAR_FILES[split], ("cifar-10-batches-bin", "cifar10"))
    images, labels = [], []
    for name in CIFAR_FILES[split]:
        path = root / name
        x, y = decode_cifar(_read_bytes(path), path)
        images.append(x)
        labels.append(y)
    x = np.concatenate(images).astype(np.float64) / 255.0
    return Dataset(x, np.concatenate(labels).astype(np.int64), split, "cifar10")


def load_dataset(name: str, split: str, directory=None) -> Dataset:
    directory = directory or default_data_dir()
    if directory is None:
        raise DataError(f"no data directory given and {DATA_DIR_ENV} is not set")
    if name == "mnist":
        return load_mnist(directory, split)
    if name == "cifar10":
        return load_cifar10(directory, split)
    raise ConfigError(f"unknown dataset {name!r}")


def encode_idx(array: np.ndarray, magic: int) -> bytes:
    array = np.asarray(array, dtype=np.uint8)
    if magic & 0xFF != array.ndim:
        raise ConfigError(f"magic {magic} implies {magic & 0xFF} dims, array has {array.ndim}")
    return struct.pack(f">i{array.ndim}i", magic, *array.shape) + array.tobytes()


def write_mnist(directory, split: str, images: np.ndarray, labels: np.ndarray) -> None:
    """Write uint8 ``images`` (N x 28 x 28) and ``labels`` as IDX files."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    img_name, lbl_name = MNIST_FILES[split]
    (directory / img_name).write_bytes(encode_idx(images, IDX_IMAGE_MAGIC))
    (directory / lbl_name).write_bytes(encode_idx(labels, IDX_LABEL_MAGIC))


def encode_cifar(images: np.ndarray, labels: np.ndarray) -> bytes:
    images = np.asarray(images, dtype=np.uint8).reshape(len(labels), -1)
    rec = np.concatenate([np.asarray(labels, dtype=np.uint8)[:, None], images], axis=1)
    return rec.tobytes()


def write_cifar10(directory, split: str, images: np.ndarray, labels: np.ndarray) -> None:
    """Write uint8 ``images`` (N x 3 x 32 x 32); train data is split over five files."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = CIFAR_FILES[split]
    for name, idx in zip(names, np.array_split(np.arange(len(labels)), len(names))):
        (directory / name).write_bytes(encode_cifar(images[idx], labels[idx]))


def batch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    ss = np.random.SeedSequence(seed, spawn_key=(0x5348, epoch))
    return np.random.Generator(np.random.PCG64(ss)).permutation(n)


def make_batches(dataset: Dataset, batch_size: int, seed: int, epoch: int,
                 drop_last: bool = False) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield ``(images, labels)`` batches of a per-(seed, epoch) permutation."""
    n = len(dataset)
    if batch_size < 1:
        raise ConfigError(f"batch_size must be positive, got {batch_size}")
    if batch_size > n:
        raise ConfigError(f"batch_size {batch_size} exceeds dataset size {n}")
    order = batch_order(n, seed, epoch)
    stop = n - n % batch_size if drop_last else n
    for start in range(0, stop, batch_size):
        idx = order[start:start + batch_size]
        yield dataset.images[idx], dataset.labels[idx]
