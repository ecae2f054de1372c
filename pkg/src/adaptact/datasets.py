"""In-memory datasets: CIFAR-10 binary batches, IDX files and synthetic sets."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ArgumentError, FormatError
from .tensor import Rng

CIFAR_RECORD = 3073
CIFAR_SHAPE = (3, 32, 32)
IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
SYNTHETIC = ("gaussians-k", "spirals-2")


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray  # (N, C, H, W) float64
    labels: np.ndarray  # (N,) int64
    classes: int
    name: str
    # synthetic vector data is not pixel data and may leave [0, 1]
    pixels: bool = True

    def __post_init__(self):
        if self.images.ndim != 4:
            raise ArgumentError(f"images must be (N, C, H, W), got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise ArgumentError(f"{len(self.images)} images but {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.classes):
            raise ArgumentError(f"labels must lie in [0, {self.classes})")
        if self.pixels and self.images.size and (self.images.min() < 0 or self.images.max() > 1):
            raise ArgumentError("pixel values must lie in [0, 1]")

    def __len__(self):
        return len(self.labels)

    def class_counts(self) -> list[int]:
        return np.bincount(self.labels, minlength=self.classes).tolist()

    def take(self, idx, name=None) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.images[idx], self.labels[idx], self.classes, name or self.name, self.pixels)


def _read(path) -> bytes:
    return Path(path).read_bytes()


def parse_cifar10(raw: bytes, name="cifar10") -> Dataset:
    if len(raw) == 0 or len(raw) % CIFAR_RECORD:
        raise FormatError(f"{name}: {len(raw)} bytes is not a whole number of {CIFAR_RECORD}-byte records")
    recs = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = recs[:, 0].astype(np.int64)
    if labels.max() > 9:
        raise FormatError(f"{name}: label byte {labels.max()} > 9")
    images = recs[:, 1:].reshape((-1,) + CIFAR_SHAPE).astype(np.float64) / 255.0
    return Dataset(images, labels, 10, name)


def load_cifar10_bin(paths) -> Dataset:
    """Concatenate CIFAR-10 binary batch files (label byte + R, G, B planes per record)."""
    if isinstance(paths, (str, Path)):
        paths = [paths]
    parts = [parse_cifar10(_read(p), str(p)) for p in paths]
    if not parts:
        raise ArgumentError("no CIFAR-10 files given")
    return Dataset(np.concatenate([p.images for p in parts]),
                   np.concatenate([p.labels for p in parts]), 10, "cifar10")


def pixels_to_bytes(images: np.ndarray) -> np.ndarray:
    return np.rint(images * 255.0).astype(np.uint8)


def to_cifar10_bytes(ds: Dataset) -> bytes:
    if ds.images.shape[1:] != CIFAR_SHAPE:
        raise FormatError(f"CIFAR-10 records hold {CIFAR_SHAPE} images, got {ds.images.shape[1:]}")
    out = np.empty((len(ds), CIFAR_RECORD), dtype=np.uint8)
    out[:, 0] = ds.labels
    out[:, 1:] = pixels_to_bytes(ds.images).reshape(len(ds), -1)
    return out.tobytes()


def _idx_header(raw: bytes, expect: int, what: str):
    if len(raw) < 4:
        raise FormatError(f"{what}: truncated header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expect:
        raise FormatError(f"{what}: magic 0x{magic:08x}, expected 0x{expect:08x}")
    ndim = magic & 0xFF
    end = 4 + 4 * ndim
    if len(raw) < end:
        raise FormatError(f"{what}: truncated dimension list")
    dims = struct.unpack(f">{ndim}I", raw[4:end])
    size = int(np.prod(dims))
    if len(raw) != end + size:
        raise FormatError(f"{what}: {len(raw) - end} payload bytes, header promises {size}")
    return dims, np.frombuffer(raw, dtype=np.uint8, offset=end)


def parse_idx(image_raw: bytes, label_raw: bytes, name="idx") -> Dataset:
    dims, pix = _idx_header(image_raw, IDX_IMAGES_MAGIC, f"{name} images")
    (n_lab,), labs = _idx_header(label_raw, IDX_LABELS_MAGIC, f"{name} labels")
    n, h, w = dims
    if n != n_lab:
        raise FormatError(f"{name}: {n} images but {n_lab} labels")
    labels = labs.astype(np.int64)
    classes = max(10, int(labels.max()) + 1) if n else 10
    images = pix.reshape(n, 1, h, w).astype(np.float64) / 255.0
    return Dataset(images, labels, classes, name)


def load_idx(image_path, label_path) -> Dataset:
    return parse_idx(_read(image_path), _read(label_path), Path(image_path).stem)


def to_idx_bytes(ds: Dataset) -> tuple[bytes, bytes]:
    n, c, h, w = ds.images.shape
    if c != 1:
        raise FormatError("IDX images are single-channel")
    img = struct.pack(">IIII", IDX_IMAGES_MAGIC, n, h, w) + pixels_to_bytes(ds.images).tobytes()
    lab = struct.pack(">II", IDX_LABELS_MAGIC, n) + ds.labels.astype(np.uint8).tobytes()
    return img, lab


def make_synthetic(kind: str, n: int, rng: Rng) -> Dataset:
    """``gaussians-<k>`` or ``spirals-2``, balanced and shuffled, as (N, 1, F, 1) vector "images".

    gaussians-k: unit-variance blobs whose centres sit on a radius-3 circle in
    the first two of ``k`` features (the remaining features are pure noise).
    """
    if kind.startswith("gaussians-"):
        try:
            k = int(kind.split("-", 1)[1])
        except ValueError:
            raise ArgumentError(f"bad synthetic kind {kind!r}") from None
        if k < 2:
            raise ArgumentError("gaussians-k needs k >= 2")
        classes = k
    elif kind == "spirals-2":
        classes = 2
    else:
        raise ArgumentError(f"unknown synthetic kind {kind!r}; expected gaussians-<k> or spirals-2")
    if n < classes:
        raise ArgumentError(f"n={n} is smaller than the {classes} classes")
    per = [n // classes + (1 if c < n % classes else 0) for c in range(classes)]
    labels = np.repeat(np.arange(classes), per)

    if kind.startswith("gaussians-"):
        angles = 2 * np.pi * np.arange(k) / k
        centres = np.zeros((k, k))
        centres[:, 0] = 3.0 * np.cos(angles)
        centres[:, 1] = 3.0 * np.sin(angles)
        feats = centres[labels] + rng.normal((n, k))
    else:
        # radius grows with angle; the second arm is the first rotated by pi
        t = np.concatenate([np.linspace(0.0, 1.0, m) for m in per])
        theta = 3.0 * np.pi * t + np.pi * labels
        r = 0.2 + 2.8 * t
        feats = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1) + rng.normal((n, 2), scale=0.1)
    order = rng.permutation(n)
    feats, labels = feats[order], labels[order]
    return Dataset(feats.reshape(n, 1, -1, 1), labels.astype(np.int64), classes, kind, pixels=False)


def subset(ds: Dataset, n_train: int, n_test: int, rng: Rng) -> tuple[Dataset, Dataset]:
    """Seeded shuffle of ``ds`` split into disjoint train/test parts."""
    if n_train < 0 or n_test < 0 or n_train + n_test > len(ds):
        raise ArgumentError(f"cannot take {n_train}+{n_test} samples from {len(ds)}")
    order = rng.permutation(len(ds))
    return (ds.take(order[:n_train], f"{ds.name}-train"),
            ds.take(order[n_train:n_train + n_test], f"{ds.name}-test"))
