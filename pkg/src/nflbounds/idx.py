"""IDX (MNIST) image and label files.

Only the two unsigned-byte layouts used by MNIST are supported:
images (magic 0x00000803, dims n, rows, cols) and labels (magic 0x00000801,
dim n). All header integers are big-endian 32-bit.
"""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
MAX_ITEMS = 1 << 31


class IdxError(ValueError):
    pass


class BadMagicError(IdxError):
    pass


class TruncatedError(IdxError):
    pass


class DimensionError(IdxError):
    pass


class LabelRangeError(IdxError):
    pass


class ChecksumError(IdxError):
    pass


def _header(data: bytes, ndims: int, magic: int):
    need = 4 * (1 + ndims)
    if len(data) < 4:
        raise TruncatedError(f"header needs {need} bytes, got {len(data)}")
    found = struct.unpack_from(">I", data, 0)[0]
    if found != magic:
        raise BadMagicError(f"magic 0x{found:08x}, expected 0x{magic:08x}")
    if len(data) < need:
        raise TruncatedError(f"header needs {need} bytes, got {len(data)}")
    return struct.unpack_from(f">{ndims}I", data, 4), need


def _payload(data: bytes, offset: int, size: int) -> np.ndarray:
    have = len(data) - offset
    if have < size:
        raise TruncatedError(f"expected {offset + size} bytes, got {len(data)}")
    if have > size:
        raise DimensionError(f"{have - size} bytes beyond the declared payload of {size}")
    return np.frombuffer(data, dtype=np.uint8, count=size, offset=offset)


def parse_idx_images_raw(data: bytes) -> np.ndarray:
    """uint8 array of shape (n, rows, cols)."""
    (n, rows, cols), off = _header(data, 3, IMAGE_MAGIC)
    if n >= MAX_ITEMS or rows * cols == 0 and n > 0 or rows * cols > 1 << 20 or n * rows * cols >= 1 << 40:
        raise DimensionError(f"implausible dimensions n={n}, rows={rows}, cols={cols}")
    return _payload(data, off, n * rows * cols).reshape(n, rows, cols)


def parse_idx_images(data: bytes) -> np.ndarray:
    """Images as an (n, rows*cols) float array scaled into [0, 1]."""
    raw = parse_idx_images_raw(data)
    return raw.reshape(raw.shape[0], -1).astype(float) / 255.0


def parse_idx_labels(data: bytes) -> np.ndarray:
    (n,), off = _header(data, 1, LABEL_MAGIC)
    if n >= MAX_ITEMS:
        raise DimensionError(f"implausible label count {n}")
    labels = _payload(data, off, n)
    if labels.size and labels.max() > 9:
        bad = int(np.flatnonzero(labels > 9)[0])
        raise LabelRangeError(f"label {labels[bad]} at position {bad} is outside 0..9")
    return labels.astype(np.int64)


def write_idx_images(images, rows: int = 28, cols: int = 28) -> bytes:
    """Inverse of :func:`parse_idx_images`; float inputs are taken as [0, 1] scaled."""
    a = np.asarray(images)
    if a.dtype != np.uint8:
        a = np.rint(np.clip(a, 0.0, 1.0) * 255.0).astype(np.uint8)
    a = a.reshape(-1, rows * cols)
    return struct.pack(">4I", IMAGE_MAGIC, a.shape[0], rows, cols) + a.tobytes()


def write_idx_labels(labels) -> bytes:
    a = np.asarray(labels, dtype=np.uint8)
    return struct.pack(">2I", LABEL_MAGIC, a.size) + a.tobytes()


@dataclass(frozen=True)
class ImageDataset:
    images: np.ndarray
    labels: np.ndarray
    split: str = "train"

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise DimensionError(f"{self.images.shape[0]} images but {self.labels.shape[0]} labels")

    def __len__(self):
        return self.labels.shape[0]


def read_manifest(path) -> Dict[str, int]:
    """Lines of ``filename<TAB>byte_size``; blank lines and '#' comments ignored."""
    sizes = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            name, size = line.split("\t")
            sizes[name] = int(size)
        except ValueError:
            raise IdxError(f"bad manifest line {line!r}") from None
    return sizes


def _read_checked(path: Path, manifest: Optional[Dict[str, int]]) -> bytes:
    """File bytes after the manifest size check (on the stored file); .gz is inflated."""
    data = path.read_bytes()
    if manifest is not None and path.name in manifest and manifest[path.name] != len(data):
        raise ChecksumError(f"{path.name}: {len(data)} bytes, manifest says {manifest[path.name]}")
    if path.suffix == ".gz":
        try:
            data = gzip.decompress(data)
        except (OSError, EOFError) as exc:
            raise TruncatedError(f"{path.name}: bad gzip stream ({exc})") from exc
    return data


def load_dataset(image_path, label_path, split: str = "train", manifest=None) -> ImageDataset:
    sizes = read_manifest(manifest) if manifest is not None else None
    images = parse_idx_images(_read_checked(Path(image_path), sizes))
    labels = parse_idx_labels(_read_checked(Path(label_path), sizes))
    return ImageDataset(images, labels, split)


MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def load_mnist_dir(directory, split: str) -> ImageDataset:
    """Load a split from the standard MNIST file names (plain or .gz); uses ``MANIFEST`` if present."""
    d = Path(directory)
    img, lab = (n if (d / n).exists() or not (d / (n + ".gz")).exists() else n + ".gz"
                for n in MNIST_FILES[split])
    manifest = d / "MANIFEST" if (d / "MANIFEST").exists() else None
    return load_dataset(d / img, d / lab, split, manifest)
