"""Patches, MNIST IDX files, image corruptions and incremental task splits."""

from __future__ import annotations

import gzip
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.ndimage import correlate1d

from sleepnet.network import Array

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
DATA_ROOT_ENV = "SLEEPNET_DATA"
PATCHES_FORMAT = "sleepnet.patches"


class IdxFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    inputs: Array
    labels: NDArray[np.int64]
    n_classes: int
    name: str = ""
    image_shape: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        x = np.asarray(self.inputs, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "labels", y)
        if x.ndim != 2 or x.shape[0] != y.shape[0]:
            raise ValueError("inputs must be (n, d) with one label per row")
        if x.size and (x.min() < 0.0 or x.max() > 1.0):
            raise ValueError("dataset values must lie in [0, 1]")
        if y.size and (y.min() < 0 or y.max() >= self.n_classes):
            raise ValueError(f"labels must lie in [0, {self.n_classes})")

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def n_features(self) -> int:
        return self.inputs.shape[1]

    def subset(self, index: NDArray, name: str | None = None) -> Dataset:
        return Dataset(
            self.inputs[index],
            self.labels[index],
            self.n_classes,
            self.name if name is None else name,
            self.image_shape,
        )

    def with_classes(self, classes: Sequence[int]) -> Dataset:
        return self.subset(np.flatnonzero(np.isin(self.labels, list(classes))))


@dataclass(frozen=True)
class Task:
    task_id: int
    classes: tuple[int, ...]
    data: Dataset


@dataclass(frozen=True)
class TaskSequence:
    tasks: tuple[Task, ...]

    def __len__(self) -> int:
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    def __getitem__(self, i: int) -> Task:
        return self.tasks[i]


@dataclass(frozen=True)
class CorruptionSpec:
    kind: str
    level: float
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("gaussian_noise", "gaussian_blur"):
            raise ValueError(f"unknown corruption kind {self.kind!r}")
        if not self.level >= 0:
            raise ValueError("corruption level must be >= 0")


@dataclass(frozen=True)
class Patches:
    """Pixel layout of a generated Patches dataset."""

    n_side: int
    shared: tuple[int, ...]
    unique: tuple[tuple[int, ...], ...]
    seed: int | None = None
    dataset: Dataset = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        n_images = len(self.unique)
        x = np.zeros((n_images, self.n_side * self.n_side))
        for k, own in enumerate(self.unique):
            x[k, list(self.shared)] = 1.0
            x[k, list(own)] = 1.0
        data = Dataset(x, np.arange(n_images), n_images, "patches", (self.n_side, self.n_side))
        object.__setattr__(self, "dataset", data)

    def on_pixels(self, k: int) -> NDArray[np.int64]:
        return np.flatnonzero(self.dataset.inputs[k])

    def to_dict(self) -> dict:
        return {
            "format": PATCHES_FORMAT,
            "version": 1,
            "n_side": self.n_side,
            "shared": list(self.shared),
            "unique": [list(u) for u in self.unique],
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> Patches:
        if d.get("format") != PATCHES_FORMAT or d.get("version") != 1:
            raise ValueError("not a version 1 patches document")
        return cls(
            int(d["n_side"]),
            tuple(d["shared"]),
            tuple(tuple(u) for u in d["unique"]),
            d.get("seed"),
        )

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict()))
        return path

    @classmethod
    def load(cls, path: str | Path) -> Patches:
        return cls.from_dict(json.loads(Path(path).read_text()))


def gen_patches_layout(
    n_side: int = 10,
    n_images: int = 4,
    overlap: int = 15,
    on_count: int = 25,
    seed: int | None = 0,
) -> Patches:
    n_pixels = n_side * n_side
    if not 0 <= overlap <= on_count <= n_pixels:
        raise ValueError("need 0 <= overlap <= on_count <= n_side**2")
    if n_images * (on_count - overlap) + overlap > n_pixels:
        raise ValueError(
            f"{n_images} images with {on_count} on-pixels and {overlap} shared "
            f"do not fit in {n_pixels} pixels"
        )
    rng = np.random.default_rng(seed)
    n_unique = on_count - overlap
    chosen = rng.choice(n_pixels, size=overlap + n_images * n_unique, replace=False)
    shared = tuple(sorted(int(p) for p in chosen[:overlap]))
    unique = tuple(
        tuple(sorted(int(p) for p in chosen[overlap + k * n_unique : overlap + (k + 1) * n_unique]))
        for k in range(n_images)
    )
    return Patches(n_side, shared, unique, seed)


def gen_patches(
    n_side: int = 10,
    n_images: int = 4,
    overlap: int = 15,
    on_count: int = 25,
    seed: int | None = 0,
) -> Dataset:
    """Binary images sharing ``overlap`` on-pixels; image ``k`` has label ``k``."""
    return gen_patches_layout(n_side, n_images, overlap, on_count, seed).dataset


def _open_maybe_gzip(path: Path) -> bytes:
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _read_idx(path: Path, magic: int) -> NDArray[np.uint8]:
    raw = _open_maybe_gzip(path)
    if len(raw) < 8:
        raise IdxFormatError(f"{path}: truncated header at byte offset {len(raw)}")
    found = int.from_bytes(raw[:4], "big")
    if found != magic:
        raise IdxFormatError(f"{path}: bad magic 0x{found:08x}, expected 0x{magic:08x}")
    ndim = raw[3]
    header_len = 4 + 4 * ndim
    if len(raw) < header_len:
        raise IdxFormatError(f"{path}: truncated header at byte offset {len(raw)}")
    dims = [int.from_bytes(raw[4 + 4 * i : 8 + 4 * i], "big") for i in range(ndim)]
    expected = header_len + int(np.prod(dims))
    if len(raw) < expected:
        raise IdxFormatError(
            f"{path}: truncated file, data ends at byte offset {len(raw)} "
            f"but header promises {expected} bytes"
        )
    return np.frombuffer(raw, dtype=np.uint8, count=expected - header_len, offset=header_len).reshape(dims)


def load_mnist(images_path: str | Path, labels_path: str | Path, name: str = "mnist") -> Dataset:
    """Parse a pair of IDX files (optionally gzipped); pixels are scaled by 1/255."""
    images = _read_idx(Path(images_path), IDX_IMAGES_MAGIC)
    labels = _read_idx(Path(labels_path), IDX_LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(
            f"{images_path} holds {images.shape[0]} images but {labels_path} "
            f"holds {labels.shape[0]} labels"
        )
    n, rows, cols = images.shape
    return Dataset(
        images.reshape(n, rows * cols) / 255.0,
        labels.astype(np.int64),
        10,
        name,
        (rows, cols),
    )


def write_idx_images(path: str | Path, images: NDArray[np.uint8]) -> Path:
    images = np.asarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    header = b"".join(v.to_bytes(4, "big") for v in (IDX_IMAGES_MAGIC, n, rows, cols))
    path = Path(path)
    path.write_bytes(header + images.tobytes())
    return path


def write_idx_labels(path: str | Path, labels: NDArray) -> Path:
    labels = np.asarray(labels, dtype=np.uint8)
    header = IDX_LABELS_MAGIC.to_bytes(4, "big") + len(labels).to_bytes(4, "big")
    path = Path(path)
    path.write_bytes(header + labels.tobytes())
    return path


MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def find_mnist(root: str | Path | None = None) -> dict[str, tuple[Path, Path]]:
    """Locate the four standard MNIST files under ``root`` or ``$SLEEPNET_DATA``.

    Plain and ``.gz`` names are both accepted. Raises ``FileNotFoundError``
    naming the first missing file.
    """
    root = Path(root if root is not None else os.environ.get(DATA_ROOT_ENV, "."))
    found = {}
    for split, names in MNIST_FILES.items():
        paths = []
        for name in names:
            for candidate in (root / name, root / f"{name}.gz"):
                if candidate.exists():
                    paths.append(candidate)
                    break
            else:
                raise FileNotFoundError(f"MNIST file {root / name} not found")
        found[split] = (paths[0], paths[1])
    return found


def load_mnist_split(root: str | Path | None = None) -> tuple[Dataset, Dataset]:
    files = find_mnist(root)
    return (
        load_mnist(*files["train"], name="mnist-train"),
        load_mnist(*files["test"], name="mnist-test"),
    )


def gaussian_kernel(sigma: float) -> Array:
    """Normalized 1-D Gaussian with radius ``ceil(3 * sigma)``."""
    if sigma <= 0:
        return np.ones(1)
    radius = int(np.ceil(3.0 * sigma))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    with np.errstate(over="ignore"):
        k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


def blur_images(images: Array, sigma: float) -> Array:
    """Separable Gaussian blur of ``(n, rows, cols)`` images with zero padding."""
    k = gaussian_kernel(sigma)
    out = correlate1d(images, k, axis=1, mode="constant", cval=0.0)
    return correlate1d(out, k, axis=2, mode="constant", cval=0.0)


def corrupt(dataset: Dataset, spec: CorruptionSpec) -> Dataset:
    """Noisy or blurred copy of ``dataset``; values are clamped back to [0, 1]."""
    x = dataset.inputs
    if spec.level == 0:
        return dataset.subset(np.arange(len(dataset)), f"{dataset.name}+{spec.kind}(0)")
    if spec.kind == "gaussian_noise":
        rng = np.random.default_rng(spec.seed)
        out = x + rng.normal(0.0, spec.level, size=x.shape)
    else:
        shape = dataset.image_shape
        if shape is None:
            side = int(round(np.sqrt(x.shape[1])))
            if side * side != x.shape[1]:
                raise ValueError("blur needs an image shape for non-square inputs")
            shape = (side, side)
        out = blur_images(x.reshape(-1, *shape), spec.level).reshape(x.shape)
    return Dataset(
        np.clip(out, 0.0, 1.0),
        dataset.labels.copy(),
        dataset.n_classes,
        f"{dataset.name}+{spec.kind}({spec.level:g})",
        dataset.image_shape,
    )


def split_tasks(dataset: Dataset, groups: Sequence[Sequence[int]]) -> TaskSequence:
    """One task per class group; labels stay global."""
    seen: set[int] = set()
    for g in groups:
        overlap = seen.intersection(g)
        if overlap:
            raise ValueError(f"class groups overlap on {sorted(overlap)}")
        seen.update(g)
    present = set(np.unique(dataset.labels).tolist())
    missing = seen - present
    if missing:
        raise ValueError(f"classes {sorted(missing)} have no examples")
    tasks = tuple(
        Task(i, tuple(int(c) for c in g), dataset.with_classes(g)) for i, g in enumerate(groups)
    )
    return TaskSequence(tasks)


def class_pairs(n_classes: int, size: int = 2) -> list[list[int]]:
    return [list(range(i, min(i + size, n_classes))) for i in range(0, n_classes, size)]


def stratified_split(
    dataset: Dataset, test_fraction: float, seed: int = 0
) -> tuple[Dataset, Dataset]:
    """Per-class random split into train/test parts."""
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for c in range(dataset.n_classes):
        idx = rng.permutation(np.flatnonzero(dataset.labels == c))
        n_test = int(round(test_fraction * len(idx)))
        test_idx.append(idx[:n_test])
        train_idx.append(idx[n_test:])
    tr = np.sort(np.concatenate(train_idx))
    te = np.sort(np.concatenate(test_idx))
    return (
        dataset.subset(tr, f"{dataset.name}-train"),
        dataset.subset(te, f"{dataset.name}-test"),
    )
