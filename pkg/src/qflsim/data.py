"""Dataset ingestion, feature reduction, and non-IID partitioning.

Sources: big-endian IDX image/label pairs, a simple CSV layout
(``f0,...,f{d-1},label``), and a synthetic angle-cluster generator.
Features are reduced to the qubit count by contiguous block pooling and
mapped to rotation angles in [0, pi].  The partitioner realizes uneven
client fractions by largest-remainder rounding and skews label mixes
with a label-sorted sweep.
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .rng import substream

__all__ = [
    "DataFormatError",
    "DataConfigError",
    "Dataset",
    "PartitionSpec",
    "load_idx",
    "load_csv",
    "synth_dataset",
    "reduce_features",
    "normalize_to_angles",
    "partition_noniid",
    "largest_remainder_sizes",
    "ten_client_fractions",
]

logger = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class DataFormatError(ValueError):
    """Input file violates its declared format."""


class DataConfigError(ValueError):
    """Dataset or partition request is internally inconsistent."""


@dataclass(frozen=True)
class Dataset:
    """Feature matrix (n x d), integer labels, and the class count."""

    features: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=float)
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        if feats.ndim != 2 or feats.shape[0] == 0:
            raise DataConfigError(f"features must be a non-empty matrix, got {feats.shape}")
        if labels.shape != (feats.shape[0],):
            raise DataConfigError(
                f"labels shape {labels.shape} does not match {feats.shape[0]} samples"
            )
        if not np.all(np.isfinite(feats)):
            raise DataConfigError("features must be finite")
        if self.n_classes < 1:
            raise DataConfigError(f"n_classes must be >= 1, got {self.n_classes}")
        if labels.min() < 0 or labels.max() >= self.n_classes:
            raise DataConfigError(
                f"labels must lie in [0, {self.n_classes}), "
                f"got range [{labels.min()}, {labels.max()}]"
            )

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, indices: np.ndarray) -> "Dataset":
        return Dataset(self.features[indices], self.labels[indices], self.n_classes)


@dataclass(frozen=True)
class PartitionSpec:
    """Per-client dataset fractions, positive and summing to 1."""

    fractions: tuple[float, ...]

    def __post_init__(self):
        fr = tuple(float(f) for f in self.fractions)
        object.__setattr__(self, "fractions", fr)
        if not fr:
            raise DataConfigError("fractions must be non-empty")
        if any(f <= 0 for f in fr):
            raise DataConfigError(f"fractions must be positive, got {fr}")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise DataConfigError(f"fractions must sum to 1, got {sum(fr)}")


def _read_exact(handle, count: int, path: str, what: str) -> bytes:
    offset = handle.tell()
    chunk = handle.read(count)
    if len(chunk) != count:
        raise DataFormatError(
            f"{path}: truncated {what} at byte offset {offset} "
            f"(wanted {count} bytes, got {len(chunk)})"
        )
    return chunk


def load_idx(images_path: str | Path, labels_path: str | Path) -> Dataset:
    """Parse an IDX image/label file pair into a Dataset.

    Pixels are scaled from bytes to [0, 1] and flattened row-major to
    one feature row per image.
    """
    images_path, labels_path = Path(images_path), Path(labels_path)
    with open(images_path, "rb") as fh:
        magic, n_images, rows, cols = struct.unpack(
            ">IIII", _read_exact(fh, 16, str(images_path), "image header")
        )
        if magic != IDX_IMAGES_MAGIC:
            raise DataFormatError(
                f"{images_path}: bad image magic 0x{magic:08x} at byte offset 0 "
                f"(expected 0x{IDX_IMAGES_MAGIC:08x})"
            )
        payload = _read_exact(
            fh, n_images * rows * cols, str(images_path), "pixel payload"
        )
        if fh.read(1):
            raise DataFormatError(f"{images_path}: trailing bytes after pixel payload")
    with open(labels_path, "rb") as fh:
        magic, n_labels = struct.unpack(
            ">II", _read_exact(fh, 8, str(labels_path), "label header")
        )
        if magic != IDX_LABELS_MAGIC:
            raise DataFormatError(
                f"{labels_path}: bad label magic 0x{magic:08x} at byte offset 0 "
                f"(expected 0x{IDX_LABELS_MAGIC:08x})"
            )
        label_bytes = _read_exact(fh, n_labels, str(labels_path), "label payload")
    if n_labels != n_images:
        raise DataFormatError(
            f"label count {n_labels} does not match image count {n_images}"
        )
    features = np.frombuffer(payload, dtype=np.uint8).astype(float) / 255.0
    features = features.reshape(n_images, rows * cols)
    labels = np.frombuffer(label_bytes, dtype=np.uint8).astype(np.int64)
    return Dataset(features, labels, int(labels.max()) + 1 if n_images else 0)


def write_idx(
    images_path: str | Path,
    labels_path: str | Path,
    images: np.ndarray,
    labels: np.ndarray,
) -> None:
    """Write an IDX pair (inverse of load_idx, used for fixtures)."""
    images = np.asarray(images)
    n, rows, cols = images.shape
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols))
        fh.write(np.rint(images * 255.0).astype(np.uint8).tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, n))
        fh.write(np.asarray(labels, dtype=np.uint8).tobytes())


def load_csv(path: str | Path, n_classes: int | None = None) -> Dataset:
    """Parse a header-led CSV of features plus an integer label column."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise DataFormatError(f"{path}: empty file")
    header = [c.strip() for c in lines[0].split(",")]
    d = len(header) - 1
    expected = [f"f{i}" for i in range(d)] + ["label"]
    if d < 1 or header != expected:
        raise DataFormatError(
            f"{path}:1: header must be f0,...,f{{d-1}},label, got {lines[0]!r}"
        )
    rows, labels = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != d + 1:
            raise DataFormatError(
                f"{path}:{lineno}: expected {d + 1} cells, got {len(cells)}"
            )
        try:
            rows.append([float(c) for c in cells[:-1]])
            label = int(cells[-1])
        except ValueError:
            raise DataFormatError(f"{path}:{lineno}: non-numeric cell in {line!r}") from None
        labels.append(label)
    if not rows:
        raise DataFormatError(f"{path}: no data rows after header")
    labels_arr = np.array(labels, dtype=np.int64)
    if labels_arr.min() < 0:
        raise DataFormatError(f"{path}: negative label {labels_arr.min()}")
    if n_classes is None:
        n_classes = int(labels_arr.max()) + 1
    elif labels_arr.max() >= n_classes:
        raise DataFormatError(
            f"{path}: label {labels_arr.max()} out of range for {n_classes} classes"
        )
    return Dataset(np.array(rows, dtype=float), labels_arr, n_classes)


def synth_dataset(
    seed: int,
    n_samples: int,
    n_classes: int,
    d: int,
    sigma: float = 0.1 * math.pi,
) -> Dataset:
    """Angle-cluster toy task, linearly separable for modest jitter.

    The class grid is evenly spaced in [0.2*pi, 0.8*pi]; class c's center
    cycles that grid with a per-class offset, value grid[(i - c) mod K]
    on dimension i, so each class peaks on its own readout qubit.
    Samples add isotropic gaussian jitter and are clipped to [0, pi].
    Labels cycle round-robin so class counts differ by at most one.
    """
    if n_classes > d:
        raise DataConfigError(f"n_classes={n_classes} exceeds feature dim d={d}")
    if n_samples < 1:
        raise DataConfigError(f"n_samples must be >= 1, got {n_samples}")
    if sigma < 0:
        raise DataConfigError(f"sigma must be >= 0, got {sigma}")
    rng = substream(seed, "synth")
    grid = 0.2 * math.pi + 0.6 * math.pi * (np.arange(n_classes) + 0.5) / n_classes
    labels = np.arange(n_samples, dtype=np.int64) % n_classes
    dims = np.arange(d)
    centers = grid[(dims[None, :] - np.arange(n_classes)[:, None]) % n_classes]
    features = centers[labels]
    if sigma > 0:
        features = features + rng.normal(0.0, sigma, size=(n_samples, d))
    features = np.clip(features, 0.0, math.pi)
    return Dataset(features, labels, n_classes)


def reduce_features(features: np.ndarray, d: int) -> np.ndarray:
    """Average-pool each row over d contiguous, equal-as-possible blocks."""
    features = np.asarray(features, dtype=float)
    if features.ndim != 2:
        raise DataConfigError(f"expected an n x D matrix, got shape {features.shape}")
    full = features.shape[1]
    if not 1 <= d <= full:
        raise DataConfigError(f"target dim {d} must be in 1..{full}")
    blocks = np.array_split(np.arange(full), d)
    return np.stack([features[:, b].mean(axis=1) for b in blocks], axis=1)


def normalize_to_angles(features: np.ndarray) -> np.ndarray:
    """Map [0, 1] features to rotation angles in [0, pi], clipping strays."""
    features = np.asarray(features, dtype=float)
    out_of_range = int(np.sum((features < 0.0) | (features > 1.0)))
    if out_of_range:
        logger.warning("clipped %d out-of-range feature values into [0, 1]", out_of_range)
    return np.clip(features, 0.0, 1.0) * math.pi


def largest_remainder_sizes(fractions: tuple[float, ...], n: int) -> list[int]:
    """Integer shard sizes that match the fractions and sum exactly to n."""
    raw = [f * n for f in fractions]
    sizes = [int(math.floor(r)) for r in raw]
    shortfall = n - sum(sizes)
    remainders = sorted(
        range(len(raw)), key=lambda i: (-(raw[i] - sizes[i]), i)
    )
    for i in remainders[:shortfall]:
        sizes[i] += 1
    return sizes


def ten_client_fractions() -> tuple[float, ...]:
    """A 9%-to-16% linear ramp over ten clients, normalized to sum to 1."""
    ramp = np.linspace(0.09, 0.16, 10)
    return tuple(ramp / ramp.sum())


def partition_noniid(
    dataset: Dataset,
    spec: PartitionSpec,
    rng: np.random.Generator,
) -> list[Dataset]:
    """Split a dataset into skewed shards of exact largest-remainder sizes.

    Samples are ordered by a label-sorted sweep (random order within each
    label) and dealt out contiguously, so shard label mixes differ; each
    shard is then shuffled internally.
    """
    n = dataset.n_samples
    if len(spec.fractions) > n:
        raise DataConfigError(
            f"cannot split {n} samples across {len(spec.fractions)} clients"
        )
    sizes = largest_remainder_sizes(spec.fractions, n)
    if any(s == 0 for s in sizes):
        raise DataConfigError(f"a shard would be empty with sizes {sizes}")
    perm = rng.permutation(n)
    order = perm[np.argsort(dataset.labels[perm], kind="stable")]
    shards = []
    start = 0
    for size in sizes:
        idx = order[start : start + size].copy()
        rng.shuffle(idx)
        shards.append(dataset.subset(idx))
        start += size
    return shards
