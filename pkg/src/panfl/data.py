"""Datasets: synthesis, IDX ingestion, Dirichlet partitioning, batching.

The IDX reader follows the classic big-endian layout (magic 0x00000803 for
images, 0x00000801 for labels) and scales pixels to [0, 1]. The Dirichlet
partitioner draws per-class client shares from Dir(alpha): smaller alpha
means each class concentrates on fewer clients, i.e. more heterogeneity.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FormatError
from .linalg import make_rng

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass
class Dataset:
    """Feature matrix (n, d) with integer class labels in [0, n_classes)."""

    features: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ConfigError("features must be a 2-D matrix")
        if self.labels.shape != (self.features.shape[0],):
            raise ConfigError("need exactly one label per sample")
        if self.n_samples < 1:
            raise ConfigError("dataset must contain at least one sample")
        if self.labels.min() < 0 or self.labels.max() >= self.n_classes:
            raise ConfigError(f"labels must lie in [0, {self.n_classes})")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.n_classes)


@dataclass
class ClientDataset:
    """A client's slice of a parent dataset, by sample index."""

    client_id: int
    indices: np.ndarray

    @property
    def n_samples(self) -> int:
        return int(self.indices.shape[0])


@dataclass(frozen=True)
class PartitionSpec:
    n_clients: int
    alpha: float
    seed: int

    def __post_init__(self):
        if self.n_clients < 1:
            raise ConfigError(f"n_clients must be >= 1, got {self.n_clients}")
        if self.alpha <= 0:
            raise ConfigError(f"alpha must be > 0, got {self.alpha}")


def gen_synthetic(n: int, n_features: int, n_classes: int, separation: float,
                  seed: int) -> Dataset:
    """Gaussian blobs with seeded means and balanced labels.

    Class means sit pairwise ``separation`` apart (in units of the
    per-coordinate noise std, which is 1) when ``n_features >= n_classes``;
    with fewer features the means fall back to random directions of norm
    ``separation / sqrt(2)``. ``separation = 0`` carries no class signal.
    """
    if n < n_classes:
        raise ConfigError(f"need n >= n_classes, got {n} < {n_classes}")
    rng = make_rng(seed)
    if n_features >= n_classes:
        basis, _ = np.linalg.qr(rng.normal(size=(n_features, n_classes)))
        means = basis.T * (separation / np.sqrt(2.0))
    else:
        raw = rng.normal(size=(n_classes, n_features))
        raw /= np.linalg.norm(raw, axis=1, keepdims=True)
        means = raw * (separation / np.sqrt(2.0))
    labels = np.arange(n, dtype=np.int64) % n_classes
    rng.shuffle(labels)
    features = means[labels] + rng.normal(size=(n, n_features))
    return Dataset(features, labels, n_classes)


def make_synthetic_split(n_train: int, n_test: int, n_features: int, n_classes: int,
                         separation: float, seed: int) -> tuple[Dataset, Dataset]:
    """Train/test pair drawn from the same seeded blob means."""
    full = gen_synthetic(n_train + n_test, n_features, n_classes, separation, seed)
    return (full.subset(np.arange(n_train)),
            full.subset(np.arange(n_train, n_train + n_test)))


def _read_be32(buf: bytes, offset: int, path: str) -> int:
    if offset + 4 > len(buf):
        raise FormatError(f"{path}: truncated header at byte {offset}")
    return struct.unpack_from(">I", buf, offset)[0]


def load_idx(images_path, labels_path) -> Dataset:
    """Read an IDX image/label file pair into a flat [0, 1]-scaled dataset."""
    with open(images_path, "rb") as f:
        img_buf = f.read()
    with open(labels_path, "rb") as f:
        lab_buf = f.read()

    magic = _read_be32(img_buf, 0, str(images_path))
    if magic != IDX_IMAGE_MAGIC:
        raise FormatError(f"{images_path}: bad image magic 0x{magic:08x} at byte 0")
    n_images = _read_be32(img_buf, 4, str(images_path))
    rows = _read_be32(img_buf, 8, str(images_path))
    cols = _read_be32(img_buf, 12, str(images_path))
    expected = 16 + n_images * rows * cols
    if len(img_buf) < expected:
        raise FormatError(f"{images_path}: truncated pixel data at byte {len(img_buf)} "
                          f"(expected {expected} bytes)")

    magic = _read_be32(lab_buf, 0, str(labels_path))
    if magic != IDX_LABEL_MAGIC:
        raise FormatError(f"{labels_path}: bad label magic 0x{magic:08x} at byte 0")
    n_labels = _read_be32(lab_buf, 4, str(labels_path))
    if len(lab_buf) < 8 + n_labels:
        raise FormatError(f"{labels_path}: truncated label data at byte {len(lab_buf)} "
                          f"(expected {8 + n_labels} bytes)")

    if n_images != n_labels:
        raise FormatError(f"image count {n_images} does not match label count {n_labels}")
    if n_images == 0:
        raise FormatError(f"{images_path}: file declares zero items")

    pixels = np.frombuffer(img_buf, dtype=np.uint8, count=n_images * rows * cols,
                           offset=16)
    features = pixels.reshape(n_images, rows * cols).astype(np.float64) / 255.0
    labels = np.frombuffer(lab_buf, dtype=np.uint8, count=n_labels, offset=8)
    labels = labels.astype(np.int64)
    return Dataset(features, labels, n_classes=int(labels.max()) + 1)


def partition_dirichlet(ds: Dataset, spec: PartitionSpec,
                        max_attempts: int = 100) -> list[ClientDataset]:
    """Split sample indices across clients with per-class Dirichlet shares.

    For each class the client proportions are drawn from Dir(alpha * 1_K)
    and that class's (shuffled) samples are split accordingly. Partitions
    leaving any client empty are re-drawn, up to ``max_attempts`` times.
    """
    if spec.n_clients > ds.n_samples:
        raise ConfigError(f"cannot give {spec.n_clients} clients at least one of "
                          f"{ds.n_samples} samples")
    rng = make_rng(spec.seed)
    for _ in range(max_attempts):
        buckets: list[list[np.ndarray]] = [[] for _ in range(spec.n_clients)]
        for c in range(ds.n_classes):
            idx_c = np.flatnonzero(ds.labels == c)
            if idx_c.size == 0:
                continue
            rng.shuffle(idx_c)
            shares = rng.dirichlet(np.full(spec.n_clients, spec.alpha))
            cuts = (np.cumsum(shares) * idx_c.size).astype(np.int64)[:-1]
            for k, chunk in enumerate(np.split(idx_c, cuts)):
                buckets[k].append(chunk)
        clients = []
        for k, parts in enumerate(buckets):
            idx = np.sort(np.concatenate(parts)) if parts else np.empty(0, dtype=np.int64)
            clients.append(ClientDataset(client_id=k, indices=idx))
        if all(c.n_samples >= 1 for c in clients):
            return clients
    raise ConfigError(f"could not give every client a sample within {max_attempts} "
                      f"draws (K={spec.n_clients}, alpha={spec.alpha})")


def label_distribution(ds: Dataset, indices=None) -> np.ndarray:
    """Class proportions over the whole set or a subset of indices."""
    labels = ds.labels if indices is None else ds.labels[np.asarray(indices)]
    counts = np.bincount(labels, minlength=ds.n_classes).astype(np.float64)
    return counts / counts.sum()


def iter_batches(features: np.ndarray, labels: np.ndarray, batch_size: int,
                 rng: np.random.Generator):
    """One epoch of shuffled minibatches; the last partial batch is kept."""
    n = features.shape[0]
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        take = order[start:start + batch_size]
        yield features[take], labels[take]


def partition_stats(ds: Dataset, clients: list[ClientDataset]) -> list[tuple[int, int, int]]:
    """(client, class, count) rows for every client/class pair."""
    rows = []
    for client in clients:
        counts = np.bincount(ds.labels[client.indices], minlength=ds.n_classes)
        for c in range(ds.n_classes):
            rows.append((client.client_id, c, int(counts[c])))
    return rows


def write_partition_csv(path, ds: Dataset, clients: list[ClientDataset]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["client", "class", "count"])
        writer.writerows(partition_stats(ds, clients))
