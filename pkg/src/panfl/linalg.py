"""Dense linear algebra helpers and seeded randomness.

All numerics in this package are 64-bit floats held in plain row-major numpy
arrays. Randomness flows exclusively through numpy's PCG64 generator, so a
given seed yields the same stream on every platform. Every stochastic
operation in the repository is a pure function of its inputs and a seed (or a
generator created from one by the helpers below).

Seed derivation scheme, used everywhere:

* ``make_rng(seed)``            -- a root stream.
* ``worker_rng(root, index)``   -- independent stream for parallel worker
                                   ``index``, seeded with ``root XOR index``.
* ``derive_rng(root, *path)``   -- stream for a structured sub-task such as
                                   (round, client), via
                                   ``numpy.random.SeedSequence([root, *path])``.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError


def as_matrix(data, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    """Validate and return ``data`` as a finite 2-D float64 array."""
    m = np.asarray(data, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got ndim={m.ndim}")
    if rows is not None and m.shape[0] != rows:
        raise ShapeError(f"expected {rows} rows, got {m.shape[0]}")
    if cols is not None and m.shape[1] != cols:
        raise ShapeError(f"expected {cols} cols, got {m.shape[1]}")
    if not np.all(np.isfinite(m)):
        raise ShapeError("matrix contains non-finite entries")
    return m


def as_vector(data, length: int | None = None) -> np.ndarray:
    """Validate and return ``data`` as a finite 1-D float64 array."""
    v = np.asarray(data, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeError(f"expected a 1-D vector, got ndim={v.ndim}")
    if length is not None and v.shape[0] != length:
        raise ShapeError(f"expected length {length}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ShapeError("vector contains non-finite entries")
    return v


def matmul(a, b) -> np.ndarray:
    """Matrix product with an explicit inner-dimension check."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} x {b.shape}")
    return a @ b


def hadamard(a, b) -> np.ndarray:
    """Elementwise product of two equal-length vectors."""
    a = as_vector(a)
    b = as_vector(b, length=a.shape[0])
    return a * b


def make_rng(seed: int) -> np.random.Generator:
    """Root random stream: PCG64 seeded with ``seed``."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def worker_rng(root_seed: int, worker_index: int) -> np.random.Generator:
    """Independent stream for a parallel worker (root seed XOR worker index)."""
    return make_rng(int(root_seed) ^ int(worker_index))


def derive_rng(root_seed: int, *path: int) -> np.random.Generator:
    """Stream for a structured sub-task, e.g. ``derive_rng(seed, round, client)``."""
    seq = np.random.SeedSequence([int(root_seed), *(int(p) for p in path)])
    return np.random.Generator(np.random.PCG64(seq))


def sample_gaussian(rng: np.random.Generator, n: int, mean: float = 0.0,
                    std: float = 1.0) -> np.ndarray:
    """``n`` i.i.d. normal draws; deterministic under the generator's seed."""
    if std < 0:
        raise ValueError(f"std must be >= 0, got {std}")
    return rng.normal(loc=mean, scale=std, size=n)
