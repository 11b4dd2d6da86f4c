"""Sparse dataset container, LIBSVM text parsing, and node/core partitioning.

Feature indices are 0-based internally; the LIBSVM text format is 1-based.
Points are stored row-wise as (indices, values) pairs with strictly
increasing indices and no explicit zeros, so squared norms and dot
products against a dense vector are cheap.
"""

from __future__ import annotations

import gzip
import io
import threading
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np
import scipy.sparse as sp


class ParseError(ValueError):
    """Raised when LIBSVM text input is malformed. Carries the line number."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class PartitionError(ValueError):
    """Raised when a dataset cannot be split into the requested topology."""


@dataclass
class SparsePoint:
    """One example: sorted sparse features, a label, and a cached squared norm."""

    indices: np.ndarray
    values: np.ndarray
    label: float
    squared_norm: float = field(init=False)

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.indices.shape != self.values.shape or self.indices.ndim != 1:
            raise ValueError("indices and values must be 1-d arrays of equal length")
        if self.indices.size:
            if np.any(np.diff(self.indices) <= 0):
                raise ValueError("feature indices must be strictly increasing")
            if self.indices[0] < 0:
                raise ValueError("feature indices must be non-negative")
            if np.any(self.values == 0.0):
                raise ValueError("explicit zero values are not stored")
        self.squared_norm = float(self.values @ self.values)

    def dot(self, dense: np.ndarray) -> float:
        return float(dense[self.indices] @ self.values)


class Dataset:
    """Immutable collection of SparsePoints with a fixed feature dimension.

    `to_csc()` lazily builds a d-by-n sparse matrix (one column per point)
    for vectorized objective evaluation; the point list stays the primary
    representation for coordinate-wise solvers.
    """

    def __init__(self, points: Sequence[SparsePoint], dim: int):
        points = list(points)
        for p in points:
            if p.indices.size and int(p.indices[-1]) >= dim:
                raise ValueError(
                    f"feature index {int(p.indices[-1])} out of range for dim={dim}"
                )
        self._points = points
        self._dim = int(dim)
        self._nnz = int(sum(p.indices.size for p in points))
        self._labels = np.array([p.label for p in points], dtype=np.float64)
        self._sq_norms = np.array([p.squared_norm for p in points], dtype=np.float64)
        self._csc = None
        self._csc_lock = threading.Lock()

    @property
    def points(self) -> list[SparsePoint]:
        return self._points

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def n(self) -> int:
        return len(self._points)

    @property
    def nnz(self) -> int:
        return self._nnz

    @property
    def labels(self) -> np.ndarray:
        return self._labels

    @property
    def squared_norms(self) -> np.ndarray:
        return self._sq_norms

    def __len__(self) -> int:
        return len(self._points)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        if self.dim != other.dim or self.n != other.n:
            return False
        for a, b in zip(self._points, other._points):
            if a.label != b.label:
                return False
            if not np.array_equal(a.indices, b.indices):
                return False
            if not np.array_equal(a.values, b.values):
                return False
        return True

    def to_csc(self) -> sp.csc_matrix:
        """d-by-n matrix whose column i is point i. Built once, cached."""
        with self._csc_lock:
            if self._csc is None:
                indptr = np.zeros(self.n + 1, dtype=np.int64)
                for i, p in enumerate(self._points):
                    indptr[i + 1] = indptr[i] + p.indices.size
                idx = np.empty(self._nnz, dtype=np.int64)
                val = np.empty(self._nnz, dtype=np.float64)
                for i, p in enumerate(self._points):
                    idx[indptr[i]:indptr[i + 1]] = p.indices
                    val[indptr[i]:indptr[i + 1]] = p.values
                self._csc = sp.csc_matrix(
                    (val, idx, indptr), shape=(self._dim, self.n)
                )
            return self._csc

    def margins(self, w: np.ndarray) -> np.ndarray:
        """x_i . w for every point, as a length-n vector."""
        return self.to_csc().T @ w

    def feature_combination(self, coeff: np.ndarray) -> np.ndarray:
        """sum_i coeff_i * x_i, as a length-d dense vector."""
        return self.to_csc() @ coeff


def from_dense(X: np.ndarray, y: np.ndarray) -> Dataset:
    """Build a Dataset from a dense n-by-d matrix, dropping zero entries."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError("X must be n-by-d and y length n")
    points = []
    for row, label in zip(X, y):
        nz = np.nonzero(row)[0]
        points.append(SparsePoint(nz, row[nz], float(label)))
    return Dataset(points, X.shape[1])


def parse_libsvm(lines: Iterable[str], dim: int | None = None) -> Dataset:
    """Parse LIBSVM text: `label idx:val idx:val ...` with 1-based indices.

    Whole-line comments start with '#'. Indices must be strictly increasing
    within a line (a repeat is reported as a duplicate). Explicit zero values
    are dropped. The dimension is 1 + the highest 0-based index seen unless
    `dim` overrides it; an override smaller than the data is an error.
    """
    points: list[SparsePoint] = []
    max_dim = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        try:
            label = float(tokens[0])
        except ValueError:
            raise ParseError(lineno, f"bad label token {tokens[0]!r}") from None
        idx_list: list[int] = []
        val_list: list[float] = []
        prev = 0
        for tok in tokens[1:]:
            head, sep, tail = tok.partition(":")
            if not sep:
                raise ParseError(lineno, f"malformed feature token {tok!r}")
            try:
                j = int(head)
                v = float(tail)
            except ValueError:
                raise ParseError(lineno, f"malformed feature token {tok!r}") from None
            if j < 1:
                raise ParseError(lineno, f"feature index {j} is not positive")
            if j == prev:
                raise ParseError(lineno, f"duplicate feature index {j}")
            if j < prev:
                raise ParseError(
                    lineno, f"feature indices must increase: {j} after {prev}"
                )
            prev = j
            if v != 0.0:
                idx_list.append(j - 1)
                val_list.append(v)
        max_dim = max(max_dim, prev)
        points.append(
            SparsePoint(
                np.array(idx_list, dtype=np.int64),
                np.array(val_list, dtype=np.float64),
                label,
            )
        )
    if not points:
        raise ParseError(0, "no data lines found")
    if dim is None:
        dim = max_dim
    elif dim < max_dim:
        raise ValueError(f"dim override {dim} is below highest seen index {max_dim}")
    return Dataset(points, dim)


def load_libsvm(path: str, dim: int | None = None) -> Dataset:
    """Read a LIBSVM file from disk; `.gz` paths are decompressed on the fly."""
    if str(path).endswith(".gz"):
        with gzip.open(path, "rt") as fh:
            return parse_libsvm(fh, dim=dim)
    with open(path, "rt") as fh:
        return parse_libsvm(fh, dim=dim)


def write_libsvm(dataset: Dataset, stream: io.TextIOBase) -> None:
    """Canonical writer: 1-based indices, shortest round-trippable floats."""
    for p in dataset.points:
        parts = [format(p.label, ".17g")]
        for j, v in zip(p.indices, p.values):
            parts.append(f"{int(j) + 1}:{format(float(v), '.17g')}")
        stream.write(" ".join(parts) + "\n")


def dumps_libsvm(dataset: Dataset) -> str:
    buf = io.StringIO()
    write_libsvm(dataset, buf)
    return buf.getvalue()


@dataclass
class Partition:
    """Assignment of points to K nodes and, inside each node, to R cores.

    node_of / core_of are length-n arrays. `cores[k][r]` lists the point ids
    owned by core r of node k; each point appears in exactly one such list.
    """

    K: int
    R: int
    seed: int
    node_of: np.ndarray
    core_of: np.ndarray
    cores: list[list[np.ndarray]]

    @property
    def sizes(self) -> list[int]:
        return [int(sum(block.size for block in node)) for node in self.cores]

    def node_indices(self, k: int) -> np.ndarray:
        return np.concatenate(self.cores[k]) if self.cores[k] else np.array([], int)

    def iter_blocks(self) -> Iterator[tuple[int, int, np.ndarray]]:
        for k in range(self.K):
            for r in range(self.R):
                yield k, r, self.cores[k][r]


def partition(dataset: Dataset, K: int, R: int, seed: int) -> Partition:
    """Shuffle points with a seeded PRNG, deal round-robin to K nodes, then
    deal each node's points round-robin to its R cores.

    Node sizes are balanced within one point. Every core owns at least one
    point because K*R <= n is required.
    """
    n = dataset.n
    if K < 1 or R < 1:
        raise PartitionError("K and R must be at least 1")
    if K * R > n:
        raise PartitionError(f"K*R = {K * R} exceeds n = {n}")
    perm = np.random.default_rng(seed).permutation(n)
    node_of = np.empty(n, dtype=np.int64)
    core_of = np.empty(n, dtype=np.int64)
    node_lists: list[list[int]] = [[] for _ in range(K)]
    for pos, i in enumerate(perm):
        node_lists[pos % K].append(int(i))
    cores: list[list[np.ndarray]] = []
    for k in range(K):
        core_lists: list[list[int]] = [[] for _ in range(R)]
        for pos, i in enumerate(node_lists[k]):
            core_lists[pos % R].append(i)
            node_of[i] = k
            core_of[i] = pos % R
        cores.append([np.array(c, dtype=np.int64) for c in core_lists])
    return Partition(K=K, R=R, seed=seed, node_of=node_of, core_of=core_of, cores=cores)
