"""Gridded representation of a 2D point dataset.

A dataset is discretized onto an N x M grid of non-negative cell counts
(the frequency matrix). The matrix is immutable after construction and
carries a 2D prefix-sum table so any rectangular sub-grid total is an
O(1) lookup. Also provides the seeded Gaussian-cluster generator used
for synthetic experiments and the plain-text file formats consumed by
the CLI.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Region",
    "FrequencyMatrix",
    "discretize",
    "subgrid_sum",
    "sample_gaussian_points",
    "generate_gaussian",
    "save_points",
    "load_points",
    "save_matrix",
    "load_matrix",
]


@dataclass(frozen=True)
class Region:
    """Half-open rectangle of grid cells: rows [row_lo, row_hi), cols [col_lo, col_hi)."""

    row_lo: int
    row_hi: int
    col_lo: int
    col_hi: int

    def __post_init__(self):
        if not (0 <= self.row_lo < self.row_hi and 0 <= self.col_lo < self.col_hi):
            raise ValueError(f"degenerate region {self}")

    @property
    def rows(self) -> int:
        return self.row_hi - self.row_lo

    @property
    def cols(self) -> int:
        return self.col_hi - self.col_lo

    @property
    def cells(self) -> int:
        return self.rows * self.cols

    def require_within(self, rows: int, cols: int) -> None:
        if self.row_hi > rows or self.col_hi > cols:
            raise ValueError(f"region {self} out of bounds for {rows}x{cols} grid")

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.row_lo, self.row_hi, self.col_lo, self.col_hi)


class FrequencyMatrix:
    """Immutable N x M grid of cell counts with O(1) rectangle sums."""

    def __init__(self, counts):
        arr = np.asarray(counts)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError("counts must be a non-empty 2D array")
        if np.any(arr < 0):
            raise ValueError("cell counts must be non-negative")
        arr = np.ascontiguousarray(arr, dtype=np.int64)
        arr.setflags(write=False)
        self._counts = arr
        # padded prefix table: _prefix[i, j] = sum of counts[:i, :j]
        prefix = np.zeros((arr.shape[0] + 1, arr.shape[1] + 1), dtype=np.int64)
        np.cumsum(np.cumsum(arr, axis=0), axis=1, out=prefix[1:, 1:])
        prefix.setflags(write=False)
        self._prefix = prefix

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "FrequencyMatrix":
        if rows < 1 or cols < 1:
            raise ValueError("grid dimensions must be positive")
        return cls(np.zeros((rows, cols), dtype=np.int64))

    @property
    def counts(self) -> np.ndarray:
        return self._counts

    @property
    def rows(self) -> int:
        return self._counts.shape[0]

    @property
    def cols(self) -> int:
        return self._counts.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self._counts.shape

    @property
    def total(self) -> int:
        return int(self._prefix[-1, -1])

    def full_region(self) -> Region:
        return Region(0, self.rows, 0, self.cols)

    def region_sum(self, region: Region) -> int:
        region.require_within(self.rows, self.cols)
        p = self._prefix
        return int(
            p[region.row_hi, region.col_hi]
            - p[region.row_lo, region.col_hi]
            - p[region.row_hi, region.col_lo]
            + p[region.row_lo, region.col_lo]
        )

    def __eq__(self, other) -> bool:
        return isinstance(other, FrequencyMatrix) and np.array_equal(self._counts, other._counts)


def subgrid_sum(matrix: FrequencyMatrix, region: Region) -> int:
    """Total count inside ``region``; O(1) via the prefix-sum table."""
    return matrix.region_sum(region)


def discretize(points, bounds, rows: int, cols: int) -> tuple[FrequencyMatrix, int]:
    """Bin (x, y) points onto a rows x cols grid.

    ``bounds`` is ``(x_min, x_max, y_min, y_max)`` and maps half-open:
    x covers the row axis, y the column axis. Points outside the bounds
    are excluded and tallied; returns ``(matrix, n_rejected)`` so that
    ``matrix.total + n_rejected`` equals the number of input points.
    """
    x_min, x_max, y_min, y_max = (float(b) for b in bounds)
    if not (math.isfinite(x_min) and math.isfinite(x_max) and math.isfinite(y_min) and math.isfinite(y_max)):
        raise ValueError("bounds must be finite")
    if x_max <= x_min or y_max <= y_min:
        raise ValueError("degenerate bounds")
    if rows < 1 or cols < 1:
        raise ValueError("grid dimensions must be positive")

    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        return FrequencyMatrix.zeros(rows, cols), 0
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be an (n, 2) array of x,y pairs")
    if not np.all(np.isfinite(pts)):
        raise ValueError("point coordinates must be finite")

    x = pts[:, 0]
    y = pts[:, 1]
    inside = (x >= x_min) & (x < x_max) & (y >= y_min) & (y < y_max)
    xi = x[inside]
    yi = y[inside]
    r = np.minimum((xi - x_min) * (rows / (x_max - x_min)), rows - 1).astype(np.int64)
    c = np.minimum((yi - y_min) * (cols / (y_max - y_min)), cols - 1).astype(np.int64)
    flat = np.bincount(r * cols + c, minlength=rows * cols)
    matrix = FrequencyMatrix(flat.reshape(rows, cols))
    return matrix, int(pts.shape[0] - xi.shape[0])


def sample_gaussian_points(n: int, sigma: float, rows: int, cols: int, rng) -> np.ndarray:
    """Draw ``n`` points from one Gaussian cluster inside [0, rows) x [0, cols).

    The cluster center is chosen uniformly at random; out-of-domain draws
    are resampled up to 100 times and any stragglers are clamped to the
    nearest boundary cell, so the output always has exactly ``n`` points.
    Coordinates are in cell units.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if rows < 1 or cols < 1:
        raise ValueError("grid dimensions must be positive")
    center = rng.uniform(0.0, [rows, cols])
    pts = center + rng.normal(0.0, sigma, size=(n, 2))
    hi = np.array([rows, cols], dtype=np.float64)
    for _ in range(100):
        bad = np.any((pts < 0.0) | (pts >= hi), axis=1)
        if not bad.any():
            break
        pts[bad] = center + rng.normal(0.0, sigma, size=(int(bad.sum()), 2))
    edge = np.nextafter(hi, 0.0)
    np.clip(pts, 0.0, edge, out=pts)
    return pts


def generate_gaussian(n: int, sigma: float, rows: int, cols: int, seed: int) -> FrequencyMatrix:
    """Synthetic Gaussian-cluster frequency matrix, bit-reproducible per seed."""
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    pts = sample_gaussian_points(n, sigma, rows, cols, rng)
    matrix, rejected = discretize(pts, (0.0, rows, 0.0, cols), rows, cols)
    assert rejected == 0
    return matrix


# ---------------------------------------------------------------------------
# file formats

def save_points(points, path) -> None:
    """Write points as one ``x,y`` pair per line."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# x,y\n")
        for x, y in pts:
            fh.write(f"{x:.10g},{y:.10g}\n")


def load_points(path) -> np.ndarray:
    """Read a point file; ``#`` comment lines and blank lines are ignored."""
    xs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'x,y', got {line!r}")
            xs.append((float(parts[0]), float(parts[1])))
    return np.asarray(xs, dtype=np.float64).reshape(-1, 2)


def save_matrix(matrix: FrequencyMatrix, path) -> None:
    """Snapshot export: header ``N M total`` then N rows of M integers."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{matrix.rows} {matrix.cols} {matrix.total}\n")
        for row in matrix.counts:
            fh.write(" ".join(str(int(v)) for v in row) + "\n")


def load_matrix(path) -> FrequencyMatrix:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise ValueError(f"{path}: malformed matrix header")
        rows, cols, total = (int(v) for v in header)
        counts = np.loadtxt(fh, dtype=np.int64, ndmin=2)
    if counts.shape != (rows, cols):
        raise ValueError(f"{path}: expected {rows}x{cols} matrix, got {counts.shape}")
    matrix = FrequencyMatrix(counts)
    if matrix.total != total:
        raise ValueError(f"{path}: header total {total} != cell sum {matrix.total}")
    return matrix
