"""Range-count queries over released histograms and MRE evaluation.

Queries are cell-aligned rectangles. A released leaf that partially
overlaps a query contributes its noisy count scaled by the overlap
fraction (uniform density within the leaf). Accuracy is reported as
mean relative error with a smoothing floor in the denominator so
zero-count queries stay defined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .grid import FrequencyMatrix, Region
from .histogram import PrivateHistogram

__all__ = [
    "RangeQuery",
    "WorkloadSpec",
    "Workload",
    "EvalReport",
    "answer_query",
    "true_count",
    "relative_error",
    "generate_workload",
    "evaluate",
    "save_workload",
    "load_workload",
]

RangeQuery = Region

DEFAULT_SMOOTHING = 20.0


@dataclass(frozen=True)
class WorkloadSpec:
    """Reproducible workload recipe.

    ``shape`` is "random" (independent uniform width and height) or
    "square"; square workloads need a fractional ``size`` (e.g. 0.02
    covers 2% of the grid area) while random ones use ``size="random"``.
    """

    count: int
    shape: str = "random"
    size: float | str = "random"
    seed: int = 0

    def __post_init__(self):
        if self.count < 0:
            raise ValueError("count must be non-negative")
        if self.shape not in ("random", "square"):
            raise ValueError(f"shape must be 'random' or 'square', got {self.shape!r}")
        if self.shape == "square":
            if not isinstance(self.size, (int, float)) or not (0 < float(self.size) <= 1):
                raise ValueError("square workloads need size in (0, 1]")
        elif self.size != "random":
            raise ValueError("random-shape workloads use size='random'")


@dataclass
class Workload:
    queries: np.ndarray  # (Q, 4) int64, half-open rectangles
    spec: WorkloadSpec | None = None

    def __post_init__(self):
        self.queries = np.asarray(self.queries, dtype=np.int64).reshape(-1, 4)

    def __len__(self) -> int:
        return self.queries.shape[0]


@dataclass
class EvalReport:
    true: np.ndarray
    answers: np.ndarray
    rel_errors: np.ndarray
    mre: float
    smoothing: float
    meta: dict = field(default_factory=dict)

    def save(self, path) -> None:
        """Per-query rows plus a summary footer line."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("query_id,true,answer,rel_err\n")
            for i, (t, a, e) in enumerate(zip(self.true, self.answers, self.rel_errors)):
                fh.write(f"{i},{t:.12g},{a:.12g},{e:.12g}\n")
            fh.write(f"# summary mre={self.mre:.12g} queries={len(self.true)} smoothing={self.smoothing:.12g}\n")


def _check_query(region: Region, shape: tuple[int, int]) -> None:
    region.require_within(*shape)


def answer_query(hist: PrivateHistogram, query: Region) -> float:
    """Noisy answer under the uniformity assumption inside each leaf."""
    _check_query(query, hist.shape)
    q = np.asarray([query.as_tuple()], dtype=np.int64)
    return float(kernels.answer_workload(hist.bounds, hist.ncounts, q)[0])


def answer_workload(hist: PrivateHistogram, workload: Workload) -> np.ndarray:
    for row in workload.queries:
        _check_query(Region(*row.tolist()), hist.shape)
    return kernels.answer_workload(hist.bounds, hist.ncounts, workload.queries)


def true_count(matrix: FrequencyMatrix, query: Region) -> int:
    """Exact count for evaluation ground truth."""
    return matrix.region_sum(query)


def relative_error(count: float, answer: float, smoothing: float = DEFAULT_SMOOTHING) -> float:
    """Percent relative error with a smoothing floor on the denominator."""
    if smoothing <= 0:
        raise ValueError("smoothing must be positive")
    return abs(count - answer) / max(count, smoothing) * 100.0


def generate_workload(spec: WorkloadSpec, rows: int, cols: int) -> Workload:
    """Deterministic workload for a rows x cols grid."""
    rng = np.random.default_rng(np.random.SeedSequence(int(spec.seed)))
    queries = np.empty((spec.count, 4), dtype=np.int64)
    if spec.shape == "square":
        side = int(round(math.sqrt(float(spec.size) * rows * cols)))
        side_r = max(1, min(side, rows))
        side_c = max(1, min(side, cols))
        for i in range(spec.count):
            r_center = int(rng.integers(0, rows))
            c_center = int(rng.integers(0, cols))
            r_lo = min(max(r_center - side_r // 2, 0), rows - side_r)
            c_lo = min(max(c_center - side_c // 2, 0), cols - side_c)
            queries[i] = (r_lo, r_lo + side_r, c_lo, c_lo + side_c)
    else:
        for i in range(spec.count):
            h = int(rng.integers(1, rows + 1))
            w = int(rng.integers(1, cols + 1))
            r_lo = int(rng.integers(0, rows - h + 1))
            c_lo = int(rng.integers(0, cols - w + 1))
            queries[i] = (r_lo, r_lo + h, c_lo, c_lo + w)
    return Workload(queries=queries, spec=spec)


def evaluate(
    hist: PrivateHistogram,
    matrix: FrequencyMatrix,
    workload: Workload,
    smoothing: float = DEFAULT_SMOOTHING,
) -> EvalReport:
    """Answer every query, compare to the exact counts, report the MRE."""
    if smoothing <= 0:
        raise ValueError("smoothing must be positive")
    if hist.shape != matrix.shape:
        raise ValueError(f"histogram shape {hist.shape} != matrix shape {matrix.shape}")
    answers = answer_workload(hist, workload)
    true = np.array(
        [matrix.region_sum(Region(*row.tolist())) for row in workload.queries], dtype=np.float64
    )
    denom = np.maximum(true, smoothing)
    rel = np.abs(true - answers) / denom * 100.0
    mre = float(rel.mean()) if len(rel) else 0.0
    return EvalReport(
        true=true,
        answers=answers,
        rel_errors=rel,
        mre=mre,
        smoothing=smoothing,
        meta={"method": hist.method, "eps_total": hist.eps_total, "queries": len(workload)},
    )


def save_workload(workload: Workload, path) -> None:
    """One query per line: ``row_lo row_hi col_lo col_hi``."""
    with open(path, "w", encoding="utf-8") as fh:
        for r_lo, r_hi, c_lo, c_hi in workload.queries:
            fh.write(f"{r_lo} {r_hi} {c_lo} {c_hi}\n")


def load_workload(path) -> Workload:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 integers")
            rows.append([int(v) for v in parts])
    return Workload(queries=np.asarray(rows, dtype=np.int64).reshape(-1, 4))
