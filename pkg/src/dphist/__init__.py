"""Differentially private 2D location histograms.

Release mechanisms (a homogeneity-driven tree plus classic baselines),
range-count query answering, and a mean-relative-error evaluation
harness over seeded synthetic datasets.
"""

from .baselines import (
    build_adaptive_grid,
    build_flat_uniform,
    build_kdtree,
    build_quadtree,
    build_singular,
    build_uniform_grid,
    enforce_hierarchical_consistency,
)
from .grid import (
    FrequencyMatrix,
    Region,
    discretize,
    generate_gaussian,
    load_matrix,
    load_points,
    save_matrix,
    save_points,
    subgrid_sum,
)
from .histogram import CoverageError, PrivateHistogram
from .htf import (
    HtfParams,
    TreeNode,
    UnsplittableAxisError,
    estimate_height,
    get_split_point,
    noisy_split_baseline,
    optimal_split_exact,
    release,
    split_objective,
)
from .privacy import (
    BudgetLedger,
    BudgetOverflowError,
    BudgetSplit,
    NoiseSource,
    geometric_level_budget,
    laplace_sample,
    uniform_level_budget,
)
from .queries import (
    EvalReport,
    RangeQuery,
    Workload,
    WorkloadSpec,
    answer_query,
    evaluate,
    generate_workload,
    load_workload,
    relative_error,
    save_workload,
    true_count,
)

__version__ = "0.1.0"
