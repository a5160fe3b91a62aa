import numpy as np
import pytest

from dphist.grid import FrequencyMatrix, Region
from dphist.histogram import PrivateHistogram
from dphist.htf import HtfParams, release
from dphist.privacy import NoiseSource
from dphist.queries import (
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

from oracles import naive_region_sum

FIG_GRID = np.array([[0, 0, 4], [3, 3, 1], [3, 3, 1]])


def fig_histogram(n1=0.0, n2=0.0, n3=0.0, n4=0.0):
    # the four worked-example partitions with injectable noise values
    bounds = [(0, 1, 0, 2), (1, 3, 0, 2), (0, 1, 2, 3), (1, 3, 2, 3)]
    ncounts = [0 + n1, 12 + n2, 4 + n3, 2 + n4]
    return PrivateHistogram(shape=(3, 3), bounds=bounds, ncounts=ncounts, eps_total=1.0)


def cell_expansion_oracle(hist, query):
    """Spread each leaf count uniformly over its cells, then sum the query."""
    density = np.zeros(hist.shape)
    for (r0, r1, c0, c1), ncount in zip(hist.bounds, hist.ncounts):
        density[r0:r1, c0:c1] = ncount / ((r1 - r0) * (c1 - c0))
    return density[query.row_lo:query.row_hi, query.col_lo:query.col_hi].sum()


class TestAnswerQuery:
    def test_worked_example_formula(self):
        n2, n4 = 0.75, -1.25
        hist = fig_histogram(n2=n2, n4=n4)
        # dashed query: bottom row, right two columns
        got = answer_query(hist, Region(2, 3, 1, 3))
        assert got == pytest.approx((12 + n2) / 4 + (2 + n4) / 2)

    def test_whole_domain_sums_all_leaves(self):
        hist = fig_histogram(n1=0.5, n2=1.5, n3=-2.0, n4=0.25)
        got = answer_query(hist, Region(0, 3, 0, 3))
        assert got == pytest.approx(hist.ncounts.sum())

    def test_matches_cell_expansion_oracle(self):
        rng = np.random.default_rng(23)
        matrix = FrequencyMatrix(rng.integers(0, 30, size=(32, 32)))
        hist = release(matrix, HtfParams(eps_total=0.4, height_override=4), NoiseSource(4))
        for _ in range(500):
            r0, c0 = rng.integers(0, 32, size=2)
            query = Region(int(r0), int(rng.integers(r0 + 1, 33)), int(c0), int(rng.integers(c0 + 1, 33)))
            assert answer_query(hist, query) == pytest.approx(
                cell_expansion_oracle(hist, query), abs=1e-9
            )

    def test_out_of_bounds_query(self):
        with pytest.raises(ValueError):
            answer_query(fig_histogram(), Region(0, 4, 0, 3))

    def test_linear_in_counts(self):
        hist = fig_histogram(n1=0.3, n2=-0.7, n3=2.0, n4=0.1)
        query = Region(1, 3, 0, 3)
        scaled = PrivateHistogram(
            shape=hist.shape, bounds=hist.bounds, ncounts=3.0 * hist.ncounts, eps_total=1.0
        )
        assert answer_query(scaled, query) == pytest.approx(3.0 * answer_query(hist, query))

    def test_disjoint_cover_sums_to_total(self):
        hist = fig_histogram(n1=1.0, n2=2.0, n3=3.0, n4=4.0)
        parts = [Region(0, 3, 0, 1), Region(0, 3, 1, 2), Region(0, 3, 2, 3)]
        total = sum(answer_query(hist, p) for p in parts)
        assert total == pytest.approx(hist.ncounts.sum())


class TestTrueCount:
    def test_empty_matrix(self):
        assert true_count(FrequencyMatrix.zeros(4, 4), Region(0, 4, 0, 4)) == 0

    def test_worked_example_query(self):
        matrix = FrequencyMatrix(FIG_GRID)
        assert true_count(matrix, Region(2, 3, 1, 3)) == 4

    def test_matches_naive_loop(self):
        rng = np.random.default_rng(31)
        counts = rng.integers(0, 10, size=(20, 20))
        matrix = FrequencyMatrix(counts)
        for _ in range(100):
            r0, c0 = rng.integers(0, 20, size=2)
            r1, c1 = rng.integers(r0 + 1, 21), rng.integers(c0 + 1, 21)
            region = Region(int(r0), int(r1), int(c0), int(c1))
            assert true_count(matrix, region) == naive_region_sum(counts, r0, r1, c0, c1)


class TestRelativeError:
    def test_basic(self):
        assert relative_error(100, 110, 20) == pytest.approx(10.0)

    def test_smoothing_floor(self):
        assert relative_error(0, 5, 20) == pytest.approx(25.0)

    def test_exact_answer(self):
        assert relative_error(123, 123.0, 20) == 0.0

    def test_smoothing_must_be_positive(self):
        with pytest.raises(ValueError):
            relative_error(1, 1, 0)


class TestGenerateWorkload:
    def test_full_domain_squares(self):
        wl = generate_workload(WorkloadSpec(20, "square", 1.0, seed=0), 64, 64)
        assert all(tuple(q) == (0, 64, 0, 64) for q in wl.queries)

    def test_seed_reproducibility(self):
        a = generate_workload(WorkloadSpec(100, "random", "random", seed=9), 128, 128)
        b = generate_workload(WorkloadSpec(100, "random", "random", seed=9), 128, 128)
        assert np.array_equal(a.queries, b.queries)

    def test_two_percent_side_length(self):
        wl = generate_workload(WorkloadSpec(50, "square", 0.02, seed=1), 1024, 1024)
        sides_r = wl.queries[:, 1] - wl.queries[:, 0]
        sides_c = wl.queries[:, 3] - wl.queries[:, 2]
        assert (sides_r == 145).all() and (sides_c == 145).all()

    def test_queries_in_bounds(self):
        wl = generate_workload(WorkloadSpec(500, "random", "random", seed=3), 37, 53)
        q = wl.queries
        assert (q[:, 0] >= 0).all() and (q[:, 1] <= 37).all()
        assert (q[:, 2] >= 0).all() and (q[:, 3] <= 53).all()
        assert (q[:, 1] > q[:, 0]).all() and (q[:, 3] > q[:, 2]).all()

    def test_invalid_spec(self):
        with pytest.raises(ValueError):
            WorkloadSpec(10, "square", "random")
        with pytest.raises(ValueError):
            WorkloadSpec(10, "random", 0.02)
        with pytest.raises(ValueError):
            WorkloadSpec(10, "hexagon", "random")


class TestEvaluate:
    def test_zero_noise_leaf_aligned_queries(self):
        rng = np.random.default_rng(6)
        matrix = FrequencyMatrix(rng.integers(0, 50, size=(32, 32)))
        hist = release(
            matrix,
            HtfParams(eps_total=0.5, height_override=4, stop_count=25.0),
            NoiseSource(0, zero_noise=True),
        )
        workload = Workload(queries=hist.bounds.copy())
        report = evaluate(hist, matrix, workload)
        assert report.mre == 0.0

    def test_mre_is_mean_of_rows(self):
        matrix = FrequencyMatrix(FIG_GRID)
        hist = fig_histogram(n1=2.0, n2=-1.0, n3=0.5, n4=1.0)
        wl = generate_workload(WorkloadSpec(64, "random", "random", seed=2), 3, 3)
        report = evaluate(hist, matrix, wl)
        assert report.mre == pytest.approx(report.rel_errors.mean())

    def test_order_invariance(self):
        matrix = FrequencyMatrix(FIG_GRID)
        hist = fig_histogram(n2=3.0)
        wl = generate_workload(WorkloadSpec(32, "random", "random", seed=4), 3, 3)
        shuffled = Workload(queries=wl.queries[::-1].copy())
        assert evaluate(hist, matrix, wl).mre == pytest.approx(evaluate(hist, matrix, shuffled).mre)

    def test_report_file(self, tmp_path):
        matrix = FrequencyMatrix(FIG_GRID)
        hist = fig_histogram(n2=1.0)
        wl = generate_workload(WorkloadSpec(10, "random", "random", seed=5), 3, 3)
        report = evaluate(hist, matrix, wl)
        path = tmp_path / "report.csv"
        report.save(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "query_id,true,answer,rel_err"
        assert len(lines) == 12  # header + 10 rows + summary footer
        assert lines[-1].startswith("# summary mre=")


class TestWorkloadFiles:
    def test_round_trip(self, tmp_path):
        wl = generate_workload(WorkloadSpec(25, "random", "random", seed=8), 16, 16)
        path = tmp_path / "wl.txt"
        save_workload(wl, path)
        loaded = load_workload(path)
        assert np.array_equal(loaded.queries, wl.queries)
