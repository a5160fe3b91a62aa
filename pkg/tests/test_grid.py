import numpy as np
import pytest

from dphist.grid import (
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

from oracles import naive_region_sum

# Worked-example grid: 3x3 cells grouped into four partitions holding
# 0, 12, 4 and 2 points.
FIG_GRID = np.array([[0, 0, 4], [3, 3, 1], [3, 3, 1]])


def fig_points():
    pts = []
    for i in range(3):
        for j in range(3):
            pts.extend([(i + 0.5, j + 0.5)] * FIG_GRID[i, j])
    return np.array(pts)


class TestDiscretize:
    def test_empty_input(self):
        matrix, rejected = discretize([], (0, 1, 0, 1), 4, 4)
        assert matrix.total == 0 and rejected == 0
        assert matrix.counts.shape == (4, 4)

    def test_worked_example_partitions(self):
        matrix, rejected = discretize(fig_points(), (0, 3, 0, 3), 3, 3)
        assert rejected == 0
        c1 = matrix.region_sum(Region(0, 1, 0, 2))
        c2 = matrix.region_sum(Region(1, 3, 0, 2))
        c3 = matrix.region_sum(Region(0, 1, 2, 3))
        c4 = matrix.region_sum(Region(1, 3, 2, 3))
        assert (c1, c2, c3, c4) == (0, 12, 4, 2)

    def test_matches_independent_tally(self):
        rng = np.random.default_rng(42)
        pts = rng.uniform(0, 16, size=(10000, 2))
        matrix, rejected = discretize(pts, (0, 16, 0, 16), 16, 16)
        assert rejected == 0
        assert matrix.total == 10000
        tally = np.zeros((16, 16), dtype=int)
        for x, y in pts:
            tally[int(x), int(y)] += 1
        assert np.array_equal(matrix.counts, tally)

    def test_out_of_bounds_rejected(self):
        pts = np.array([[0.5, 0.5], [2.5, 0.5], [-1.0, 0.5], [0.5, 9.0]])
        matrix, rejected = discretize(pts, (0, 2, 0, 2), 2, 2)
        assert matrix.total == 1
        assert rejected == 3
        assert matrix.total + rejected == len(pts)

    def test_degenerate_bounds(self):
        with pytest.raises(ValueError):
            discretize([(0, 0)], (1, 1, 0, 2), 2, 2)

    def test_nonfinite_points(self):
        with pytest.raises(ValueError):
            discretize([(np.nan, 0.0)], (0, 1, 0, 1), 2, 2)


class TestSubgridSum:
    def test_full_domain(self):
        matrix = FrequencyMatrix(FIG_GRID)
        assert subgrid_sum(matrix, matrix.full_region()) == matrix.total == 18

    def test_worked_example_block(self):
        matrix = FrequencyMatrix(FIG_GRID)
        assert subgrid_sum(matrix, Region(0, 3, 0, 2)) == 12

    def test_against_naive_sum(self):
        rng = np.random.default_rng(7)
        counts = rng.integers(0, 20, size=(64, 64))
        matrix = FrequencyMatrix(counts)
        for _ in range(500):
            r0, c0 = rng.integers(0, 64, size=2)
            r1 = rng.integers(r0 + 1, 65)
            c1 = rng.integers(c0 + 1, 65)
            region = Region(int(r0), int(r1), int(c0), int(c1))
            assert matrix.region_sum(region) == naive_region_sum(counts, r0, r1, c0, c1)

    def test_disjoint_partition_sums_to_total(self):
        rng = np.random.default_rng(3)
        matrix = FrequencyMatrix(rng.integers(0, 9, size=(12, 9)))
        pieces = [
            Region(0, 5, 0, 9),
            Region(5, 12, 0, 4),
            Region(5, 12, 4, 9),
        ]
        assert sum(matrix.region_sum(p) for p in pieces) == matrix.total

    def test_out_of_bounds_region(self):
        matrix = FrequencyMatrix.zeros(4, 4)
        with pytest.raises(ValueError):
            matrix.region_sum(Region(0, 5, 0, 4))


class TestFrequencyMatrix:
    def test_rejects_negative_counts(self):
        with pytest.raises(ValueError):
            FrequencyMatrix([[1, -1]])

    def test_counts_read_only(self):
        matrix = FrequencyMatrix.zeros(2, 2)
        with pytest.raises(ValueError):
            matrix.counts[0, 0] = 5


class TestGaussianGenerator:
    def test_zero_points(self):
        matrix = generate_gaussian(0, 10.0, 8, 8, seed=1)
        assert matrix.total == 0

    def test_total_is_exact(self):
        matrix = generate_gaussian(5000, 3.0, 32, 32, seed=9)
        assert matrix.total == 5000

    def test_spread_orders_occupancy(self):
        tight = generate_gaussian(100000, 20.0, 1024, 1024, seed=5)
        wide = generate_gaussian(100000, 100.0, 1024, 1024, seed=5)
        assert (wide.counts > 0).sum() > (tight.counts > 0).sum()

    def test_seed_reproducibility(self):
        a = generate_gaussian(2000, 15.0, 64, 64, seed=123)
        b = generate_gaussian(2000, 15.0, 64, 64, seed=123)
        assert np.array_equal(a.counts, b.counts)

    def test_invalid_sigma(self):
        with pytest.raises(ValueError):
            generate_gaussian(10, 0.0, 8, 8, seed=0)


class TestFileFormats:
    def test_points_round_trip(self, tmp_path):
        pts = np.array([[0.25, 1.5], [3.125, 0.0625]])
        path = tmp_path / "pts.txt"
        save_points(pts, path)
        assert np.array_equal(load_points(path), pts)

    def test_points_comments_ignored(self, tmp_path):
        path = tmp_path / "pts.txt"
        path.write_text("# header\n1.0,2.0\n\n# trailing\n3.0,4.0\n")
        assert load_points(path).tolist() == [[1.0, 2.0], [3.0, 4.0]]

    def test_matrix_round_trip(self, tmp_path):
        matrix = FrequencyMatrix(FIG_GRID)
        path = tmp_path / "matrix.txt"
        save_matrix(matrix, path)
        loaded = load_matrix(path)
        assert loaded == matrix
        assert path.read_text().splitlines()[0] == "3 3 18"

    def test_matrix_header_mismatch(self, tmp_path):
        path = tmp_path / "matrix.txt"
        path.write_text("2 2 5\n1 1\n1 1\n")
        with pytest.raises(ValueError):
            load_matrix(path)
