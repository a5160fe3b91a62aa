import pytest

from dphist.cli import main
from dphist.grid import load_matrix, load_points
from dphist.histogram import PrivateHistogram


def run(args):
    return main([str(a) for a in args])


@pytest.fixture()
def matrix_file(tmp_path):
    run(["generate", "--out", tmp_path / "pts.txt", "--n", 5000, "--sigma", 8,
         "--grid", 32, "--seed", 4])
    run(["ingest", "--points", tmp_path / "pts.txt", "--grid", 32,
         "--out", tmp_path / "matrix.txt"])
    return tmp_path / "matrix.txt"


class TestGenerate:
    def test_writes_points(self, tmp_path):
        out = tmp_path / "pts.txt"
        assert run(["generate", "--out", out, "--n", 100, "--sigma", 5, "--grid", 16, "--seed", 1]) == 0
        assert len(load_points(out)) == 100

    def test_empty_dataset_keeps_header(self, tmp_path):
        out = tmp_path / "pts.txt"
        assert run(["generate", "--out", out, "--n", 0, "--sigma", 5, "--grid", 16]) == 0
        assert out.read_text().startswith("#")
        assert len(load_points(out)) == 0

    def test_deterministic(self, tmp_path):
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        run(["generate", "--out", a, "--n", 500, "--sigma", 9, "--grid", 64, "--seed", 3])
        run(["generate", "--out", b, "--n", 500, "--sigma", 9, "--grid", 64, "--seed", 3])
        assert a.read_bytes() == b.read_bytes()


class TestIngest:
    def test_matrix_total(self, tmp_path, matrix_file):
        matrix = load_matrix(matrix_file)
        assert matrix.total == 5000
        assert matrix.shape == (32, 32)

    def test_custom_bounds_reject_outside(self, tmp_path):
        pts = tmp_path / "p.txt"
        pts.write_text("0.5,0.5\n5.0,5.0\n")
        out = tmp_path / "m.txt"
        assert run(["ingest", "--points", pts, "--grid", 4, "--bounds", "0,1,0,1", "--out", out]) == 0
        assert load_matrix(out).total == 1


class TestRelease:
    def test_htf_release_writes_outputs(self, tmp_path, matrix_file):
        out = tmp_path / "hist.txt"
        code = run(["release", "--matrix", matrix_file, "--method", "htf",
                    "--eps-total", 0.5, "--eps-partition-level", 5e-4,
                    "--eps-height", 1e-4, "--T", 3, "--stop-count", 20,
                    "--stop-cells", 5, "--seed", 2, "--out", out])
        assert code == 0
        hist = PrivateHistogram.load(out)
        hist.validate_cover()
        assert (tmp_path / "hist.txt.ledger.csv").exists()

    def test_all_methods_run(self, tmp_path, matrix_file):
        for method in ("ug", "ag", "quadtree", "kdtree", "singular", "uniform"):
            out = tmp_path / f"{method}.txt"
            code = run(["release", "--matrix", matrix_file, "--method", method,
                        "--eps-total", 0.4, "--height", 3, "--seed", 1, "--out", out])
            assert code == 0, method
            PrivateHistogram.load(out).validate_cover()

    def test_invalid_budget_exits_2_without_outputs(self, tmp_path, matrix_file):
        out = tmp_path / "hist.txt"
        code = run(["release", "--matrix", matrix_file, "--method", "htf",
                    "--eps-total", 0.001, "--eps-partition-level", 1e-3,
                    "--height", 5, "--out", out])
        assert code == 2
        assert not out.exists()

    def test_missing_matrix_exits_3(self, tmp_path):
        code = run(["release", "--matrix", tmp_path / "nope.txt", "--out", tmp_path / "h.txt"])
        assert code == 3

    def test_clamp_flag(self, tmp_path, matrix_file):
        out = tmp_path / "hist.txt"
        run(["release", "--matrix", matrix_file, "--method", "singular",
             "--eps-total", 0.1, "--seed", 5, "--out", out, "--clamp-nonnegative"])
        hist = PrivateHistogram.load(out)
        assert (hist.ncounts >= 0).all()

    def test_config_file_with_flag_override(self, tmp_path, matrix_file):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            f"matrix={matrix_file}\nmethod=htf\neps-total=0.5\nstop-count=20\nseed=9\n"
        )
        out = tmp_path / "hist.txt"
        code = run(["release", "--config", cfg, "--out", out, "--eps-total", "0.6"])
        assert code == 0
        assert PrivateHistogram.load(out).eps_total == pytest.approx(0.6)


class TestEvaluate:
    def test_report_rows_match_query_count(self, tmp_path, matrix_file):
        hist = tmp_path / "hist.txt"
        run(["release", "--matrix", matrix_file, "--method", "ug",
             "--eps-total", 0.5, "--seed", 1, "--out", hist])
        report = tmp_path / "report.csv"
        code = run(["evaluate", "--matrix", matrix_file, "--hist", hist,
                    "--queries", 50, "--seed", 3, "--out", report])
        assert code == 0
        lines = report.read_text().splitlines()
        assert len(lines) == 52  # header + 50 rows + footer

    def test_workload_file_row_count(self, tmp_path, matrix_file):
        hist = tmp_path / "hist.txt"
        run(["release", "--matrix", matrix_file, "--method", "uniform",
             "--eps-total", 0.5, "--seed", 1, "--out", hist])
        wl = tmp_path / "wl.txt"
        wl.write_text("0 4 0 4\n1 32 1 32\n0 32 0 32\n")
        report = tmp_path / "report.csv"
        assert run(["evaluate", "--matrix", matrix_file, "--hist", hist,
                    "--workload", wl, "--out", report]) == 0
        assert len(report.read_text().splitlines()) == 5

    def test_missing_histogram_exits_3(self, tmp_path, matrix_file):
        assert run(["evaluate", "--matrix", matrix_file,
                    "--hist", tmp_path / "nope.txt", "--out", tmp_path / "r.csv"]) == 3


class TestSweep:
    def write_config(self, tmp_path, **overrides):
        cfg = {
            "methods": "htf,ug,uniform",
            "eps": "0.5",
            "sizes": "random",
            "seeds": "0,1",
            "sigmas": "6",
            "n": "2000",
            "grid": "32",
            "queries": "40",
        }
        cfg.update(overrides)
        path = tmp_path / "sweep.cfg"
        path.write_text("".join(f"{k}={v}\n" for k, v in cfg.items()))
        return path

    def test_row_count_is_cartesian_product(self, tmp_path):
        cfg = self.write_config(tmp_path)
        out = tmp_path / "table.csv"
        assert run(["sweep", "--config", cfg, "--out", out]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "method,sigma,eps_total,size,seed,mre,status"
        assert len(lines) == 1 + 3 * 2  # methods x seeds
        assert all(line.endswith(",ok") for line in lines[1:])

    def test_repeat_identical(self, tmp_path):
        cfg = self.write_config(tmp_path)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run(["sweep", "--config", cfg, "--out", a])
        run(["sweep", "--config", cfg, "--out", b])
        assert a.read_bytes() == b.read_bytes()

    def test_unknown_method_exits_2(self, tmp_path):
        cfg = self.write_config(tmp_path, methods="htf,wavelet")
        assert run(["sweep", "--config", cfg, "--out", tmp_path / "t.csv"]) == 2


class TestDeterminism:
    def test_release_byte_identical(self, tmp_path, matrix_file):
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        for out in (a, b):
            run(["release", "--matrix", matrix_file, "--method", "htf",
                 "--eps-total", 0.5, "--seed", 11, "--out", out,
                 "--ledger-out", str(out) + ".ledger"])
        assert a.read_bytes() == b.read_bytes()
        assert (tmp_path / "a.txt.ledger").read_bytes() == (tmp_path / "b.txt.ledger").read_bytes()
