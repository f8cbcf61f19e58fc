import numpy as np
import pandas as pd
import pytest

from features import jobs, report


class TestJobs:
    @pytest.mark.parametrize("workers", [1, 4])
    def test_order_preserved(self, workers):
        assert jobs.run_jobs(lambda x: x * x, range(10), workers) == [x * x for x in range(10)]

    def test_error_propagates(self):
        def boom(x):
            raise RuntimeError(f"job {x}")

        with pytest.raises(RuntimeError):
            jobs.run_jobs(boom, [1, 2], workers=2)

    def test_spawned_streams(self):
        a = [g.random() for g in jobs.spawn_generators(3, 4)]
        b = [g.random() for g in jobs.spawn_generators(3, 4)]
        assert a == b
        assert len(set(a)) == 4


class TestReport:
    def test_csv_is_lf(self, tmp_path):
        path = report.write_csv(pd.DataFrame({"a": [1, 2], "b": [0.5, np.pi]}), tmp_path / "x" / "t.csv")
        raw = path.read_bytes()
        assert raw.startswith(b"a,b\n") and b"\r" not in raw
        assert pd.read_csv(path)["b"].iloc[1] == pytest.approx(np.pi, rel=1e-15)

    def test_unwritable_path(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(report.ReportError):
            report.write_text("y", blocker / "child.txt")

    def test_verification_text(self):
        df = pd.DataFrame([
            {"battery": "leverage", "check": "scores sum to n", "cases": 3, "failures": 0,
             "margin": 1e-9, "passed": True},
            {"battery": "leverage", "check": "pmf sums to one", "cases": 3, "failures": 3,
             "margin": -0.1, "passed": False},
        ])
        text = report.format_verification(df)
        assert "1/2 checks passed" in text
        assert "✅ scores sum to n" in text and "❌ pmf sums to one" in text

    def test_gnuplot_groups(self):
        script = report.gnuplot_lines("m.csv", "tau", ["theta"], "strategy", ["greedy", "uniform"], "t", "theta")
        assert script.count("with lines") == 2
        assert "set datafile separator ','" in script
