import csv
import json

from lshawkes.cli import main
from lshawkes.core import read_events_csv
from lshawkes.experiments import THREADS_ENV, default_threads


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestSingleRun:
    def test_simulate_fit_test(self, tmp_path, capsys):
        sim = tmp_path / "sim"
        assert main(["simulate", "--out", str(sim), "--seed", "3", "--horizon", "400"]) == 0
        ev = read_events_csv(sim / "events.csv")
        assert ev.horizon == 400.0 and ev.n_events > 0
        assert json.loads((sim / "manifest.json").read_text())["command"] == "simulate"
        capsys.readouterr()

        assert main(["fit", str(sim / "events.csv"), "--out", str(tmp_path / "fit")]) == 0
        fit = json.loads((tmp_path / "fit" / "fit.json").read_text())
        assert fit["converged"] and set(fit["theta"]) >= {"mu", "beta"}

        assert main(["test", str(sim / "events.csv"), "--out", str(tmp_path / "test"), "--degree", "2"]) == 0
        rep = json.loads((tmp_path / "test" / "report.json").read_text())
        assert rep["degree"] == 2 and rep["p_corrected"] >= rep["p_raw"]

    def test_simulate_is_deterministic(self, tmp_path):
        for name in ("a", "b"):
            main(["simulate", "--out", str(tmp_path / name), "--seed", "9", "--horizon", "200"])
        assert (tmp_path / "a" / "events.csv").read_bytes() == (tmp_path / "b" / "events.csv").read_bytes()

    def test_config_file_and_override(self, tmp_path):
        cfg = tmp_path / "run.ini"
        cfg.write_text("[simulate]\nhorizon = 150\nseed = 4\nmu = 0.5\ng_amplitude = 0.6\ng_frequency = 5\n")
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "s"), "--horizon", "120"]) == 0
        assert read_events_csv(tmp_path / "s" / "events.csv").horizon == 120.0

    def test_unstable_model_fails(self, tmp_path, capsys):
        cfg = tmp_path / "run.ini"
        cfg.write_text("[simulate]\ng = 2.5\n")
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "s")]) == 1
        assert "Unstable" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["fit", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == 1


class TestExperiments:
    def null_args(self, out, reps):
        return ["exp", "null-dist", "--out", str(out), "--replicates", str(reps), "--horizon", "300",
                "--seed", "5", "--threads", "1"]

    def test_null_dist_bytes_and_resume(self, tmp_path):
        assert main(self.null_args(tmp_path / "a", 4)) == 0
        assert main(self.null_args(tmp_path / "b", 2)) == 0
        assert main(self.null_args(tmp_path / "b", 4)) == 0
        a = (tmp_path / "a" / "null_dist.csv").read_bytes()
        assert a == (tmp_path / "b" / "null_dist.csv").read_bytes()
        rows = read_rows(tmp_path / "a" / "null_dist.csv")
        assert rows[0] == ["replicate", "lambda", "p_raw", "k_hat", "p_corrected", "failure"]
        assert [r[0] for r in rows[1:]] == ["0", "1", "2", "3"]
        summary = read_rows(tmp_path / "a" / "null_dist_summary.csv")
        assert summary[0][:3] == ["replicates", "completed", "ks_distance"]

    def test_null_dist_zero_replicates(self, tmp_path):
        assert main(self.null_args(tmp_path, 0)) == 0
        assert read_rows(tmp_path / "null_dist.csv") == [["replicate", "lambda", "p_raw", "k_hat",
                                                          "p_corrected", "failure"]]
        assert (tmp_path / "null_dist_summary.csv").exists()

    def test_g_recovery_shape(self, tmp_path):
        assert main(["exp", "g-recovery", "--out", str(tmp_path), "--replicates", "2", "--horizon", "300"]) == 0
        rows = read_rows(tmp_path / "g_recovery.csv")
        assert rows[0] == ["replicate", "x", "g_hat", "g_true"]
        assert len(rows) - 1 == 2 * 101 + 101
        assert sum(r[0] == "median" for r in rows) == 101

    def test_power_table(self, tmp_path):
        cfg = tmp_path / "p.ini"
        cfg.write_text("[power]\nalpha0 = 0, 0.6\n")
        assert main(["exp", "power", "--config", str(cfg), "--out", str(tmp_path), "--replicates", "2",
                     "--horizon", "300"]) == 0
        rows = read_rows(tmp_path / "power.csv")
        assert rows[0] == ["config_id", "degree", "T", "alpha0", "rejections", "replicates", "power", "se"]
        assert len(rows) == 3

    def test_thread_env(self, monkeypatch):
        monkeypatch.setenv(THREADS_ENV, "3")
        assert default_threads() == 3
        monkeypatch.setenv(THREADS_ENV, "junk")
        assert default_threads() == 1


class TestLob:
    def test_synth_and_analyze(self, tmp_path):
        data = tmp_path / "data"
        assert main(["lob", "synth", "--out", str(data), "--sessions", "2", "--session-length", "400",
                     "--seed", "2"]) == 0
        out = tmp_path / "out"
        assert main(["lob", "analyze", str(data / "manifest.csv"), "--out", str(out)]) == 0
        summary = json.loads((out / "lob_summary.json").read_text())
        assert summary["sessions"] == 2 and summary["completed"] == 2
        prof = read_rows(out / "profile_000.csv")
        assert prof[0] == ["x", "rho_hat"] and len(prof) == 102
        assert read_rows(out / "sessions.csv")[0][0] == "session"

    def test_empty_manifest(self, tmp_path):
        m = tmp_path / "manifest.csv"
        m.write_text("path,virtual_close\n")
        assert main(["lob", "analyze", str(m), "--out", str(tmp_path / "o")]) == 0
        assert json.loads((tmp_path / "o" / "lob_summary.json").read_text())["sessions"] == 0

    def test_missing_session_counts_as_failure(self, tmp_path):
        m = tmp_path / "manifest.csv"
        m.write_text("path,virtual_close\nmissing.csv,\n")
        assert main(["lob", "analyze", str(m), "--out", str(tmp_path / "o")]) == 1
        assert main(["lob", "analyze", str(m), "--out", str(tmp_path / "o2"), "--allow-failures"]) == 0
