import json
import math
import subprocess
import sys

import numpy as np
import pytest

from unicdm.cli import bitstring, main
from unicdm.ideal import ideal_table
from unicdm.metrics import oracle_complete_loglik
from unicdm.patterns import format_binary_csv


@pytest.fixture
def toy(tmp_path):
    """Noiseless DINA data: 8 subjects, K=3, identity-doubled Q."""
    Q = np.vstack([np.eye(3, dtype=int)] * 2)
    X = ideal_table(Q, "dina")
    (tmp_path / "X.csv").write_text(format_binary_csv(X))
    (tmp_path / "Q.csv").write_text(format_binary_csv(Q))
    return tmp_path


def _fit(d, *extra, out="out"):
    return main(["fit", "--x", str(d / "X.csv"), "--q", str(d / "Q.csv"), "--out", str(d / out), *extra])


class TestFit:
    def test_noiseless_npc_recovers_patterns(self, toy):
        assert _fit(toy, "--method", "npc") == 0
        lines = (toy / "out" / "assignment.csv").read_text().splitlines()
        assert lines[0] == "pattern"
        assert lines[1:] == [bitstring(m, 3) for m in range(8)]

    def test_bit_order(self):
        assert bitstring(1, 3) == "100"
        assert bitstring(4, 3) == "001"

    def test_outputs_and_manifest(self, toy):
        assert _fit(toy, "--method", "jmle") == 0
        out = toy / "out"
        assert sorted(p.name for p in out.iterdir()) == ["assignment.csv", "centroids.csv", "manifest.json", "proportions.csv"]
        man = json.loads((out / "manifest.json").read_text())
        assert {"loss_trajectory", "iterations", "converged", "bit_order"} <= set(man)
        assert man["final_loss"] == man["loss_trajectory"][-1]
        props = [float(l.split(",")[1]) for l in (out / "proportions.csv").read_text().splitlines()[1:]]
        assert math.fsum(props) == pytest.approx(1.0)

    def test_cmle_loss_is_complete_loglik(self, tmp_path):
        r = np.random.default_rng(4)
        Q = np.vstack([np.eye(3, dtype=int)] * 2 + [[[1, 1, 0], [0, 1, 1]]])
        ideal = ideal_table(Q, "dina")
        A = r.integers(0, 8, 60)
        X = (r.random((60, 8)) < np.where(ideal[A] == 1, 0.85, 0.15)).astype(int)
        (tmp_path / "X.csv").write_text(format_binary_csv(X))
        (tmp_path / "Q.csv").write_text(format_binary_csv(Q))
        assert _fit(tmp_path, "--method", "cmle") == 0
        out = tmp_path / "out"
        man = json.loads((out / "manifest.json").read_text())
        rows = [l.split(",") for l in (out / "centroids.csv").read_text().splitlines()[1:]]
        index = {s: sum(int(c) << k for k, c in enumerate(s)) for s in (r_[0] for r_ in rows)}
        theta = np.zeros((8, 8))
        for row in rows:
            theta[index[row[0]]] = [float(v) for v in row[1:]]
        pi = np.zeros(8)
        for l in (out / "proportions.csv").read_text().splitlines()[1:]:
            s, v = l.split(",")
            pi[index[s]] = float(v)
        a = [index[s] for s in (out / "assignment.csv").read_text().splitlines()[1:]]
        assert abs(man["final_loss"] + oracle_complete_loglik(X, a, theta, pi)) <= 1e-9

    def test_byte_identical_reruns(self, toy):
        assert _fit(toy, "--method", "gnpc", out="a") == 0
        assert _fit(toy, "--method", "gnpc", out="b") == 0
        for name in ("assignment.csv", "centroids.csv", "proportions.csv", "manifest.json"):
            assert (toy / "a" / name).read_bytes() == (toy / "b" / name).read_bytes()

    def test_malformed_input_exit_2(self, toy):
        (toy / "X.csv").write_text("0,1,0\n1,x,0\n")
        assert _fit(toy, "--method", "npc") == 2
        assert not (toy / "out").exists()

    def test_missing_file_exit_2(self, toy):
        (toy / "X.csv").unlink()
        assert _fit(toy, "--method", "npc") == 2

    def test_dimension_mismatch_exit_3(self, toy):
        (toy / "X.csv").write_text("0,1\n1,0\n")
        assert _fit(toy, "--method", "npc") == 3
        assert not (toy / "out").exists()

    def test_bad_method_exit_2(self, toy):
        assert _fit(toy, "--method", "kmeans") == 2

    def test_loss_override(self, toy):
        assert _fit(toy, "--method", "gnpc", "--loss", "ce") == 0
        assert json.loads((toy / "out" / "manifest.json").read_text())["loss"] == "ce"

    def test_penalty_rejected_for_npc(self, toy):
        assert _fit(toy, "--method", "npc", "--penalty", "neglog") == 2


class TestSimulate:
    def test_writes_files(self, tmp_path):
        assert main(["simulate", "--k", "3", "--j", "10", "--n", "20", "--seed", "3", "--out", str(tmp_path / "s")]) == 0
        X = np.loadtxt(tmp_path / "s" / "X.csv", delimiter=",")
        assert X.shape == (20, 10)
        assert (tmp_path / "s" / "A.csv").read_text().splitlines()[0] == "pattern"

    def test_bad_args(self, tmp_path):
        assert main(["simulate", "--k", "3", "--j", "4", "--n", "20", "--out", str(tmp_path / "s")]) == 2


class TestExperiment:
    def test_single_cell_one_row(self, tmp_path, monkeypatch):
        monkeypatch.delenv("CDM_THREADS", raising=False)
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"k": 3, "j": 15, "n": 30, "reps": 1, "seed": 42, "estimators": ["npc"]}))
        out = tmp_path / "r.csv"
        assert main(["experiment", "--config", str(cfg), "--out", str(out), "--threads", "1"]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "# seed=42" and len(lines) == 3

    def test_schema_violation_exit_2(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"k": 3, "n": 30}))
        assert main(["experiment", "--config", str(cfg), "--out", str(tmp_path / "r.csv")]) == 2
        assert not (tmp_path / "r.csv").exists()


class TestVerify:
    def test_losses_suite(self, capsys):
        assert main(["verify", "--suite", "losses"]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out and "FAIL" not in out


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "unicdm.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "experiment" in res.stdout
