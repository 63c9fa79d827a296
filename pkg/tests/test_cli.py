import csv
import json
from pathlib import Path

import numpy as np
import pytest

from clusterdiff.cli import main

FIXTURES = Path(__file__).parent / "fixtures"


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def processed(tmp_path):
    out = tmp_path / "proc.csv"
    assert main(["preprocess", str(FIXTURES / "counts.csv"), str(out), "--min-total", "20",
                 "--top-k", "12", "--meta", str(tmp_path / "meta.json")]) == 0
    return out


def test_test_command_contract(processed, tmp_path):
    out = tmp_path / "r.json"
    code = main(["test", str(processed), "--method", "average", "--k", "3", "--pair", "1,2",
                 "--feature", "4", "-o", str(out)])
    assert code == 0
    (rep,) = json.loads(out.read_text())
    assert 0 < rep["p_selective"] <= 1
    s = rep["statistic"]
    assert any(float(lo) <= s <= float(hi) for lo, hi in rep["truncation"])
    assert rep["feature"] == 4


def test_test_with_sigma_file(processed, tmp_path):
    sig = tmp_path / "sigma.csv"
    sig.write_text(",".join(f"f{i}" for i in range(12)) + "\n" + "\n".join(
        ",".join("1" if i == j else "0" for j in range(12)) for i in range(12)) + "\n")
    out = tmp_path / "r.json"
    assert main(["test", str(processed), "--method", "kmeans", "--k", "3", "--seed", "4",
                 "--sigma", str(sig), "--feature", "1,2", "-o", str(out)]) == 0
    reps = json.loads(out.read_text())
    assert [r["feature"] for r in reps] == [1, 2]
    assert reps[0]["sigma_estimated"] is False


def test_adjust_example(tmp_path):
    p = tmp_path / "p.csv"
    p.write_text("p\n0.01\n0.02\n0.03\n0.04\n")
    out = tmp_path / "adj.csv"
    assert main(["adjust", str(p), "-o", str(out)]) == 0
    assert [float(r["p_bh"]) for r in _rows(out)] == pytest.approx([0.04] * 4)


def test_exit_codes(tmp_path, capsys):
    assert main([]) == 1
    assert main(["test"]) == 1
    assert main(["test", "x.csv", "--method", "complete"]) == 1
    assert main(["test", str(tmp_path / "missing.csv")]) == 2
    p = tmp_path / "p.csv"
    p.write_text("p\n0.5\n1.5\n")
    assert main(["adjust", str(p)]) == 2


def test_simulate_null_small(tmp_path):
    out, summ = tmp_path / "null.csv", tmp_path / "null.json"
    assert main(["simulate-null", "--n", "30", "--q", "4", "--replicates", "4", "--method", "single,kmeans",
                 "--seed", "3", "-o", str(out), "--summary", str(summ)]) == 0
    rows = _rows(out)
    assert len(rows) == 8
    assert set(rows[0]) == {"method", "rho", "replicate", "feature", "cluster_a", "cluster_b",
                            "statistic", "p_selective", "p_naive"}
    assert [s["method"] for s in json.loads(summ.read_text())] == ["single", "kmeans"]


def test_simulate_power_with_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n": 30, "q": 4, "replicates": 3, "seed": 1, "method": ["average"],
                               "delta": [2.0, 8.0]}))
    out, summ = tmp_path / "pow.csv", tmp_path / "pow_summary.csv"
    assert main(["simulate-power", "--config", str(cfg), "-o", str(out), "--summary-csv", str(summ),
                 "--summary", str(tmp_path / "s.json")]) == 0
    assert len(_rows(out)) == 6
    cells = _rows(summ)
    assert [float(c["delta"]) for c in cells] == [2.0, 8.0]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"nope": 1}))
    assert main(["simulate-power", "--config", str(bad)]) == 2


def test_reruns_are_bit_identical(tmp_path):
    args = ["simulate-null", "--n", "24", "--q", "4", "--replicates", "3", "--method", "centroid",
            "--summary", str(tmp_path / "s.json")]
    assert main(args + ["-o", str(tmp_path / "a.csv")]) == 0
    assert main(args + ["-o", str(tmp_path / "b.csv")]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_oracle_check_random_and_data(tmp_path):
    out = tmp_path / "o.json"
    assert main(["oracle-check", "--random", "3", "--grid", "201", "-o", str(out)]) == 0
    assert all(r["passed"] for r in json.loads(out.read_text()))
    data = tmp_path / "d.csv"
    rng = np.random.default_rng(0)
    x = np.vstack([rng.normal(size=(4, 2)), rng.normal(size=(4, 2)) + 5])
    data.write_text("a,b\n" + "\n".join(f"{float(u)!r},{float(v)!r}" for u, v in x) + "\n")
    grid = tmp_path / "grid.csv"
    assert main(["oracle-check", "--data", str(data), "--method", "average", "--k", "2", "--pair", "1,2",
                 "--feature", "1", "--grid", "101", "--csv", str(grid), "-o", str(out)]) == 0
    assert len(_rows(grid)) == 101
    assert main(["oracle-check", "--data", str(data)]) == 1
