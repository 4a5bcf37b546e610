import json
import subprocess
import sys

import numpy as np
import pytest

from mallowsmix.cli import main
from mallowsmix.mixture import MallowsMixture, save_mixture
from mallowsmix.permutations import read_rankings


@pytest.fixture
def model_file(tmp_path):
    path = tmp_path / "mix.json"
    save_mixture(MallowsMixture.from_params(0.4, 0.4, range(6), 0.3, (5, 3, 1, 0, 2, 4)), path)
    return path


def test_sample_is_seeded(tmp_path, model_file):
    for name in ("a.txt", "b.txt"):
        assert main(["sample", "--model", str(model_file), "--count", "500", "--seed", "3",
                     "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()
    assert len(read_rankings(tmp_path / "a.txt")) == 500


def test_learn_and_em(tmp_path, model_file):
    rankings = tmp_path / "r.txt"
    main(["sample", "--model", str(model_file), "--count", "50000", "--seed", "1", "--out", str(rankings)])
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 2}))
    assert main(["learn", "--rankings", str(rankings), "--config", str(cfg), "--out", str(tmp_path / "s.json")]) == 0
    out = json.loads((tmp_path / "s.json").read_text())
    assert {out["path"]} <= {"tensor", "pivot"}
    assert sorted([out["pi1"], out["pi2"]]) == sorted([[1, 2, 3, 4, 5, 6], [6, 4, 2, 1, 3, 5]])
    cfg.write_text(json.dumps({"max_iters": 10, "seed": 0}))
    assert main(["em", "--rankings", str(rankings), "--config", str(cfg), "--out", str(tmp_path / "e.json")]) == 0
    assert json.loads((tmp_path / "e.json").read_text())["path"] == "em"


@pytest.mark.parametrize("argv", [
    ["sample", "--model", "missing.json", "--count", "5", "--out", "x.txt"],
    ["learn", "--rankings", "missing.txt", "--out", "x.json"],
])
def test_errors_exit_2(tmp_path, argv, capsys):
    assert main(argv) == 2
    assert "error" in capsys.readouterr().err


def test_bad_options(tmp_path, model_file):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    rankings = tmp_path / "r.txt"
    main(["sample", "--model", str(model_file), "--count", "2000", "--out", str(rankings)])
    assert main(["em", "--rankings", str(rankings), "--config", str(cfg), "--out", str(tmp_path / "e.json")]) == 2
    assert main(["sample", "--model", str(model_file), "--count", "0", "--out", str(rankings)]) == 2


def test_experiment(tmp_path, capsys):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({"n": 5, "distances": [3], "trials": 1, "learners": ["spectral"]}))
    assert main(["experiment", "--config", str(cfg), "--out-dir", str(tmp_path / "o"),
                 "--samples", "5000", "--quiet"]) == 0
    assert "success=" in capsys.readouterr().out
    assert sorted(p.name for p in (tmp_path / "o").iterdir()) == ["metadata.json", "results.csv", "results.json"]


def test_module_entry_verify():
    out = subprocess.run([sys.executable, "-m", "mallowsmix.cli", "verify", "--level", "fast"],
                         capture_output=True, text=True)
    assert out.returncode == 0, out.stdout + out.stderr
    assert "checks passed" in out.stdout
