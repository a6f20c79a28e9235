import csv
import io
import json

import numpy as np
import pytest

from dppca.cli import main
from dppca.data import synthetic_gaussian, write_dataset_csv
from dppca.experiments import OUTPUT_DIR_ENV


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def data_csv(tmp_path):
    path = tmp_path / "data.csv"
    write_dataset_csv(synthetic_gaussian(400, seed=0), path)
    return path


def test_pca_json(capsys, data_csv):
    code, out, _ = run(capsys, "pca", "--data", str(data_csv), "--k", "2")
    assert code == 0
    obj = json.loads(out)
    assert obj["mechanism"] == "exact" and np.array(obj["frame"]).shape == (10, 2)


def test_modsulq_requires_seed(capsys, data_csv):
    with pytest.raises(SystemExit) as info:
        main(["modsulq", "--data", str(data_csv), "--k", "2", "--epsilon", "1", "--delta", "0.01"])
    assert info.value.code == 2
    code, out, _ = run(capsys, "modsulq", "--data", str(data_csv), "--k", "2", "--epsilon", "1",
                       "--delta", "0.01", "--seed", "4")
    assert code == 0 and json.loads(out)["seed"] == 4


def test_ppca_output_file(capsys, tmp_path, data_csv):
    target = tmp_path / "out.json"
    code, _, _ = run(capsys, "ppca", "--data", str(data_csv), "--k", "1", "--epsilon", "0.5",
                     "--seed", "1", "--iterations", "50", "-o", str(target))
    assert code == 0
    obj = json.loads(target.read_text())
    assert obj["telemetry"]["iterations"] == 50


def test_bad_parameters_exit_one(capsys, data_csv):
    code, _, err = run(capsys, "modsulq", "--data", str(data_csv), "--k", "2", "--epsilon", "1",
                       "--delta", "5", "--seed", "1")
    assert code == 1 and "delta" in err
    code, _, _ = run(capsys, "pca", "--data", "/nonexistent.csv", "--k", "2")
    assert code == 1


def test_bounds_csv(capsys):
    code, out, _ = run(capsys, "bounds", "--d", "50,100", "--epsilon", "0.1,1", "--n", "100,1000000")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 8
    assert all(0 < float(r["value"]) <= 1 for r in rows)
    code, out, _ = run(capsys, "bounds", "--kind", "general", "--d", "3,100", "--epsilon", "1")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert float(rows[0]["phi"]) < 1 - 3.5e-5


def test_pack(capsys):
    code, out, err = run(capsys, "pack", "--d", "6", "--phi", "0.8", "--target", "12", "--seed", "2")
    assert code == 0
    vecs = np.loadtxt(io.StringIO(out), delimiter=",", skiprows=1)
    assert vecs.shape == (12, 6)
    g = np.abs(vecs @ vecs.T - np.eye(12))
    assert g.max() < 0.8 and "size=12" in err
    code, _, _ = run(capsys, "pack", "--d", "3", "--phi", "0.1", "--target", "10", "--seed", "0",
                     "--max-attempts", "2")
    assert code == 2


def test_experiment_config_and_env(capsys, tmp_path, monkeypatch):
    cfg = {"kind": "utility-vs-epsilon", "experiment_id": "cli_eps",
           "dataset": {"synthetic": {"n": 300, "seed": 0}}, "epsilons": [0.5], "k": 2,
           "trials": {"ppca": 1, "modsulq": 2, "randproj": 1}, "sampler": {"iterations": 50}}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path / "res"))
    code, out, _ = run(capsys, "experiment", "--config", str(path), "--seed", "9")
    assert code == 0
    assert (tmp_path / "res" / "cli_eps_trials.csv").exists()
    meta = json.loads((tmp_path / "res" / "cli_eps_meta.json").read_text())
    assert meta["config"]["master_seed"] == 9


def test_experiment_partial_exit(capsys, tmp_path):
    cfg = {"kind": "single-run", "experiment_id": "bad", "epsilons": [50.0],
           "mechanisms": ["ppca"], "trials": {"ppca": 2},
           "sampler": {"iterations": 20, "max_proposals": 1}, "output_dir": str(tmp_path)}
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(cfg))
    code, _, err = run(capsys, "experiment", "--config", str(path))
    assert code == 2 and "errors" in err


def test_experiment_config_error(capsys, tmp_path):
    code, _, _ = run(capsys, "experiment")
    assert code == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, _, _ = run(capsys, "experiment", "--config", str(bad))
    assert code == 1
    code, _, _ = run(capsys, "experiment", "--kind", "utility-vs-n", "--output-dir", str(tmp_path))
    assert code == 1
