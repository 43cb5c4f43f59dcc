import json

import pytest

from shiftguard.cli import main
from shiftguard.models import load_model


@pytest.fixture
def data(tmp_path):
    path = tmp_path / "data.csv"
    assert main(["gen", "--n", "400", "--d", "3", "--sep", "3", "--seed", "2", "--out", str(path)]) == 0
    return path


def write(path, obj):
    path.write_text(json.dumps(obj))
    return path


@pytest.mark.parametrize("kind, method, config", [
    ("mlp", "temperature", {"epochs": 10, "layer_sizes": [8]}),
    ("ensemble", "temperature", {"epochs": 10, "layer_sizes": [8], "m": 2}),
    ("priornet", "temperature", {"epochs": 3, "layer_sizes": [8], "ood_attack_points": 5,
                                 "ood_noise_points": 20, "attacker": {"epochs": 5}}),
    ("stumps", "isotonic", {"rounds": 5}),
])
def test_train_then_calibrate(tmp_path, data, kind, method, config):
    cfg = write(tmp_path / "cfg.json", {**config, "seed": 3, "split_seed": 4})
    model = tmp_path / "model.json"
    assert main(["train", "--model", kind, "--data", str(data), "--config", str(cfg), "--out", str(model)]) == 0
    _, doc = load_model(model)
    assert doc["split_seed"] == 4 and len(doc["standardization"]["mean"]) == 3
    out = tmp_path / "calib.json"
    assert main(["calibrate", "--model", str(model), "--method", method, "--data", str(data),
                 "--out", str(out)]) == 0
    assert json.loads(out.read_text())["method"] == method


def test_run_and_sweep(tmp_path):
    spec = write(tmp_path / "spec.json", {"n": 300, "d": 3, "mlp": {"epochs": 5}, "ensemble_size": 2,
                                          "stump_rounds": 5})
    report, curve = tmp_path / "r.json", tmp_path / "c.csv"
    assert main(["run", "--spec", str(spec), "--out", str(report)]) == 0
    assert main(["sweep", "--report", str(report), "--csv", str(curve)]) == 0
    assert curve.read_text().splitlines()[0] == "theta,ca_pct,cr_pct,h"


def test_matrix_writes_reports_and_table(tmp_path):
    specs = tmp_path / "specs"
    specs.mkdir()
    base = {"n": 300, "d": 3, "mlp": {"epochs": 5}, "ensemble_size": 2, "stump_rounds": 5}
    write(specs / "a.json", base)
    write(specs / "b.json", {**base, "calibrated": False})
    out = tmp_path / "results"
    assert main(["matrix", "--specs", str(specs), "--out", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["a.json", "b.json", "comparison.csv"]
    assert len((out / "comparison.csv").read_text().splitlines()) == 3


def test_failures_exit_nonzero_with_stage_tag(tmp_path, data, capsys):
    assert main(["run", "--spec", str(write(tmp_path / "bad.json", {"bogus": 1})), "--out", "x"]) != 0
    assert "[config]" in capsys.readouterr().err
    assert main(["calibrate", "--model", str(tmp_path / "none.json"), "--method", "temperature",
                 "--data", str(data), "--out", "x"]) != 0
    assert "[load]" in capsys.readouterr().err
    bad = tmp_path / "bad.csv"
    bad.write_text("f0,label\nnan,1\n")
    assert main(["train", "--model", "stumps", "--data", str(bad), "--out", "x"]) != 0
    err = capsys.readouterr().err
    assert "[data]" in err and "line 2" in err
    assert main(["matrix", "--specs", str(tmp_path / "nothing"), "--out", "x"]) != 0
