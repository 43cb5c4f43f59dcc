import json

import numpy as np
import pytest

from shiftguard.data import (
    LabeledDataset,
    ShiftSpec,
    apply_shift,
    apply_standardization,
    generate_synthetic,
    load_external_scores,
    load_features,
    save_features,
    split,
    standardize,
)
from shiftguard.errors import DataFormatError, ValidationError
from shiftguard.models import MlpConfig, train_mlp


def test_generate_is_deterministic_and_balanced():
    a, b = generate_synthetic(2000, 5, 2.5, seed=3), generate_synthetic(2000, 5, 2.5, seed=3)
    assert np.array_equal(a.features, b.features) and np.array_equal(a.labels, b.labels)
    assert 0.45 < a.labels.mean() < 0.55
    with pytest.raises(ValidationError):
        generate_synthetic(5, 2, 1.0, seed=0)
    with pytest.raises(ValidationError):
        generate_synthetic(100, 1, 1.0, seed=0)


def test_class_means_are_separated_by_class_sep():
    ds = generate_synthetic(40000, 3, 4.0, seed=1)
    gap = ds.features[ds.labels == 1].mean(axis=0) - ds.features[ds.labels == 0].mean(axis=0)
    assert np.linalg.norm(gap) == pytest.approx(4.0, abs=0.05)


def _fit_and_score(ds, epochs=40):
    ds = split(ds, seed=0)
    X, y = ds.rows("train")
    model = train_mlp(X, y, MlpConfig(layer_sizes=(16,), epochs=epochs, seed=0))
    Xt, yt = ds.rows("test")
    return np.mean(model.predict_proba(Xt)[1].argmax(axis=1) == yt)


def test_wide_separation_is_learnable():
    assert _fit_and_score(generate_synthetic(1000, 2, 6.0, seed=2), epochs=100) >= 0.99


def test_zero_separation_is_chance():
    assert 0.45 <= _fit_and_score(generate_synthetic(2000, 2, 0.0, seed=2)) <= 0.55


def test_shift_identity_and_label_preservation():
    ds = split(generate_synthetic(300, 4, 2.0, seed=0), seed=1)
    same = apply_shift(ds, ShiftSpec("affine_packing", 0.0, 5), rows="test")
    assert np.array_equal(same.features, ds.features)
    shifted = apply_shift(ds, ShiftSpec("affine_packing", 2.0, 5), rows="test")
    assert np.array_equal(shifted.labels, ds.labels)
    assert shifted.features.shape == ds.features.shape
    train = ds.mask("train")
    assert np.array_equal(shifted.features[train], ds.features[train])
    assert not np.allclose(shifted.features[~train & ds.mask("test")], ds.features[ds.mask("test")])
    scrambled = apply_shift(ds, ShiftSpec("feature_scramble", 0.5, 5))
    assert np.array_equal(scrambled.labels, ds.labels)
    with pytest.raises(ValueError):
        ShiftSpec("affine_packing", -1.0, 0)


def test_split_sizes_and_determinism():
    assert split(generate_synthetic(100, 2, 1.0, seed=0), seed=4).split_sizes() == (60, 10, 30)
    sizes = split(generate_synthetic(17, 2, 1.0, seed=0), seed=4).split_sizes()
    assert sum(sizes) == 17
    assert all(abs(s - f * 17) <= 1 for s, f in zip(sizes, (0.6, 0.1, 0.3)))
    a = split(generate_synthetic(50, 2, 1.0, seed=0), seed=9)
    b = split(generate_synthetic(50, 2, 1.0, seed=0), seed=9)
    assert np.array_equal(a.split, b.split)
    with pytest.raises(ValidationError):
        split(a, (0.5, 0.5, 0.5))


def test_standardize_uses_train_rows_only():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(100, 3))
    X[:, 2] = 7.0
    tags = np.array(["train"] * 60 + ["calibration"] * 10 + ["test"] * 30, dtype=object)
    X[70:] += 5.0
    ds = standardize(LabeledDataset(X, rng.integers(0, 2, 100), tags))
    Xtr, _ = ds.rows("train")
    assert np.all(np.abs(Xtr.mean(axis=0)) < 1e-9)
    assert np.allclose(Xtr[:, :2].std(axis=0), 1.0)
    assert ds.zero_variance.tolist() == [False, False, True]
    assert np.all(Xtr[:, 2] == 0.0)
    Xte, _ = ds.rows("test")
    assert np.all(Xte[:, :2].mean(axis=0) > 2.0)
    assert np.allclose(apply_standardization(X, ds.standardization), ds.features)


def test_csv_round_trip_and_errors(tmp_path):
    ds = generate_synthetic(20, 3, 1.0, seed=0)
    path = tmp_path / "d.csv"
    save_features(ds, path)
    back = load_features(path)
    assert np.array_equal(back.features, ds.features) and np.array_equal(back.labels, ds.labels)
    small = tmp_path / "s.csv"
    small.write_text("f0,f1,label\n1,2,0\n3,4,1\n5,6,1\n")
    s = load_features(small)
    assert s.features.shape == (3, 2) and s.labels.tolist() == [0, 1, 1]
    bad = tmp_path / "bad.csv"
    bad.write_text("f0,f1,label\n1,2,0\n1,NaN,1\n")
    with pytest.raises(DataFormatError, match="line 3"):
        load_features(bad)
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(DataFormatError):
        load_features(empty)
    nolabel = tmp_path / "nolabel.csv"
    nolabel.write_text("f0,f1\n1,2\n")
    with pytest.raises(DataFormatError, match="label"):
        load_features(nolabel)


def test_jsonl_features(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text('{"features": [1, 2], "label": 0}\n{"features": [3, 4], "label": 1}\n')
    assert load_features(path, "jsonl").features.tolist() == [[1, 2], [3, 4]]
    path.write_text('{"features": [1, 2], "label": 0}\n{"features": [3], "label": 1}\n')
    with pytest.raises(DataFormatError, match="line 2"):
        load_features(path, "jsonl")


def _write_jsonl(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records))


def test_external_scores(tmp_path):
    members = [[0.1 * i, 1 - 0.1 * i] for i in range(10)]
    path = tmp_path / "s.jsonl"
    _write_jsonl(path, [
        {"schema": "scores-v1", "member_probs": members, "label": 1},
        {"schema": "scores-v1", "logits": [0.3, -0.2], "alphas": [2.0, 1.0], "label": 0},
    ])
    recs = load_external_scores(path)
    assert recs[0].ensemble.member_probs.shape == (10, 2)
    assert recs[0].ensemble.mean_probs == pytest.approx(np.mean(members, axis=0))
    assert recs[1].dirichlet.alpha0 == pytest.approx(3.0)


@pytest.mark.parametrize("record", [
    {"schema": "scores-v1", "member_probs": [[0.5, 0.6]]},
    {"schema": "scores-v1", "logits": [0.1, 0.2], "alphas": [0.0, 1.0]},
    {"schema": "scores-v0", "logits": [0.1, 0.2]},
    {"schema": "scores-v1"},
])
def test_external_scores_reject_bad_records(tmp_path, record):
    path = tmp_path / "s.jsonl"
    _write_jsonl(path, [{"schema": "scores-v1", "logits": [0, 0]}, record])
    with pytest.raises(DataFormatError, match="line 2"):
        load_external_scores(path)
