import json

import numpy as np
import pytest

import shiftguard.harness as harness
from shiftguard.data import ShiftSpec
from shiftguard.errors import StageError, ValidationError
from shiftguard.harness import (
    ExperimentReport,
    ExperimentSpec,
    Pipeline,
    bundle_from_records,
    classifier_metrics,
    emit_report,
    load_report,
    report_to_json,
    run_experiment,
    run_matrix,
)

SMALL = dict(n=600, d=4, mlp={"epochs": 30, "layer_sizes": [16, 16]}, ensemble_size=3, stump_rounds=30,
             priornet={"epochs": 10, "layer_sizes": [16]}, ood_attack_points=10, ood_noise_points=60)


def small(**kw):
    return ExperimentSpec(**{**SMALL, **kw})


def test_classifier_metrics_examples():
    m = classifier_metrics(np.array([1, 1, 0, 0]), np.array([1, 0, 1, 0]))
    assert (m.accuracy, m.precision, m.recall, m.f1) == pytest.approx((50, 50, 50, 50))
    assert classifier_metrics(np.array([1, 0]), np.array([1, 0])).f1 == 100
    none = classifier_metrics(np.array([0, 0]), np.array([1, 0]))
    assert none.precision == 0 and none.recall == 0 and "precision" in none.degenerate


@pytest.mark.parametrize("kw", [
    {"pipeline": "ice_uncertainty_ncm", "ncm_kind": "expected_entropy", "base_models": ["stumps", "mlp"]},
    {"pipeline": "ice_uncertainty_ncm"},
    {"pipeline": "ice_uncertainty_ncm", "ncm_kind": "neg_predicted_probability"},
    {"base_models": ["mlp", "ensemble"]},
    {"base_models": ["forest"]},
    {"fusion_weight": 1.5},
])
def test_invalid_specs_are_rejected(kw):
    with pytest.raises(ValidationError):
        ExperimentSpec(**kw)


def test_spec_round_trip_and_fusion_defaults():
    spec = small(shift=ShiftSpec("affine_packing", 1.0, 3), pipeline="ice_uncertainty_ncm",
                 ncm_kind="knowledge_uncertainty")
    assert ExperimentSpec.from_dict(json.loads(json.dumps(spec.to_dict()))) == spec
    assert spec.effective_fusion_weight == 0.8
    assert small().effective_fusion_weight == 0.5
    assert small(fusion_weight=0.3).effective_fusion_weight == 0.3
    with pytest.raises(ValidationError):
        ExperimentSpec.from_dict({"bogus": 1})


@pytest.fixture(scope="module")
def matrix():
    specs = [small(pipeline=p, calibrated=c, ncm_kind="knowledge_uncertainty" if "uncertainty" in p else None)
             for p in [x.value for x in Pipeline] for c in (True, False)]
    return specs, run_matrix(specs)


def test_matrix_cardinality_and_quad_totals(matrix):
    specs, res = matrix
    assert len(res.reports) == 8 and not res.errors
    assert len(res.table) == len(res.reports)
    for r in res.reports:
        assert sum(r.quad.values()) == 180


def test_reports_record_reuse_and_provenance(matrix):
    specs, res = matrix
    for spec, r in zip(specs, res.reports):
        assert r.provenance["spec"] == spec.to_dict()
        if spec.calibrated:
            assert any("calibration split reused" in n for n in r.notes)
            assert set(r.calibration) == {"ensemble", "stumps"}
        else:
            assert r.calibration == {}


def test_shared_models_leave_reports_unchanged(matrix):
    specs, res = matrix
    alone = run_experiment(specs[3])
    assert report_to_json(alone) == report_to_json(res.reports[3])


def test_identical_specs_give_identical_reports():
    spec = small(seed=5)
    a, b = run_matrix([spec, spec], share_models=False).reports
    assert report_to_json(a) == report_to_json(b)


def test_priornet_and_mlp_pipelines_run():
    r = run_experiment(small(base_models=["stumps", "priornet"], pipeline="uncertainty_threshold",
                             ncm_kind="expected_entropy"))
    assert r.threshold_kind == "score_at_most"
    assert "priornet" in r.calibration
    r = run_experiment(small(base_models=["mlp"], pipeline="ice_prob_ncm"))
    assert 0.0 <= r.chosen_threshold <= 1.0


def test_unshifted_test_f1_tracks_validation_f1():
    r = run_experiment(ExperimentSpec(n=20000, d=5, base_models=["stumps"], stump_rounds=100))
    assert abs(r.classifier_metrics["f1"] - r.validation_metrics["f1"]) <= 2.0


def test_strength_two_shift_drops_f1():
    base = dict(n=1500, d=5, class_sep=6.0, base_models=["stumps", "ensemble"], ensemble_size=3,
                mlp={"epochs": 60}, fusion_weight=0.8)
    plain = run_experiment(ExperimentSpec(**base))
    shifted = run_experiment(ExperimentSpec(shift=ShiftSpec("affine_packing", 2.0, 11), **base))
    assert plain.classifier_metrics["f1"] - shifted.classifier_metrics["f1"] >= 10


def test_degenerate_calibration_split_falls_back():
    r = run_experiment(small(class_sep=12.0, pipeline="ice_prob_ncm"))
    assert r.chosen_threshold == harness.FALLBACK_TAU
    assert any("degenerate" in n for n in r.notes)
    r = run_experiment(small(class_sep=12.0))
    assert r.chosen_threshold == -np.inf


def test_stage_errors_name_the_stage(monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("no luck")

    monkeypatch.setattr(harness, "train_models", boom)
    with pytest.raises(StageError, match=r"^\[train\] RuntimeError: no luck"):
        run_experiment(small())
    res = run_matrix([small(), small(seed=1)])
    assert len(res.errors) == 2 and res.table == []


def test_emit_report_json_and_csv(tmp_path, matrix):
    _, res = matrix
    report = res.reports[0]
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    emit_report(report, a)
    emit_report(report, b)
    assert a.read_bytes() == b.read_bytes()
    back = load_report(a)
    assert isinstance(back, ExperimentReport) and back.to_dict() == json.loads(a.read_text())
    c = tmp_path / "c.csv"
    emit_report(report, c, "csv")
    lines = c.read_text().splitlines()
    assert lines[0] == "theta,ca_pct,cr_pct,h"
    assert len(lines) == len(report.sweep_curve) + 1
    with pytest.raises(ValidationError):
        emit_report(report, c, "xml")


def test_bundle_from_external_records(tmp_path):
    from shiftguard.data import load_external_scores

    path = tmp_path / "s.jsonl"
    path.write_text(
        '{"schema": "scores-v1", "member_probs": [[0.9, 0.1], [0.7, 0.3]], "alphas": [5, 1], "label": 0}\n'
        '{"schema": "scores-v1", "member_probs": [[0.2, 0.8], [0.4, 0.6]], "alphas": [1, 3], "label": 1}\n'
    )
    recs = load_external_scores(path)
    b = bundle_from_records(recs)
    assert b.fused_probs[0] == pytest.approx([0.8, 0.2])
    assert b.uncertainty.knowledge_uncertainty.shape == (2,)
    d = bundle_from_records(recs, use_alphas=True)
    assert d.fused_probs[1] == pytest.approx([0.25, 0.75])
