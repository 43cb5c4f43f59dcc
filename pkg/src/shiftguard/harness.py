"""End-to-end selective-prediction experiments on synthetic covariate-shift data.

One experiment trains the requested base models on the train split,
optionally calibrates them on the calibration split, fuses their
probabilities, turns the fused prediction into an acceptance score
(probability, uncertainty, or conformal p-value), picks the threshold on
the calibration split, and tallies accept/reject outcomes on the
(optionally shifted) test split.
"""

import csv
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from . import calibration as cal
from .conformal import (
    NcmKind,
    PredictionBundle,
    build_calibration,
    bundle_p_values,
    ncm_score,
)
from .data import (
    DEFAULT_FRACTIONS,
    ShiftSpec,
    apply_shift,
    generate_synthetic,
    split,
    standardize,
)
from .decision import (
    ConfusionQuad,
    ThresholdKind,
    optimize_threshold,
    rates,
    sweep,
    tally,
)
from .errors import DegenerateInputError, StageError, ValidationError
from .models import (
    EnsembleOutput,
    MlpConfig,
    PriorNetConfig,
    cw_batch,
    fuse,
    score_to_probability_pair,
    train_ensemble,
    train_mlp,
    train_priornet,
    train_stumps,
)
from .numerics import softmax
from .uncertainty import dirichlet_uncertainty, ensemble_uncertainty

log = logging.getLogger(__name__)

REPORT_FORMAT = "shiftguard-report"
SWEEP_HEADER = ("theta", "ca_pct", "cr_pct", "h")
FALLBACK_TAU = 0.1
NEURAL_MODELS = ("mlp", "ensemble", "priornet")


class Pipeline(str, Enum):
    PROB_THRESHOLD = "prob_threshold"
    UNCERTAINTY_THRESHOLD = "uncertainty_threshold"
    ICE_PROB_NCM = "ice_prob_ncm"
    ICE_UNCERTAINTY_NCM = "ice_uncertainty_ncm"


@dataclass(frozen=True)
class ExperimentSpec:
    pipeline: Pipeline = Pipeline.PROB_THRESHOLD
    calibrated: bool = True
    base_models: tuple = ("stumps", "ensemble")
    fusion_weight: float | None = None
    shift: ShiftSpec = field(default_factory=ShiftSpec)
    seed: int = 0
    ncm_kind: NcmKind | None = None
    n: int = 3000
    d: int = 10
    class_sep: float = 2.5
    fractions: tuple = DEFAULT_FRACTIONS
    mlp: dict = field(default_factory=dict)
    ensemble_size: int = 10
    stump_rounds: int = 100
    stump_learning_rate: float = 0.1
    priornet: dict = field(default_factory=dict)
    ood_attack_points: int = 100
    ood_noise_points: int = 400
    smoothed_p_values: bool = False

    def __post_init__(self):
        object.__setattr__(self, "pipeline", Pipeline(self.pipeline))
        if isinstance(self.shift, dict):
            object.__setattr__(self, "shift", ShiftSpec(**self.shift))
        if self.ncm_kind is not None:
            object.__setattr__(self, "ncm_kind", NcmKind(self.ncm_kind))
        object.__setattr__(self, "base_models", tuple(sorted(set(self.base_models))))
        object.__setattr__(self, "fractions", tuple(self.fractions))
        unknown = set(self.base_models) - {"stumps", *NEURAL_MODELS}
        if unknown or not self.base_models:
            raise ValidationError(f"base_models must be a nonempty subset of stumps/mlp/ensemble/priornet, got {self.base_models}")
        if sum(m in NEURAL_MODELS for m in self.base_models) > 1:
            raise ValidationError("at most one neural model can be fused with the stumps baseline")
        if self.fusion_weight is not None and not 0.0 <= self.fusion_weight <= 1.0:
            raise ValidationError("fusion_weight must lie in [0, 1]")
        if self.pipeline is Pipeline.ICE_UNCERTAINTY_NCM:
            if "ensemble" not in self.base_models:
                raise ValidationError("ice_uncertainty_ncm requires the ensemble base model")
            if self.ncm_kind is None or not self.ncm_kind.needs_uncertainty:
                raise ValidationError("ice_uncertainty_ncm requires an uncertainty NCM kind")
        if self.pipeline is Pipeline.UNCERTAINTY_THRESHOLD:
            if not {"ensemble", "priornet"} & set(self.base_models):
                raise ValidationError("uncertainty_threshold requires an ensemble or priornet model")
            if self.ncm_kind is not None and not self.ncm_kind.needs_uncertainty:
                raise ValidationError("uncertainty_threshold needs an uncertainty measure")

    @property
    def effective_fusion_weight(self):
        if self.fusion_weight is not None:
            return self.fusion_weight
        return 0.5 if self.shift.is_identity else 0.8

    @property
    def label(self):
        parts = ["Cal" if self.calibrated else "Uncal", "+".join(self.base_models), self.pipeline.value]
        if self.ncm_kind is not None:
            parts.append(self.ncm_kind.value)
        return "-".join(parts)

    def to_dict(self):
        d = asdict(self)
        d["pipeline"] = self.pipeline.value
        d["shift"] = self.shift.to_dict()
        d["ncm_kind"] = None if self.ncm_kind is None else self.ncm_kind.value
        d["base_models"] = list(self.base_models)
        d["fractions"] = list(self.fractions)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ValidationError(f"unknown experiment spec fields: {sorted(extra)}")
        return cls(**d)


@dataclass(frozen=True)
class ClassifierMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    degenerate: tuple = ()

    def to_dict(self):
        d = asdict(self)
        d["degenerate"] = list(self.degenerate)
        return d


def classifier_metrics(predicted, true_labels):
    """Accuracy, precision, recall and F1 in percent, malware (1) positive.

    Zero denominators give 0 and are named in ``degenerate``.
    """
    p = np.asarray(predicted).ravel()
    t = np.asarray(true_labels).ravel()
    if len(p) != len(t):
        raise ValidationError("predicted and true labels must have equal lengths")
    if len(p) == 0:
        raise ValidationError("need at least one prediction")
    tp = int(np.sum((p == 1) & (t == 1)))
    fp = int(np.sum((p == 1) & (t == 0)))
    fn = int(np.sum((p == 0) & (t == 1)))
    flags = []

    def ratio(num, den, name):
        if den == 0:
            flags.append(name)
            return 0.0
        return 100.0 * num / den

    precision = ratio(tp, tp + fp, "precision")
    recall = ratio(tp, tp + fn, "recall")
    f1 = ratio(2 * tp, 2 * tp + fp + fn, "f1")
    return ClassifierMetrics(100.0 * float(np.mean(p == t)), precision, recall, f1, tuple(flags))


@dataclass
class ExperimentReport:
    label: str
    classifier_metrics: dict
    validation_metrics: dict
    accepted_metrics: dict
    quad: dict
    rates: dict
    chosen_threshold: float
    threshold_h: float
    threshold_kind: str
    sweep_curve: list
    calibration: dict
    notes: list
    provenance: dict

    def to_dict(self):
        d = asdict(self)
        d["format"] = REPORT_FORMAT
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d.pop("format", None)
        d["sweep_curve"] = [list(r) for r in d["sweep_curve"]]
        return cls(**d)

    @property
    def confusion(self):
        return ConfusionQuad(**self.quad)


# ------------------------------------------------------------------ stages

def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


TRAINING_FIELDS = (
    "base_models", "seed", "n", "d", "class_sep", "fractions", "mlp", "ensemble_size",
    "stump_rounds", "stump_learning_rate", "priornet", "ood_attack_points", "ood_noise_points",
)


def training_key(spec):
    """Canonical string of the spec fields that determine the trained models.

    Shift, pipeline, calibration and fusion act after training, so specs
    that differ only in those can share one set of models.
    """
    d = spec.to_dict()
    return json.dumps({k: d[k] for k in TRAINING_FIELDS}, sort_keys=True)


def prepare_data(spec):
    """Split, shift the test rows, and standardise; returns ``(raw, standardized)``.

    Standardisation statistics come from train rows, which the shift never
    touches.
    """
    ds = generate_synthetic(spec.n, spec.d, spec.class_sep, spec.seed)
    ds = split(ds, spec.fractions, seed=spec.seed + 1)
    raw = apply_shift(ds, spec.shift, rows="test")
    return raw, standardize(raw)


def _ood_rows(spec, X_train, y_train, attack_model):
    rng = np.random.default_rng([spec.seed, 7])
    parts = []
    if spec.ood_attack_points > 0:
        idx = rng.choice(len(X_train), size=min(spec.ood_attack_points, len(X_train)), replace=False)
        results = cw_batch(attack_model, X_train[idx], c=2.0, steps=100, step_size=0.05)
        parts.append(np.array([r.x_adv for r in results]))
    if spec.ood_noise_points > 0:
        # augmentation: uniform noise over an enlarged feature box
        box = 2.0 * np.abs(X_train).max(axis=0)
        parts.append(rng.uniform(-box, box, size=(spec.ood_noise_points, X_train.shape[1])))
    return np.vstack(parts) if parts else None


def train_models(spec, raw, std):
    Xs, ys = std.rows("train")
    Xr, yr = raw.rows("train")
    mlp_cfg = MlpConfig(**{"seed": spec.seed * 1000, **spec.mlp})
    models = {}
    if "stumps" in spec.base_models:
        models["stumps"] = train_stumps(Xr, yr, spec.stump_rounds, spec.stump_learning_rate)
    if "mlp" in spec.base_models:
        models["mlp"] = train_mlp(Xs, ys, mlp_cfg)
    if "ensemble" in spec.base_models:
        models["ensemble"] = train_ensemble(Xs, ys, mlp_cfg, spec.ensemble_size, mlp_cfg.seed)
    if "priornet" in spec.base_models:
        pn_cfg = PriorNetConfig(**{"seed": spec.seed * 1000 + 500, **spec.priornet})
        attacker = models.get("mlp") or train_mlp(Xs, ys, mlp_cfg)
        ood = _ood_rows(spec, Xs, ys, attacker) if pn_cfg.lambda_weight > 0 else None
        models["priornet"] = train_priornet(Xs, ys, ood, pn_cfg)
    return models


def _raw_outputs(models, raw, std, name):
    """Uncalibrated model outputs on one split."""
    Xr, _ = raw.rows(name)
    Xs, _ = std.rows(name)
    out = {}
    if "stumps" in models:
        out["stumps_score"] = models["stumps"].score(Xr)
    if "mlp" in models:
        out["mlp_logits"] = models["mlp"].logits(Xs)
    if "ensemble" in models:
        out["member_logits"] = models["ensemble"].member_logits(Xs)
    if "priornet" in models:
        out["alphas"] = models["priornet"].alphas(Xs).alphas
    return out


def fit_calibrators(outputs, labels):
    """Isotonic map for the stump scores, one temperature per neural model."""
    fitted = {}
    if "stumps_score" in outputs:
        fitted["stumps"] = cal.fit_isotonic(outputs["stumps_score"], labels, split_id="calibration")
    if "mlp_logits" in outputs:
        fitted["mlp"] = cal.fit_temperature(outputs["mlp_logits"], labels, split_id="calibration")
    if "member_logits" in outputs:
        # one shared temperature, fitted on the members' mean logits
        fitted["ensemble"] = cal.fit_temperature(outputs["member_logits"].mean(axis=0), labels,
                                                 split_id="calibration")
    if "alphas" in outputs:
        fitted["priornet"] = cal.fit_temperature(np.log(outputs["alphas"]), labels, split_id="calibration")
    return fitted


def _predictions(outputs, calibrators, spec):
    """Fused probabilities and the uncertainty triple for one split."""
    t = {k: (v.t if isinstance(v, cal.Temperature) else None) for k, v in calibrators.items()}
    neural = uncertainty = None
    if "mlp_logits" in outputs:
        neural = cal.apply_temperature(outputs["mlp_logits"], t.get("mlp") or 1.0)
    if "member_logits" in outputs:
        members = softmax(outputs["member_logits"] / (t.get("ensemble") or 1.0))
        ens = EnsembleOutput.from_members(members)
        neural = ens.mean_probs
        uncertainty = ensemble_uncertainty(ens)
    if "alphas" in outputs:
        neural = cal.apply_temperature(np.log(outputs["alphas"]), t.get("priornet") or 1.0)
        uncertainty = dirichlet_uncertainty(outputs["alphas"])
    stumps = None
    if "stumps_score" in outputs:
        s = outputs["stumps_score"]
        if "stumps" in calibrators:
            s = cal.apply_isotonic(calibrators["stumps"], s)
        stumps = score_to_probability_pair(s)
    if neural is None:
        fused = stumps
    elif stumps is None:
        fused = neural
    else:
        fused = fuse(neural, stumps, spec.effective_fusion_weight)
    return PredictionBundle.from_probs(fused, uncertainty)


def _acceptance_scores(spec, calib_bundle, calib_y, test_bundle):
    """Per-instance scores on calibration and test rows, plus the threshold direction."""
    p = spec.pipeline
    if p is Pipeline.PROB_THRESHOLD:
        s = [b.fused_probs[np.arange(len(b)), b.predicted_label] for b in (calib_bundle, test_bundle)]
        return s[0], s[1], ThresholdKind.AT_LEAST
    if p is Pipeline.UNCERTAINTY_THRESHOLD:
        kind = spec.ncm_kind or NcmKind.ENTROPY_OF_EXPECTED
        return ncm_score(kind, calib_bundle), ncm_score(kind, test_bundle), ThresholdKind.AT_MOST
    kind = NcmKind.NEG_PREDICTED_PROBABILITY if p is Pipeline.ICE_PROB_NCM else spec.ncm_kind
    scores = build_calibration(calib_bundle, calib_y, kind)
    return (
        bundle_p_values(scores, calib_bundle, spec.smoothed_p_values),
        bundle_p_values(scores, test_bundle, spec.smoothed_p_values),
        ThresholdKind.AT_LEAST,
    )


def run_experiment(spec, models=None):
    """Run one fully seeded experiment and return its :class:`ExperimentReport`.

    ``models`` may carry base models already trained for a spec with the
    same :func:`training_key`; they are only read, never modified.
    """
    if isinstance(spec, dict):
        spec = ExperimentSpec.from_dict(spec)
    raw, std = _stage("data", prepare_data, spec)
    if models is None:
        models = _stage("train", train_models, spec, raw, std)
    outs = {name: _stage("predict", _raw_outputs, models, raw, std, name)
            for name in ("calibration", "test")}
    _, y_cal = raw.rows("calibration")
    _, y_test = raw.rows("test")
    calibrators = _stage("calibrate", fit_calibrators, outs["calibration"], y_cal) if spec.calibrated else {}
    cal_b = _stage("fuse", _predictions, outs["calibration"], calibrators, spec)
    test_b = _stage("fuse", _predictions, outs["test"], calibrators, spec)
    s_cal, s_test, kind = _stage("score", _acceptance_scores, spec, cal_b, y_cal, test_b)

    notes = []
    if spec.calibrated:
        notes.append("calibration split reused for probability calibration and threshold selection")
    if spec.pipeline in (Pipeline.ICE_PROB_NCM, Pipeline.ICE_UNCERTAINTY_NCM):
        notes.append("calibration split reused for conformal scores and threshold selection")
    try:
        res = optimize_threshold(s_cal, kind, cal_b.predicted_label, y_cal)
        theta, h = res.theta, res.h
    except DegenerateInputError:
        if kind is ThresholdKind.AT_LEAST and spec.pipeline.value.startswith("ice"):
            theta = FALLBACK_TAU
        else:
            theta = -np.inf if kind is ThresholdKind.AT_LEAST else np.inf
        h = 0.0
        log.warning("calibration split has no incorrect predictions; falling back to threshold %s", theta)
        notes.append(f"degenerate calibration split; fallback threshold {theta}")
    curve = _stage("threshold", sweep, s_cal, kind, cal_b.predicted_label, y_cal)

    quad = _stage("evaluate", tally, s_test, kind, theta, test_b.predicted_label, y_test)
    acc_mask = s_test >= theta if kind is ThresholdKind.AT_LEAST else s_test <= theta
    accepted_metrics = (
        classifier_metrics(test_b.predicted_label[acc_mask], y_test[acc_mask]).to_dict()
        if acc_mask.any() else None
    )
    return ExperimentReport(
        label=spec.label,
        classifier_metrics=classifier_metrics(test_b.predicted_label, y_test).to_dict(),
        validation_metrics=classifier_metrics(cal_b.predicted_label, y_cal).to_dict(),
        accepted_metrics=accepted_metrics,
        quad=quad.to_dict(),
        rates=asdict(rates(quad)),
        chosen_threshold=float(theta),
        threshold_h=float(h),
        threshold_kind=kind.value,
        sweep_curve=[list(r) for r in curve.rows()],
        calibration={k: v.to_dict() for k, v in sorted(calibrators.items())},
        notes=notes,
        provenance={"spec": spec.to_dict(), "fusion_weight": spec.effective_fusion_weight},
    )


@dataclass
class MatrixResult:
    reports: list
    errors: dict
    table: list


def comparison_row(spec, report):
    r = report.rates
    return {
        "label": spec.label,
        "pipeline": spec.pipeline.value,
        "ncm_kind": None if spec.ncm_kind is None else spec.ncm_kind.value,
        "calibrated": spec.calibrated,
        "seed": spec.seed,
        **report.quad,
        "ca_pct": r["ca_pct"],
        "ia_pct": r["ia_pct"],
        "f1": report.classifier_metrics["f1"],
    }


def run_matrix(specs, workers=1, share_models=True):
    """Run independent experiments; a failing spec is recorded and skipped.

    With ``share_models`` each distinct :func:`training_key` is trained
    once and reused, which leaves every report unchanged.
    """
    specs = [ExperimentSpec.from_dict(s) if isinstance(s, dict) else s for s in specs]
    if not specs:
        raise ValidationError("experiment matrix is empty")
    trained = {}

    def models_for(spec):
        key = training_key(spec)
        if key not in trained:
            raw, std = _stage("data", prepare_data, spec)
            trained[key] = _stage("train", train_models, spec, raw, std)
        return trained[key]

    def one(spec):
        try:
            return run_experiment(spec, models_for(spec) if share_models else None), None
        except Exception as exc:  # isolate per-spec failures
            return None, exc

    if share_models:
        # train up front so concurrent runs only read the shared models
        for spec in specs:
            try:
                models_for(spec)
            except Exception:
                pass

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, specs))
    else:
        results = [one(s) for s in specs]
    reports, errors, table = [], {}, []
    for i, (spec, (report, err)) in enumerate(zip(specs, results)):
        reports.append(report)
        if err is not None:
            errors[i] = str(err)
            log.error("experiment %d (%s) failed: %s", i, spec.label, err)
        else:
            table.append(comparison_row(spec, report))
    return MatrixResult(reports, errors, table)


def report_to_json(report):
    return json.dumps(report.to_dict(), sort_keys=True, indent=2, allow_nan=True) + "\n"


def sweep_to_csv(report):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for row in report.sweep_curve:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def emit_report(report, path, format="json"):
    """Write a report as JSON, or its sweep curve as CSV; output is byte-stable."""
    if format == "json":
        text = report_to_json(report)
    elif format == "csv":
        text = sweep_to_csv(report)
    else:
        raise ValidationError(f"unsupported report format {format!r}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def load_report(path):
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    if d.get("format") != REPORT_FORMAT:
        raise ValidationError("not a report document")
    return ExperimentReport.from_dict(d)


def bundle_from_records(records, use_alphas=False):
    """Build a :class:`PredictionBundle` from externally produced score records."""
    probs, members = [], []
    for r in records:
        if r.ensemble is not None:
            members.append(r.ensemble.member_probs)
        if use_alphas and r.dirichlet is not None:
            probs.append(r.dirichlet.alphas / r.dirichlet.alpha0)
        elif r.ensemble is not None:
            probs.append(r.ensemble.mean_probs)
        else:
            probs.append(softmax(r.logits))
    uncertainty = None
    if use_alphas and all(r.dirichlet is not None for r in records):
        uncertainty = dirichlet_uncertainty(np.array([r.dirichlet.alphas for r in records]))
    elif len(members) == len(records) and len({m.shape for m in members}) == 1:
        uncertainty = ensemble_uncertainty(np.stack(members, axis=1))
    return PredictionBundle.from_probs(np.array(probs), uncertainty)
