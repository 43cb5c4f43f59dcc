"""Synthetic shift-aware datasets, splitting, standardisation and file ingestion."""

import csv
import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum

import jsonschema
import numpy as np

from .errors import DataFormatError, ValidationError
from .models.ensemble import EnsembleOutput
from .models.priornet import DirichletParams

SPLITS = ("train", "calibration", "test")
DEFAULT_FRACTIONS = (0.6, 0.1, 0.3)


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    split: np.ndarray | None = None
    standardization: tuple | None = None
    zero_variance: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels).astype(int)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ValidationError("features must be (n, d) with n aligned labels")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        if self.split is not None:
            object.__setattr__(self, "split", np.asarray(self.split, dtype=object))

    def __len__(self):
        return len(self.labels)

    @property
    def dim(self):
        return self.features.shape[1]

    def mask(self, name):
        if self.split is None:
            raise ValidationError("dataset has no split assignment")
        if name not in SPLITS:
            raise ValidationError(f"unknown split {name!r}")
        return self.split == name

    def rows(self, name=None):
        """``(X, y)`` of one split, or of every row when ``name`` is None."""
        if name is None:
            return self.features, self.labels
        m = self.mask(name)
        return self.features[m], self.labels[m]

    def split_sizes(self):
        return tuple(int(np.sum(self.mask(s))) for s in SPLITS)


class ShiftKind(str, Enum):
    NONE = "none"
    AFFINE_PACKING = "affine_packing"
    FEATURE_SCRAMBLE = "feature_scramble"


@dataclass(frozen=True)
class ShiftSpec:
    kind: ShiftKind = ShiftKind.NONE
    strength: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", ShiftKind(self.kind))
        if not self.strength >= 0:
            raise ValidationError("shift strength must be nonnegative")

    @property
    def is_identity(self):
        return self.kind is ShiftKind.NONE or self.strength == 0

    def to_dict(self):
        return {"kind": self.kind.value, "strength": self.strength, "seed": self.seed}


def generate_synthetic(n, d, class_sep, seed):
    """Two unit-variance Gaussian classes whose means are ``class_sep`` apart.

    The separating direction is a seeded random unit vector; labels are
    fair coin flips, so classes are balanced in expectation.
    """
    if n < 10 or d < 2:
        raise ValidationError("need n >= 10 and d >= 2")
    if class_sep < 0:
        raise ValidationError("class_sep must be nonnegative")
    rng = np.random.default_rng(seed)
    direction = rng.normal(size=d)
    direction /= np.linalg.norm(direction)
    y = rng.integers(0, 2, size=n)
    centers = np.outer(y - 0.5, direction) * class_sep
    X = centers + rng.normal(size=(n, d))
    return LabeledDataset(X, y)


def shift_transform(spec, d):
    """The affine map ``(A, b)`` realised by ``spec`` in dimension ``d``."""
    if spec.is_identity:
        return np.eye(d), np.zeros(d)
    rng = np.random.default_rng(spec.seed)
    if spec.kind is ShiftKind.AFFINE_PACKING:
        A = np.eye(d) + spec.strength * rng.normal(size=(d, d)) / np.sqrt(d)
        b = spec.strength * rng.normal(size=d)
        return A, b
    # feature_scramble: blend each feature with a permuted partner
    mix = min(spec.strength, 1.0)
    perm = rng.permutation(d)
    A = (1.0 - mix) * np.eye(d)
    A[np.arange(d), perm] += mix
    return A, np.zeros(d)


def apply_shift(data, spec, rows=None):
    """Covariate shift ``x -> A x + b`` on ``rows`` (a split name, or all rows).

    Labels, row count and feature dimension never change.
    """
    if spec.is_identity:
        return data
    A, b = shift_transform(spec, data.dim)
    X = data.features.copy()
    sel = np.ones(len(data), bool) if rows is None else data.mask(rows)
    X[sel] = X[sel] @ A.T + b
    return replace(data, features=X)


def _split_counts(n, fractions):
    raw = np.asarray(fractions, dtype=float) * n
    counts = np.floor(raw).astype(int)
    remainder = n - counts.sum()
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:remainder]] += 1
    return counts


def split(data, fractions=DEFAULT_FRACTIONS, seed=0):
    """Seeded random train/calibration/test assignment, counts within one of exact."""
    fr = np.asarray(fractions, dtype=float)
    if fr.shape != (3,) or np.any(fr <= 0) or abs(fr.sum() - 1.0) > 1e-9:
        raise ValidationError("fractions must be three positive numbers summing to 1")
    counts = _split_counts(len(data), fr)
    tags = np.repeat(np.array(SPLITS, dtype=object), counts)
    perm = np.random.default_rng(seed).permutation(len(data))
    assignment = np.empty(len(data), dtype=object)
    assignment[perm] = tags
    return replace(data, split=assignment)


def standardize(data):
    """Zero-mean, unit-variance scaling fitted on train rows, applied to all rows.

    Constant train features get std 1 and are flagged in ``zero_variance``.
    """
    X_train, _ = data.rows("train")
    if len(X_train) == 0:
        raise ValidationError("train split is empty")
    mean = X_train.mean(axis=0)
    std = X_train.std(axis=0)
    zero = std == 0
    std = np.where(zero, 1.0, std)
    return replace(data, features=(data.features - mean) / std,
                   standardization=(mean, std), zero_variance=zero)


def apply_standardization(X, standardization):
    mean, std = standardization
    return (np.asarray(X, dtype=float) - mean) / std


# ---------------------------------------------------------------- file I/O

def _finite_float(text, line, column):
    try:
        v = float(text)
    except ValueError:
        raise DataFormatError(f"column {column!r}: cannot parse {text!r}", line) from None
    if not math.isfinite(v):
        raise DataFormatError(f"column {column!r}: non-finite value {text!r}", line)
    return v


def _label(value, line):
    if value in (0, 1, "0", "1") and not isinstance(value, bool):
        return int(value)
    raise DataFormatError(f"label must be 0 or 1, got {value!r}", line)


def _load_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise DataFormatError("file is empty", 1)
        header = [h.strip() for h in header]
        if "label" not in header:
            raise DataFormatError("missing 'label' column", 1)
        li = header.index("label")
        fcols = [i for i in range(len(header)) if i != li]
        X, y = [], []
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataFormatError(f"expected {len(header)} fields, got {len(row)}", line)
            X.append([_finite_float(row[i], line, header[i]) for i in fcols])
            y.append(_label(row[li].strip(), line))
    if not y:
        raise DataFormatError("no data rows", 2)
    return LabeledDataset(np.array(X, dtype=float).reshape(len(y), len(fcols)), np.array(y))


def _load_jsonl(path):
    X, y = [], []
    with open(path, encoding="utf-8") as fh:
        for line, text in enumerate(fh, start=1):
            if not text.strip():
                continue
            try:
                rec = json.loads(text)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"invalid JSON: {exc.msg}", line) from None
            if "label" not in rec:
                raise DataFormatError("missing 'label' field", line)
            if not isinstance(rec.get("features"), list):
                raise DataFormatError("'features' must be a list", line)
            X.append([_finite_float(v, line, f"features[{i}]") for i, v in enumerate(rec["features"])])
            y.append(_label(rec["label"], line))
            if len(X[-1]) != len(X[0]):
                raise DataFormatError("inconsistent feature count", line)
    if not y:
        raise DataFormatError("no data rows", 1)
    return LabeledDataset(np.array(X, dtype=float), np.array(y))


def load_features(path, format="csv"):
    """Read a feature file (header + features + ``label`` column, or JSONL rows)."""
    if format == "csv":
        return _load_csv(path)
    if format == "jsonl":
        return _load_jsonl(path)
    raise ValidationError(f"unsupported format {format!r}")


def save_features(data, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"f{j}" for j in range(data.dim)] + ["label"])
        for x, label in zip(data.features, data.labels):
            w.writerow([repr(float(v)) for v in x] + [int(label)])


SCORES_SCHEMA = "scores-v1"

_PAIR = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_RECORD_SCHEMA = {
    "type": "object",
    "properties": {
        "schema": {"const": SCORES_SCHEMA},
        "member_probs": {"type": "array", "items": _PAIR, "minItems": 1},
        "logits": _PAIR,
        "alphas": _PAIR,
        "label": {"enum": [0, 1]},
    },
    "required": ["schema"],
    "oneOf": [{"required": ["member_probs"]}, {"required": ["logits"]}],
}


@dataclass(frozen=True)
class ScoreRecord:
    """Externally produced scores for one instance."""

    ensemble: EnsembleOutput | None = None
    logits: np.ndarray | None = None
    dirichlet: DirichletParams | None = None
    label: int | None = None
    extra: dict = field(default_factory=dict)


def load_external_scores(path):
    """Parse a ``scores-v1`` JSONL file into :class:`ScoreRecord` objects."""
    validator = jsonschema.Draft202012Validator(_RECORD_SCHEMA)
    records = []
    with open(path, encoding="utf-8") as fh:
        for line, text in enumerate(fh, start=1):
            if not text.strip():
                continue
            try:
                rec = json.loads(text)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"invalid JSON: {exc.msg}", line) from None
            err = next(iter(sorted(validator.iter_errors(rec), key=str)), None)
            if err is not None:
                raise DataFormatError(f"schema violation: {err.message}", line)
            ens = logits = dirichlet = None
            if "member_probs" in rec:
                mp = np.asarray(rec["member_probs"], dtype=float)
                if np.any(mp < 0) or np.any(np.abs(mp.sum(axis=1) - 1.0) > 1e-6):
                    raise DataFormatError("member probabilities must be nonnegative and sum to 1", line)
                ens = EnsembleOutput.from_members(mp)
            else:
                logits = np.asarray(rec["logits"], dtype=float)
            if "alphas" in rec:
                a = np.asarray(rec["alphas"], dtype=float)
                if np.any(a <= 0):
                    raise DataFormatError("alphas must be strictly positive", line)
                dirichlet = DirichletParams.from_alphas(a)
            records.append(ScoreRecord(ens, logits, dirichlet, rec.get("label")))
    if not records:
        raise DataFormatError("no records", 1)
    return records
