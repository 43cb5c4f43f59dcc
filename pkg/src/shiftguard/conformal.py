"""Label-conditional inductive conformal evaluation.

Nonconformity scores are oriented so that larger means more unusual for
every NCM kind. The reference set for a test example is the calibration
examples whose *true* label equals the test example's *predicted* label.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ValidationError
from .numerics import check_distribution
from .uncertainty import UncertaintyTriple


class NcmKind(str, Enum):
    NEG_PREDICTED_PROBABILITY = "neg_predicted_probability"
    EXPECTED_ENTROPY = "expected_entropy"
    ENTROPY_OF_EXPECTED = "entropy_of_expected"
    KNOWLEDGE_UNCERTAINTY = "knowledge_uncertainty"

    @property
    def needs_uncertainty(self):
        return self is not NcmKind.NEG_PREDICTED_PROBABILITY


UNCERTAINTY_KINDS = tuple(k for k in NcmKind if k.needs_uncertainty)


@dataclass(frozen=True)
class PredictionBundle:
    """Fused probabilities ``(n, 2)``, their argmax labels, optional uncertainty."""

    fused_probs: np.ndarray
    predicted_label: np.ndarray
    uncertainty: UncertaintyTriple | None = None

    @classmethod
    def from_probs(cls, probs, uncertainty=None):
        probs = check_distribution(np.atleast_2d(probs), atol=1e-6)
        return cls(probs, np.argmax(probs, axis=-1), uncertainty)

    def __len__(self):
        return len(self.predicted_label)

    def take(self, idx):
        u = None if self.uncertainty is None else self.uncertainty.take(idx)
        return PredictionBundle(self.fused_probs[idx], self.predicted_label[idx], u)


def ncm_score(kind, bundle):
    """Nonconformity score of every example in ``bundle`` (larger = stranger)."""
    kind = NcmKind(kind)
    if kind is NcmKind.NEG_PREDICTED_PROBABILITY:
        p = bundle.fused_probs
        return -p[np.arange(len(p)), bundle.predicted_label]
    if bundle.uncertainty is None:
        raise ValidationError(f"NCM {kind.value} requires uncertainty estimates")
    return np.atleast_1d(np.asarray(getattr(bundle.uncertainty, kind.value), dtype=float))


@dataclass(frozen=True)
class CalibrationScores:
    per_label: tuple
    kind: NcmKind
    split_id: str | None = None

    def group(self, label):
        scores = self.per_label[int(label)]
        if len(scores) == 0:
            raise ValidationError(f"no calibration scores for class {label}")
        return scores

    def to_dict(self):
        return {
            "ncm_kind": self.kind.value,
            "split_id": self.split_id,
            "per_label": [s.tolist() for s in self.per_label],
        }

    @classmethod
    def from_dict(cls, d):
        groups = tuple(np.sort(np.asarray(g, dtype=float)) for g in d["per_label"])
        return cls(groups, NcmKind(d["ncm_kind"]), d.get("split_id"))


def build_calibration(bundle, true_labels, kind, split_id="calibration", n_classes=2):
    """Group calibration nonconformity scores by true label, each group sorted."""
    kind = NcmKind(kind)
    y = np.asarray(true_labels)
    if y.shape != (len(bundle),):
        raise ValidationError("true labels must align with the calibration bundle")
    scores = ncm_score(kind, bundle)
    groups = []
    for c in range(n_classes):
        g = np.sort(scores[y == c])
        if len(g) == 0:
            raise ValidationError(f"class {c} has no calibration examples")
        groups.append(g)
    return CalibrationScores(tuple(groups), kind, split_id)


def p_value(calib, predicted_label, alpha_z, smoothed=False):
    """Fraction of same-class calibration scores at least as large as ``alpha_z``.

    ``smoothed=True`` returns ``(count + 1) / (n + 1)`` instead.
    Vectorised over aligned ``predicted_label`` / ``alpha_z`` arrays.
    """
    labels = np.atleast_1d(predicted_label).astype(int)
    alphas = np.atleast_1d(np.asarray(alpha_z, dtype=float))
    labels, alphas = np.broadcast_arrays(labels, alphas)
    out = np.empty(alphas.shape)
    for c in np.unique(labels):
        S = calib.group(c)
        sel = labels == c
        count = len(S) - np.searchsorted(S, alphas[sel], side="left")
        out[sel] = (count + 1) / (len(S) + 1) if smoothed else count / len(S)
    if np.ndim(alpha_z) == 0 and np.ndim(predicted_label) == 0:
        return float(out[0])
    return out


def bundle_p_values(calib, bundle, smoothed=False):
    """p-values of every example in ``bundle`` under the calibration's NCM."""
    return p_value(calib, bundle.predicted_label, ncm_score(calib.kind, bundle), smoothed)


def ice_decide(p_z, tau):
    """Accept iff ``p_z >= tau``."""
    accept = np.asarray(p_z) >= tau
    return bool(accept) if accept.ndim == 0 else accept
