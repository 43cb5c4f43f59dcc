"""Accept/reject bookkeeping and harmonic-mean threshold selection."""

from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np

from .errors import DegenerateInputError, ValidationError


class ThresholdKind(str, Enum):
    """``AT_LEAST``: accept iff score >= theta (probabilities, p-values).
    ``AT_MOST``: accept iff score <= theta (uncertainties)."""

    AT_LEAST = "score_at_least"
    AT_MOST = "score_at_most"


@dataclass(frozen=True)
class ConfusionQuad:
    ca: int
    cr: int
    ir: int
    ia: int

    @property
    def n_correct(self):
        return self.ca + self.ir

    @property
    def n_incorrect(self):
        return self.cr + self.ia

    @property
    def total(self):
        return self.ca + self.cr + self.ir + self.ia

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class Rates:
    ca_pct: float
    cr_pct: float
    ir_pct: float
    ia_pct: float
    degenerate: bool = False


@dataclass(frozen=True)
class ThresholdResult:
    theta: float
    h: float
    quad: ConfusionQuad
    ca_pct: float
    cr_pct: float
    ir_pct: float
    ia_pct: float
    kind: ThresholdKind = ThresholdKind.AT_LEAST

    def to_dict(self):
        return {
            "theta": self.theta, "h": self.h, "quad": self.quad.to_dict(),
            "ca_pct": self.ca_pct, "cr_pct": self.cr_pct,
            "ir_pct": self.ir_pct, "ia_pct": self.ia_pct, "kind": self.kind.value,
        }


@dataclass(frozen=True)
class Sweep:
    """Counts and rates at every grid threshold."""

    theta: np.ndarray
    ca: np.ndarray
    cr: np.ndarray
    ir: np.ndarray
    ia: np.ndarray
    ca_pct: np.ndarray
    cr_pct: np.ndarray
    h: np.ndarray

    def rows(self):
        return list(zip(self.theta.tolist(), self.ca_pct.tolist(), self.cr_pct.tolist(), self.h.tolist()))


def _aligned(scores, predicted, truth):
    s = np.asarray(scores, dtype=float).ravel()
    p = np.asarray(predicted).ravel()
    t = np.asarray(truth).ravel()
    if not (len(s) == len(p) == len(t)):
        raise ValidationError("scores, predicted and true labels must have equal lengths")
    if len(s) == 0:
        raise ValidationError("need at least one instance")
    return s, p == t


def accepted(scores, kind, theta):
    s = np.asarray(scores, dtype=float)
    return s >= theta if ThresholdKind(kind) is ThresholdKind.AT_LEAST else s <= theta


def tally(scores, kind, theta, predicted_labels, true_labels):
    """Count correctly/incorrectly accepted and rejected predictions at ``theta``."""
    s, correct = _aligned(scores, predicted_labels, true_labels)
    acc = accepted(s, kind, theta)
    return ConfusionQuad(
        ca=int(np.sum(acc & correct)),
        cr=int(np.sum(~acc & ~correct)),
        ir=int(np.sum(~acc & correct)),
        ia=int(np.sum(acc & ~correct)),
    )


def _pct(num, den):
    return 100.0 * num / den if den > 0 else 0.0


def rates(quad):
    """Percentages of correct (CA, IR) and incorrect (CR, IA) predictions.

    A zero denominator yields 0 for the affected pair and sets ``degenerate``.
    """
    nc, ni = quad.n_correct, quad.n_incorrect
    return Rates(
        ca_pct=_pct(quad.ca, nc),
        cr_pct=_pct(quad.cr, ni),
        ir_pct=_pct(quad.ir, nc),
        ia_pct=_pct(quad.ia, ni),
        degenerate=nc == 0 or ni == 0,
    )


def harmonic(ca_pct, cr_pct):
    """Harmonic mean of CA% and CR%; 0 when both are 0."""
    ca_pct = np.asarray(ca_pct, dtype=float)
    cr_pct = np.asarray(cr_pct, dtype=float)
    den = ca_pct + cr_pct
    with np.errstate(invalid="ignore", divide="ignore"):
        h = np.where(den > 0, 2.0 * ca_pct * cr_pct / np.where(den > 0, den, 1.0), 0.0)
    return float(h) if h.ndim == 0 else h


def default_grid(scores):
    """Unique scores, midpoints between neighbours, and one sentinel on each side."""
    u = np.unique(np.asarray(scores, dtype=float))
    mids = 0.5 * (u[1:] + u[:-1])
    pad = max(1.0, float(u[-1] - u[0]))
    return np.unique(np.concatenate([[u[0] - pad], u, mids, [u[-1] + pad]]))


def sweep(scores, kind, predicted_labels, true_labels, grid=None):
    """Evaluate every threshold of ``grid`` (default: :func:`default_grid`)."""
    kind = ThresholdKind(kind)
    s, correct = _aligned(scores, predicted_labels, true_labels)
    theta = default_grid(s) if grid is None else np.sort(np.asarray(grid, dtype=float).ravel())
    sc, si = np.sort(s[correct]), np.sort(s[~correct])
    nc, ni = len(sc), len(si)
    if kind is ThresholdKind.AT_LEAST:
        ca = nc - np.searchsorted(sc, theta, side="left")
        ia = ni - np.searchsorted(si, theta, side="left")
    else:
        ca = np.searchsorted(sc, theta, side="right")
        ia = np.searchsorted(si, theta, side="right")
    ir, cr = nc - ca, ni - ia
    ca_pct = 100.0 * ca / nc if nc else np.zeros(len(theta))
    cr_pct = 100.0 * cr / ni if ni else np.zeros(len(theta))
    return Sweep(theta, ca, cr, ir, ia, ca_pct, cr_pct, harmonic(ca_pct, cr_pct))


def _result(sw, i, kind):
    quad = ConfusionQuad(int(sw.ca[i]), int(sw.cr[i]), int(sw.ir[i]), int(sw.ia[i]))
    r = rates(quad)
    return ThresholdResult(float(sw.theta[i]), float(sw.h[i]), quad,
                           r.ca_pct, r.cr_pct, r.ir_pct, r.ia_pct, kind)


def optimize_threshold(scores, kind, predicted_labels, true_labels, grid=None):
    """Grid threshold maximising the harmonic mean of CA% and CR%.

    Ties go to the threshold accepting the most instances, then to the
    smallest theta (``AT_LEAST``) or the largest (``AT_MOST``).
    """
    kind = ThresholdKind(kind)
    s, correct = _aligned(scores, predicted_labels, true_labels)
    if correct.all() or not correct.any():
        raise DegenerateInputError(
            "threshold needs both correct and incorrect predictions; "
            "use the degenerate-rates convention instead"
        )
    sw = sweep(s, kind, predicted_labels, true_labels, grid)
    h_max = sw.h.max()
    cand = np.flatnonzero(sw.h >= h_max - 1e-12 * max(1.0, h_max))
    n_acc = (sw.ca + sw.ia)[cand]
    cand = cand[n_acc == n_acc.max()]
    i = cand[0] if kind is ThresholdKind.AT_LEAST else cand[-1]
    return _result(sw, i, kind)


@dataclass(frozen=True)
class ConstrainedResult:
    theta: float
    f1: float
    reject_rate: float
    quad: ConfusionQuad


def _f1_accepted(pred, truth):
    tp = np.sum((pred == 1) & (truth == 1))
    fp = np.sum((pred == 1) & (truth == 0))
    fn = np.sum((pred == 0) & (truth == 1))
    den = 2 * tp + fp + fn
    return 100.0 * 2 * tp / den if den else 0.0


def optimize_threshold_constrained(scores, kind, predicted_labels, true_labels,
                                   max_reject_rate=0.15, grid=None):
    """Maximise F1 of the accepted predictions subject to a rejection-rate cap."""
    kind = ThresholdKind(kind)
    s, _ = _aligned(scores, predicted_labels, true_labels)
    pred = np.asarray(predicted_labels).ravel()
    truth = np.asarray(true_labels).ravel()
    theta = default_grid(s) if grid is None else np.sort(np.asarray(grid, dtype=float).ravel())
    best = None
    for th in theta:
        acc = accepted(s, kind, th)
        rr = 1.0 - acc.mean()
        if rr > max_reject_rate + 1e-12:
            continue
        f1 = _f1_accepted(pred[acc], truth[acc])
        if best is None or f1 > best[1] + 1e-12:
            best = (th, f1, rr)
    if best is None:
        raise DegenerateInputError("no threshold satisfies the rejection-rate cap")
    th, f1, rr = best
    return ConstrainedResult(float(th), float(f1), float(rr), tally(s, kind, th, pred, truth))
