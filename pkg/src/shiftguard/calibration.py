"""Post-hoc probability calibration.

Isotonic regression (pool-adjacent-violators) recalibrates the boosted
stump scores; temperature scaling recalibrates network logits.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .numerics import log_softmax, softmax

DEFAULT_T_BOUNDS = (0.01, 10.0)
_INV_PHI = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class IsotonicMap:
    knot_scores: np.ndarray
    knot_values: np.ndarray
    split_id: str | None = None

    def __post_init__(self):
        ks = np.asarray(self.knot_scores, dtype=float)
        kv = np.asarray(self.knot_values, dtype=float)
        if ks.ndim != 1 or ks.shape != kv.shape or len(ks) == 0:
            raise ValidationError("knot arrays must be 1-D, nonempty and of equal length")
        if np.any(np.diff(ks) < 0) or np.any(np.diff(kv) < -1e-12):
            raise ValidationError("knots must be nondecreasing")
        if np.any(kv < -1e-12) or np.any(kv > 1 + 1e-12):
            raise ValidationError("knot values must lie in [0, 1]")
        object.__setattr__(self, "knot_scores", ks)
        object.__setattr__(self, "knot_values", np.clip(kv, 0.0, 1.0))

    def __call__(self, s):
        return apply_isotonic(self, s)

    def to_dict(self):
        return {
            "method": "isotonic",
            "knot_scores": self.knot_scores.tolist(),
            "knot_values": self.knot_values.tolist(),
            "split_id": self.split_id,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["knot_scores"]), np.asarray(d["knot_values"]), d.get("split_id"))


def pava(values, weights=None):
    """Weighted pool-adjacent-violators: nondecreasing least-squares fit to ``values``."""
    y = np.asarray(values, dtype=float)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    # blocks as parallel stacks of (weighted mean, weight, length)
    means, wts, lens = [], [], []
    for yi, wi in zip(y, w):
        means.append(yi)
        wts.append(wi)
        lens.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            m2, w2, l2 = means.pop(), wts.pop(), lens.pop()
            m1, w1, l1 = means.pop(), wts.pop(), lens.pop()
            wt = w1 + w2
            means.append((m1 * w1 + m2 * w2) / wt)
            wts.append(wt)
            lens.append(l1 + l2)
    return np.repeat(means, lens)


def fit_isotonic(scores, labels, split_id=None):
    """Fit a nondecreasing map from raw scores to outcome frequencies.

    Tied scores are pooled first, since a function must give them one
    value; PAVA then runs on the distinct scores weighted by multiplicity.
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=float)
    if s.shape != y.shape or s.ndim != 1:
        raise ValidationError("scores and labels must be 1-D and of equal length")
    if len(s) < 2:
        raise ValidationError("isotonic fitting needs at least two points")
    if not np.all(np.isin(y, (0, 1))):
        raise ValidationError("labels must be binary")
    if not np.all(np.isfinite(s)):
        raise ValidationError("scores must be finite")
    knots, inverse, counts = np.unique(s, return_inverse=True, return_counts=True)
    sums = np.bincount(inverse, weights=y)
    values = pava(sums / counts, counts)
    return IsotonicMap(knots, values, split_id)


def apply_isotonic(iso, s):
    """Evaluate the map: linear between knots, clamped outside the knot range."""
    out = np.interp(np.asarray(s, dtype=float), iso.knot_scores, iso.knot_values)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class Temperature:
    t: float
    t_min: float = DEFAULT_T_BOUNDS[0]
    t_max: float = DEFAULT_T_BOUNDS[1]
    split_id: str | None = None

    def __post_init__(self):
        if not 0 < self.t_min <= self.t <= self.t_max:
            raise ValidationError("temperature must satisfy 0 < t_min <= t <= t_max")

    def to_dict(self):
        return {"method": "temperature", "t": self.t, "t_min": self.t_min,
                "t_max": self.t_max, "split_id": self.split_id}

    @classmethod
    def from_dict(cls, d):
        return cls(d["t"], d["t_min"], d["t_max"], d.get("split_id"))


def temperature_nll(logits, labels, t):
    """Summed negative log-likelihood of ``softmax(logits / t)``."""
    z = np.asarray(logits, dtype=float)
    y = np.asarray(labels, dtype=int)
    return float(-np.sum(log_softmax(z / t)[np.arange(len(y)), y]))


def golden_section(f, lo, hi, tol=1e-4):
    """Minimise a unimodal ``f`` on ``[lo, hi]`` to interval width ``tol``."""
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def fit_temperature(logits, labels, bounds=DEFAULT_T_BOUNDS, tol=1e-4, split_id=None):
    """Temperature minimising validation NLL inside ``bounds``.

    Flat objectives resolve to the smallest temperature attaining the
    minimum (the lower bound when the NLL is constant).
    """
    z = np.asarray(logits, dtype=float)
    y = np.asarray(labels)
    if z.ndim != 2 or len(z) == 0:
        raise ValidationError("need a nonempty (n, K) array of logits")
    if y.shape != (len(z),) or not np.all(np.isin(y, np.arange(z.shape[1]))):
        raise ValidationError("labels must be class indices aligned with the logits")
    if not np.all(np.isfinite(z)):
        raise ValidationError("logits must be finite")
    t_min, t_max = map(float, bounds)
    if not 0 < t_min < t_max:
        raise ValidationError("bounds must satisfy 0 < t_min < t_max")
    f = lambda t: temperature_nll(z, y, t)  # noqa: E731
    t_best, f_best = golden_section(f, t_min, t_max, tol)
    for edge in (t_max, t_min):
        f_edge = f(edge)
        if f_edge <= f_best + 1e-12 * max(1.0, abs(f_best)):
            t_best, f_best = edge, f_edge
    return Temperature(float(t_best), t_min, t_max, split_id)


def apply_temperature(logits, temp):
    """Softmax of ``logits / T``; ``temp`` is a :class:`Temperature` or a float."""
    z = np.asarray(logits, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValidationError("logits must be finite")
    t = float(getattr(temp, "t", temp))
    if t <= 0:
        raise ValidationError("temperature must be positive")
    return softmax(z / t)


def calibration_from_dict(d):
    if d.get("method") == "isotonic":
        return IsotonicMap.from_dict(d)
    if d.get("method") == "temperature":
        return Temperature.from_dict(d)
    raise ValidationError(f"unknown calibration method {d.get('method')!r}")
