"""Gradient-boosted decision stumps on the logistic loss.

Stands in for the gradient-boosted tree baseline: any model producing a
monotone score in [0, 1] fits the downstream interface.
"""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ValidationError
from ..numerics import sigmoid

_PRIOR_CLIP = 1e-4


@dataclass(frozen=True)
class Stump:
    feature: int
    threshold: float
    left_value: float
    right_value: float

    def predict(self, X):
        return np.where(X[:, self.feature] <= self.threshold, self.left_value, self.right_value)


@dataclass
class StumpEnsembleModel:
    prior: float
    stumps: list = field(default_factory=list)
    learning_rate: float = 0.1
    input_dim: int | None = None

    def raw_score(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.input_dim is not None and X.shape[1] != self.input_dim:
            raise ValueError(f"expected {self.input_dim} features, got {X.shape[1]}")
        f = np.full(X.shape[0], self.prior)
        for s in self.stumps:
            f += self.learning_rate * s.predict(X)
        return f

    def score(self, X):
        """Malware score in [0, 1] (sigmoid of the additive raw score)."""
        s = sigmoid(self.raw_score(X))
        return float(s[0]) if np.ndim(X) == 1 else s

    def to_dict(self):
        return {
            "kind": "stumps",
            "prior": self.prior,
            "learning_rate": self.learning_rate,
            "input_dim": self.input_dim,
            "stumps": [[s.feature, s.threshold, s.left_value, s.right_value] for s in self.stumps],
        }

    @classmethod
    def from_dict(cls, d):
        stumps = [Stump(int(f), float(t), float(a), float(b)) for f, t, a, b in d["stumps"]]
        return cls(d["prior"], stumps, d["learning_rate"], d.get("input_dim"))


def _best_split(X, order, resid):
    """Best (feature, threshold) for a least-squares fit of ``resid``."""
    n, d = X.shape
    total = resid.sum()
    best = (-np.inf, None, None)
    for j in range(d):
        idx = order[:, j]
        xs = X[idx, j]
        cs = np.cumsum(resid[idx])[:-1]
        valid = xs[1:] > xs[:-1]
        if not np.any(valid):
            continue
        nl = np.arange(1, n)
        gain = cs ** 2 / nl + (total - cs) ** 2 / (n - nl)
        gain = np.where(valid, gain, -np.inf)
        k = int(np.argmax(gain))
        if gain[k] > best[0]:
            best = (gain[k], j, 0.5 * (xs[k] + xs[k + 1]))
    return best[1], best[2]


def _newton_value(resid, hess):
    h = hess.sum()
    return resid.sum() / h if h > 1e-12 else 0.0


def train_stumps(X, y, rounds=100, learning_rate=0.1):
    """Fit an additive stump model by gradient boosting.

    Constant labels produce a prior-only model with no stumps.
    """
    if rounds < 1:
        raise ValidationError("rounds must be at least 1")
    if learning_rate <= 0:
        raise ValidationError("learning_rate must be positive")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(float)
    if X.ndim != 2 or len(y) != X.shape[0] or len(y) == 0:
        raise ValidationError("features and labels must be aligned and nonempty")
    rate = np.clip(y.mean(), _PRIOR_CLIP, 1.0 - _PRIOR_CLIP)
    prior = float(np.log(rate / (1.0 - rate)))
    model = StumpEnsembleModel(prior, [], float(learning_rate), X.shape[1])
    if np.all(y == y[0]):
        return model
    order = np.argsort(X, axis=0, kind="stable")
    f = np.full(len(y), prior)
    for _ in range(rounds):
        p = sigmoid(f)
        resid = y - p
        hess = p * (1.0 - p)
        j, thr = _best_split(X, order, resid)
        if j is None:
            break
        left = X[:, j] <= thr
        stump = Stump(j, float(thr), float(_newton_value(resid[left], hess[left])),
                      float(_newton_value(resid[~left], hess[~left])))
        model.stumps.append(stump)
        f += learning_rate * stump.predict(X)
    return model


def score_to_probability_pair(s):
    """Map malware score(s) ``s`` in [0, 1] to ``[1 - s, s]`` rows."""
    s = np.asarray(s, dtype=float)
    if not np.all(np.isfinite(s)) or np.any((s < 0) | (s > 1)):
        raise ValidationError("scores must lie in [0, 1]")
    return np.stack([1.0 - s, s], axis=-1)
