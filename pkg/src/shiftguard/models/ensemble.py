"""Deep ensemble of independently seeded MLPs."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from ..numerics import softmax
from .mlp import MlpConfig, MlpModel, train_mlp


@dataclass(frozen=True)
class EnsembleOutput:
    """Member predictions of shape ``(M, ..., K)`` and their mean ``(..., K)``."""

    member_probs: np.ndarray
    mean_probs: np.ndarray

    @classmethod
    def from_members(cls, member_probs):
        member_probs = np.asarray(member_probs, dtype=float)
        if member_probs.ndim < 2 or member_probs.shape[0] == 0:
            raise ValidationError("an ensemble output needs at least one member")
        return cls(member_probs, member_probs.mean(axis=0))

    @property
    def n_members(self):
        return self.member_probs.shape[0]


@dataclass
class EnsembleModel:
    members: list
    member_seeds: list

    def __post_init__(self):
        if not self.members:
            raise ValidationError("an ensemble needs at least one member")
        if len(set(self.member_seeds)) != len(self.member_seeds):
            raise ValidationError("member seeds must be pairwise distinct")
        if len({repr(m.network.to_dict()) for m in self.members}) != 1:
            raise ValidationError("members must share one architecture")

    @property
    def input_dim(self):
        return self.members[0].input_dim

    def member_logits(self, X):
        """Logits of every member, shape ``(M, n, 2)``."""
        return np.stack([m.logits(X) for m in self.members])

    def to_dict(self):
        return {
            "kind": "ensemble",
            "member_seeds": list(self.member_seeds),
            "members": [m.to_dict() for m in self.members],
        }

    @classmethod
    def from_dict(cls, d):
        return cls([MlpModel.from_dict(m) for m in d["members"]], list(d["member_seeds"]))


def train_ensemble(X, y, config=None, m=10, base_seed=0, workers=1):
    """Train ``m`` MLPs with seeds ``base_seed .. base_seed + m - 1``.

    Members are independent, so ``workers > 1`` trains them on a thread
    pool; the result does not depend on scheduling.
    """
    if m < 1:
        raise ValidationError("ensemble size must be at least 1")
    config = config or MlpConfig()
    seeds = [int(base_seed) + i for i in range(m)]
    configs = [config.with_seed(s) for s in seeds]
    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            members = list(pool.map(lambda c: train_mlp(X, y, c), configs))
    else:
        members = [train_mlp(X, y, c) for c in configs]
    return EnsembleModel(members, seeds)


def ensemble_predict(ensemble, X, temperature=1.0):
    """Average member probabilities; ``temperature`` rescales every member's logits."""
    logits = ensemble.member_logits(np.atleast_2d(X))
    probs = softmax(logits / float(getattr(temperature, "t", temperature)))
    if np.ndim(X) == 1:
        probs = probs[:, 0]
    return EnsembleOutput.from_members(probs)
