"""Uncertainty measures from ensembles and from Dirichlet concentrations."""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .models.ensemble import EnsembleOutput
from .models.priornet import DirichletParams
from .numerics import EPS, digamma, entropy


@dataclass(frozen=True)
class UncertaintyTriple:
    """Expected entropy, entropy of the expected distribution, and their gap (nats)."""

    expected_entropy: np.ndarray
    entropy_of_expected: np.ndarray
    knowledge_uncertainty: np.ndarray

    def take(self, idx):
        return UncertaintyTriple(
            np.asarray(self.expected_entropy)[idx],
            np.asarray(self.entropy_of_expected)[idx],
            np.asarray(self.knowledge_uncertainty)[idx],
        )


def _triple(ee, eoe):
    ku = eoe - ee
    if np.ndim(ku) == 0:
        return UncertaintyTriple(float(ee), float(eoe), float(ku))
    return UncertaintyTriple(ee, eoe, ku)


def ensemble_uncertainty(out, eps=EPS):
    """Uncertainty triple of an :class:`EnsembleOutput` (or raw ``(M, ..., K)`` member probabilities)."""
    if not isinstance(out, EnsembleOutput):
        out = EnsembleOutput.from_members(out)
    if out.n_members == 0:
        raise ValidationError("ensemble output has no members")
    member_h = np.asarray(entropy(out.member_probs, eps))
    ee = member_h.mean(axis=0)
    eoe = np.asarray(entropy(out.mean_probs, eps))
    # identical members: the mean is the member itself, so keep rounding out of KU
    same = np.all(out.member_probs == out.member_probs[0], axis=(0, -1))
    eoe = np.where(same, ee, eoe)
    return _triple(ee, eoe)


def dirichlet_probabilities(d):
    """Expected categorical distribution ``alpha_k / alpha_0``."""
    if not isinstance(d, DirichletParams):
        d = DirichletParams.from_alphas(d)
    return d.alphas / np.asarray(d.alpha0)[..., None]


def dirichlet_uncertainty(d, eps=EPS):
    """Uncertainty triple of a Dirichlet via its closed-form expected entropy."""
    if not isinstance(d, DirichletParams):
        d = DirichletParams.from_alphas(d)
    a = d.alphas
    a0 = np.asarray(d.alpha0)[..., None]
    p = a / a0
    ee = -np.sum(p * (np.asarray(digamma(a + 1.0)) - np.asarray(digamma(a0 + 1.0))), axis=-1)
    eoe = np.asarray(entropy(p, eps))
    return _triple(np.asarray(ee), eoe)
