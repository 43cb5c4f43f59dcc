"""Reference classifiers: MLP, deep ensemble, prior network and boosted stumps."""

import json

from .cw import AttackResult, cw_attack, cw_batch, cw_objective
from .ensemble import EnsembleModel, EnsembleOutput, ensemble_predict, train_ensemble
from .fusion import fuse
from .mlp import LinearModel, MlpConfig, MlpModel, predict_proba, train_mlp
from .priornet import (
    DirichletParams,
    PriorNetConfig,
    PriorNetModel,
    dirichlet_reverse_kl,
    priornet_alphas,
    train_priornet,
)
from .stumps import StumpEnsembleModel, score_to_probability_pair, train_stumps

MODEL_FORMAT = "shiftguard-model"
MODEL_VERSION = 1

_KINDS = {
    "mlp": MlpModel,
    "ensemble": EnsembleModel,
    "priornet": PriorNetModel,
    "stumps": StumpEnsembleModel,
}


def model_to_document(model, extra=None):
    """Versioned JSON-ready document for a trained model."""
    doc = {"format": MODEL_FORMAT, "version": MODEL_VERSION, "model": model.to_dict()}
    if extra:
        doc.update(extra)
    return doc


def model_from_document(doc):
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError("not a model document")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model document version {doc.get('version')!r}")
    body = doc["model"]
    return _KINDS[body["kind"]].from_dict(body)


def save_model(model, path, extra=None):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_document(model, extra), fh, sort_keys=True)


def load_model(path):
    """Load a model saved by :func:`save_model`; returns ``(model, document)``."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return model_from_document(doc), doc


__all__ = [
    "AttackResult", "DirichletParams", "EnsembleModel", "EnsembleOutput", "LinearModel",
    "MlpConfig", "MlpModel", "PriorNetConfig", "PriorNetModel", "StumpEnsembleModel",
    "cw_attack", "cw_batch", "cw_objective", "dirichlet_reverse_kl", "ensemble_predict",
    "fuse", "load_model", "model_from_document", "model_to_document", "predict_proba",
    "priornet_alphas", "save_model", "score_to_probability_pair", "train_ensemble",
    "train_mlp", "train_priornet", "train_stumps",
]
