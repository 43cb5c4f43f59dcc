"""Dirichlet prior network trained with reverse-KL targets."""

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ValidationError
from ..numerics import digamma, log_gamma, sigmoid, softplus, trigamma
from .mlp import check_training_data
from .network import Adam, Network, minibatches, params_from_json, params_to_json

#: Floor added after softplus so no concentration is ever exactly zero.
ALPHA_FLOOR = 1e-6


@dataclass(frozen=True)
class DirichletParams:
    """Concentrations ``alphas`` (last axis = classes) and their sum ``alpha0``."""

    alphas: np.ndarray
    alpha0: np.ndarray

    @classmethod
    def from_alphas(cls, alphas):
        alphas = np.asarray(alphas, dtype=float)
        if alphas.ndim == 0 or alphas.shape[-1] < 2:
            raise ValidationError("need at least two concentration parameters")
        if not np.all(np.isfinite(alphas)) or np.any(alphas <= 0):
            raise ValidationError("concentration parameters must be strictly positive")
        a0 = alphas.sum(axis=-1)
        return cls(alphas, float(a0) if a0.ndim == 0 else a0)


def _alphas(d):
    a = d.alphas if isinstance(d, DirichletParams) else np.asarray(d, dtype=float)
    if not np.all(np.isfinite(a)) or np.any(a <= 0):
        raise ValidationError("concentration parameters must be strictly positive")
    return a


def dirichlet_reverse_kl(pred, target):
    """KL(Dir(pred) || Dir(target)) in closed form, over the last axis."""
    a, b = np.broadcast_arrays(_alphas(pred), _alphas(target))
    a0, b0 = a.sum(axis=-1), b.sum(axis=-1)
    kl = (
        log_gamma(a0) - np.sum(log_gamma(a), axis=-1)
        - log_gamma(b0) + np.sum(log_gamma(b), axis=-1)
        + np.sum((a - b) * (digamma(a) - np.asarray(digamma(a0))[..., None]), axis=-1)
    )
    return float(kl) if np.ndim(kl) == 0 else kl


def dirichlet_kl_grad(pred, target):
    """Gradient of :func:`dirichlet_reverse_kl` with respect to ``pred``."""
    a, b = np.broadcast_arrays(_alphas(pred), _alphas(target))
    a0, b0 = a.sum(axis=-1), b.sum(axis=-1)
    return (a - b) * trigamma(a) - np.asarray((a0 - b0) * trigamma(a0))[..., None]


@dataclass(frozen=True)
class PriorNetConfig:
    layer_sizes: tuple = (64, 32)
    alpha_in_target: float = 100.0
    alpha_out_target: float = 1.0
    lambda_weight: float = 1.0
    learning_rate: float = 0.01
    epochs: int = 200
    seed: int = 0
    batch_size: int | None = 32
    use_skip_connections: bool = False
    dropout_rate: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        if not self.alpha_in_target > self.alpha_out_target > 0:
            raise ValidationError("need alpha_in_target > alpha_out_target > 0")
        if self.lambda_weight < 0:
            raise ValidationError("lambda_weight must be nonnegative")
        if not self.layer_sizes or min(self.layer_sizes) <= 0:
            raise ValidationError("layer_sizes needs at least one positive width")


def in_domain_targets(y, config, n_classes=2):
    """Per-example target concentrations: ``alpha_in`` on the true class, ``alpha_out`` elsewhere."""
    t = np.full((len(y), n_classes), config.alpha_out_target)
    t[np.arange(len(y)), y] = config.alpha_in_target
    return t


@dataclass
class PriorNetModel:
    network: Network
    params: dict
    config: PriorNetConfig

    @property
    def input_dim(self):
        return self.network.input_dim

    def logits(self, X):
        z, _ = self.network.forward(self.params, np.atleast_2d(X))
        return z

    def alphas(self, X):
        return priornet_alphas(self, X)

    def to_dict(self):
        return {
            "kind": "priornet",
            "network": self.network.to_dict(),
            "config": asdict(self.config),
            "params": params_to_json(self.params),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(Network.from_dict(d["network"]), params_from_json(d["params"]), PriorNetConfig(**d["config"]))


def priornet_alphas(model, X):
    """Dirichlet parameters predicted for one vector or a batch of rows."""
    z = model.logits(X)
    alphas = softplus(z) + ALPHA_FLOOR
    if np.ndim(X) == 1:
        alphas = alphas[0]
    return DirichletParams.from_alphas(alphas)


def priornet_loss(params, network, X_in, targets_in, X_out, alpha_out, lam, rng=None):
    """Mean in-domain reverse KL plus ``lam`` times mean OOD reverse KL.

    Returns ``(loss, grads, (loss_in, loss_out))``.
    """
    grads = None
    total = 0.0
    parts = []
    batches = [(X_in, targets_in, 1.0)]
    if lam > 0 and X_out is not None and len(X_out):
        batches.append((X_out, np.full((len(X_out), network.output_dim), alpha_out), lam))
    for X, target, weight in batches:
        z, cache = network.forward(params, X, rng)
        a = softplus(z) + ALPHA_FLOOR
        kl = dirichlet_reverse_kl(a, target)
        part = float(np.mean(kl))
        parts.append(part)
        total += weight * part
        dz = dirichlet_kl_grad(a, target) * sigmoid(z) * (weight / len(X))
        g, _ = network.backward(params, cache, dz)
        grads = g if grads is None else {k: grads[k] + g[k] for k in grads}
    if len(parts) == 1:
        parts.append(0.0)
    return total, grads, tuple(parts)


def train_priornet(X_in, y_in, X_ood=None, config=None, history=None):
    """Fit a prior network on in-domain rows and out-of-distribution rows.

    With ``lambda_weight == 0`` the OOD rows are ignored and may be omitted.
    """
    config = config or PriorNetConfig()
    X_in, y_in = check_training_data(X_in, y_in)
    if config.lambda_weight > 0:
        if X_ood is None or len(X_ood) == 0:
            raise ValidationError("out-of-distribution data is required when lambda_weight > 0")
        X_ood = np.asarray(X_ood, dtype=float)
        if X_ood.ndim != 2 or X_ood.shape[1] != X_in.shape[1]:
            raise ValidationError("OOD rows must match the in-domain feature dimension")
    else:
        X_ood = None
    net = Network(X_in.shape[1], config.layer_sizes, 2, config.use_skip_connections, config.dropout_rate)
    params = net.init_params(np.random.default_rng(config.seed))
    noise_rng = np.random.default_rng([config.seed, 1])
    opt = Adam(params, lr=config.learning_rate)
    targets = in_domain_targets(y_in, config)
    for _ in range(config.epochs):
        for idx in minibatches(len(y_in), config.batch_size, noise_rng):
            loss, grads, parts = priornet_loss(
                params, net, X_in[idx], targets[idx], X_ood,
                config.alpha_out_target, config.lambda_weight, noise_rng,
            )
            opt.step(params, grads)
        if history is not None:
            history.append(parts)
    return PriorNetModel(net, params, config)
