"""Softmax MLP classifier (the single-network baseline)."""

from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ValidationError
from ..numerics import log_softmax, softmax
from .network import Adam, Network, minibatches, params_from_json, params_to_json


@dataclass(frozen=True)
class MlpConfig:
    layer_sizes: tuple = (64, 64, 32)
    dropout_rate: float = 0.2
    use_skip_connections: bool = True
    learning_rate: float = 0.01
    epochs: int = 200
    seed: int = 0
    batch_size: int | None = None
    weight_decay: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        if not self.layer_sizes or min(self.layer_sizes) <= 0:
            raise ValidationError("layer_sizes needs at least one positive width")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValidationError("dropout_rate must lie in [0, 1)")
        if self.learning_rate <= 0 or self.epochs <= 0:
            raise ValidationError("learning_rate and epochs must be positive")
        if self.seed < 0:
            raise ValidationError("seed must be unsigned")

    def with_seed(self, seed):
        d = asdict(self)
        d["seed"] = int(seed)
        return MlpConfig(**d)


def check_training_data(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValidationError("training split is empty")
    if y.shape != (X.shape[0],):
        raise ValidationError("labels must be a vector aligned with the feature rows")
    if not np.all(np.isfinite(X)):
        raise ValidationError("features contain non-finite values")
    if not np.all(np.isin(y, (0, 1))):
        raise ValidationError("labels must be binary (0/1)")
    return X, y.astype(int)


@dataclass
class MlpModel:
    network: Network
    params: dict
    config: MlpConfig = field(default_factory=MlpConfig)

    @property
    def input_dim(self):
        return self.network.input_dim

    def logits(self, X):
        z, _ = self.network.forward(self.params, np.atleast_2d(X))
        return z

    def input_gradient(self, X, dlogits):
        """Vector-Jacobian product of the logits with respect to the inputs."""
        _, cache = self.network.forward(self.params, np.atleast_2d(X))
        _, dX = self.network.backward(self.params, cache, np.atleast_2d(dlogits))
        return dX

    def predict_proba(self, X):
        return predict_proba(self, X)

    def to_dict(self):
        return {
            "kind": "mlp",
            "network": self.network.to_dict(),
            "config": asdict(self.config),
            "params": params_to_json(self.params),
        }

    @classmethod
    def from_dict(cls, d):
        cfg = dict(d["config"])
        return cls(Network.from_dict(d["network"]), params_from_json(d["params"]), MlpConfig(**cfg))


def predict_proba(model, X):
    """Return ``(logits, probs)`` for a single vector or a batch of rows."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    z = model.logits(X)
    p = softmax(z)
    if single:
        return z[0], p[0]
    return z, p


def cross_entropy(params, network, X, y, rng=None, weight_decay=0.0):
    """Mean cross-entropy loss and its parameter gradients."""
    z, cache = network.forward(params, X, rng)
    n = X.shape[0]
    logp = log_softmax(z)
    loss = -np.mean(logp[np.arange(n), y])
    dz = softmax(z)
    dz[np.arange(n), y] -= 1.0
    grads, _ = network.backward(params, cache, dz / n)
    if weight_decay:
        for k, v in params.items():
            if k.startswith("W"):
                loss += 0.5 * weight_decay * np.sum(v * v)
                grads[k] = grads[k] + weight_decay * v
    return loss, grads


def train_mlp(X, y, config=None, history=None):
    """Train a softmax MLP with Adam; deterministic given ``config.seed``.

    If ``history`` is a list, the dropout-free training loss is appended
    once before training and after every epoch.
    """
    config = config or MlpConfig()
    X, y = check_training_data(X, y)
    net = Network(X.shape[1], config.layer_sizes, 2, config.use_skip_connections, config.dropout_rate)
    init_rng = np.random.default_rng(config.seed)
    noise_rng = np.random.default_rng([config.seed, 1])
    params = net.init_params(init_rng)
    opt = Adam(params, lr=config.learning_rate)
    if history is not None:
        history.append(cross_entropy(params, net, X, y)[0])
    for _ in range(config.epochs):
        for idx in minibatches(len(y), config.batch_size, noise_rng):
            _, grads = cross_entropy(params, net, X[idx], y[idx], noise_rng, config.weight_decay)
            opt.step(params, grads)
        if history is not None:
            history.append(cross_entropy(params, net, X, y)[0])
    return MlpModel(net, params, config)


class LinearModel:
    """Two-class linear scorer ``logits = x @ W + b``.

    A minimal model exposing the same ``logits`` / ``input_gradient``
    interface as :class:`MlpModel`; handy as an attack target.
    """

    def __init__(self, W, b=None):
        self.W = np.asarray(W, dtype=float)
        self.b = np.zeros(self.W.shape[1]) if b is None else np.asarray(b, dtype=float)

    @property
    def input_dim(self):
        return self.W.shape[0]

    def logits(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.input_dim:
            raise ValueError("dimension mismatch")
        return X @ self.W + self.b

    def input_gradient(self, X, dlogits):
        return np.atleast_2d(dlogits) @ self.W.T

    def predict_proba(self, X):
        return predict_proba(self, X)
