"""Fully connected ReLU network with manual backpropagation.

Shared by the softmax classifier and the Dirichlet prior network; the two
differ only in the loss applied to the output layer.
"""

import numpy as np


class Network:
    """Feed-forward ReLU network with an unnormalised output layer.

    With ``skip=True`` every even-numbered hidden layer ``k`` receives the
    activation of layer ``k - 2`` added to its own output, so each skip
    bypasses one layer. When widths differ the skip goes through a learned
    linear projection; otherwise it is the identity.

    Parameters
    ----------
    input_dim : int
    hidden : sequence of int
        Hidden layer widths, at least one.
    output_dim : int
    skip : bool
    dropout : float
        Inverted-dropout rate applied to hidden activations in training.
    """

    def __init__(self, input_dim, hidden, output_dim=2, skip=False, dropout=0.0):
        hidden = [int(h) for h in hidden]
        if not hidden or any(h <= 0 for h in hidden):
            raise ValueError("need at least one hidden layer of positive width")
        if not 0.0 <= dropout < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")
        self.input_dim = int(input_dim)
        self.hidden = hidden
        self.output_dim = int(output_dim)
        self.skip = bool(skip)
        self.dropout = float(dropout)
        self.widths = [self.input_dim] + hidden + [self.output_dim]

    @property
    def n_hidden(self):
        return len(self.hidden)

    def _skip_shape(self, k):
        """Shape of the projection feeding layer ``k``; None for identity."""
        src, dst = self.widths[k - 2], self.widths[k]
        return None if src == dst else (src, dst)

    def _has_skip(self, k):
        return self.skip and k >= 2 and k % 2 == 0 and k <= self.n_hidden

    def init_params(self, rng):
        params = {}
        for k in range(1, len(self.widths)):
            fan_in = self.widths[k - 1]
            params[f"W{k}"] = rng.normal(0.0, np.sqrt(2.0 / fan_in), (fan_in, self.widths[k]))
            params[f"b{k}"] = np.zeros(self.widths[k])
        for k in range(2, self.n_hidden + 1):
            if self._has_skip(k) and self._skip_shape(k) is not None:
                src, dst = self._skip_shape(k)
                params[f"P{k}"] = rng.normal(0.0, np.sqrt(1.0 / src), (src, dst))
        return params

    def forward(self, params, X, rng=None):
        """Return output logits and the cache needed by :meth:`backward`.

        Dropout is active only when ``rng`` is given.
        """
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise ValueError(
                f"expected inputs of shape (n, {self.input_dim}), got {X.shape}"
            )
        hs, zs, masks = [X], [None], [None]
        for k in range(1, self.n_hidden + 1):
            z = hs[k - 1] @ params[f"W{k}"] + params[f"b{k}"]
            a = np.maximum(z, 0.0)
            mask = None
            if rng is not None and self.dropout > 0.0:
                keep = 1.0 - self.dropout
                mask = (rng.random(a.shape) < keep) / keep
                a = a * mask
            if self._has_skip(k):
                proj = params.get(f"P{k}")
                a = a + (hs[k - 2] if proj is None else hs[k - 2] @ proj)
            hs.append(a)
            zs.append(z)
            masks.append(mask)
        out = self.n_hidden + 1
        logits = hs[-1] @ params[f"W{out}"] + params[f"b{out}"]
        return logits, (hs, zs, masks)

    def backward(self, params, cache, dlogits):
        """Backpropagate ``dlogits``; returns (parameter grads, input grad)."""
        hs, zs, masks = cache
        L = self.n_hidden
        grads = {}
        dh = [np.zeros_like(h) for h in hs]
        grads[f"W{L + 1}"] = hs[L].T @ dlogits
        grads[f"b{L + 1}"] = dlogits.sum(axis=0)
        dh[L] += dlogits @ params[f"W{L + 1}"].T
        for k in range(L, 0, -1):
            g = dh[k]
            if self._has_skip(k):
                proj = params.get(f"P{k}")
                if proj is None:
                    dh[k - 2] += g
                else:
                    grads[f"P{k}"] = hs[k - 2].T @ g
                    dh[k - 2] += g @ proj.T
            if masks[k] is not None:
                g = g * masks[k]
            dz = g * (zs[k] > 0)
            grads[f"W{k}"] = hs[k - 1].T @ dz
            grads[f"b{k}"] = dz.sum(axis=0)
            dh[k - 1] += dz @ params[f"W{k}"].T
        return grads, dh[0]

    def to_dict(self):
        return {
            "input_dim": self.input_dim,
            "hidden": list(self.hidden),
            "output_dim": self.output_dim,
            "skip": self.skip,
            "dropout": self.dropout,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["input_dim"], d["hidden"], d["output_dim"], d["skip"], d["dropout"])


class Adam:
    """Adam optimiser over a dict of parameter arrays (updated in place)."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def params_to_json(params):
    return {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in sorted(params.items())}


def params_from_json(d):
    return {k: np.asarray(v["data"], dtype=float).reshape(v["shape"]) for k, v in d.items()}


def minibatches(n, batch_size, rng):
    """Yield index arrays; one full batch when ``batch_size`` is None."""
    if batch_size is None or batch_size >= n:
        yield np.arange(n)
        return
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]
