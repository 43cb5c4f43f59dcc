"""Carlini-Wagner style L2 attack used to synthesise out-of-distribution rows."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AttackResult:
    x_adv: np.ndarray
    success: bool
    delta_norm: float
    original_label: int
    target_label: int


def cw_objective(model, x, delta, target, c, kappa=0.0):
    """``||delta||_2 + c * max(z_other - z_target, -kappa)`` and its gradient in ``delta``.

    ``z_other`` is the largest logit among non-target classes.
    """
    xa = (x + delta)[None, :]
    z = model.logits(xa)[0]
    others = np.delete(np.arange(len(z)), target)
    other = others[np.argmax(z[others])]
    margin = z[other] - z[target]
    norm = float(np.linalg.norm(delta))
    value = norm + c * max(margin, -kappa)
    grad = delta / norm if norm > 0 else np.zeros_like(delta)
    if margin > -kappa:
        dz = np.zeros_like(z)
        dz[other], dz[target] = 1.0, -1.0
        grad = grad + c * model.input_gradient(xa, dz[None, :])[0]
    return value, grad


def cw_attack(model, x, c=1.0, steps=200, step_size=0.05, kappa=0.0):
    """Gradient-descent C&W attack toward the opposite of the current prediction.

    Returns the smallest-norm iterate that flips the prediction, or the
    last iterate with ``success=False`` if none did.
    """
    x = np.asarray(x, dtype=float)
    z0 = model.logits(x[None, :])[0]
    original = int(np.argmax(z0))
    target = 1 - original if len(z0) == 2 else int(np.argsort(z0)[-2])
    delta = np.zeros_like(x)
    best = None
    for _ in range(int(steps)):
        _, grad = cw_objective(model, x, delta, target, c, kappa)
        delta = delta - step_size * grad
        if int(np.argmax(model.logits((x + delta)[None, :])[0])) == target:
            norm = float(np.linalg.norm(delta))
            if best is None or norm < best[1]:
                best = (delta.copy(), norm)
    if best is None:
        return AttackResult(x + delta, False, float(np.linalg.norm(delta)), original, target)
    return AttackResult(x + best[0], True, best[1], original, target)


def cw_batch(model, X, **kwargs):
    """Attack every row of ``X``; returns the list of :class:`AttackResult`."""
    return [cw_attack(model, x, **kwargs) for x in np.asarray(X, dtype=float)]
