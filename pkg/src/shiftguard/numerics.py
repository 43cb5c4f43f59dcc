"""Special functions and entropy primitives.

All functions accept scalars or numpy arrays and broadcast elementwise.
Scalars in, Python floats out.
"""

import numpy as np

from .errors import DomainError, ValidationError

#: Default guard added inside logarithms of probabilities.
EPS = 1e-12

_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)

# Asymptotic-series cutoff; below it the recurrences shift the argument up.
_ASYMPTOTIC_MIN = 6.0


def check_eps(eps):
    """Return ``eps`` as a float after checking ``0 < eps < 1e-6``."""
    eps = float(eps)
    if not 0.0 < eps < 1e-6:
        raise ValidationError(f"epsilon must lie in (0, 1e-6), got {eps!r}")
    return eps


def _positive(x, name):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError(f"{name} requires finite positive arguments")
    return arr


def _out(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


def _lanczos(x):
    # valid for x >= 0.5
    z = x - 1.0
    acc = np.full_like(z, _LANCZOS_COEF[0])
    for i, c in enumerate(_LANCZOS_COEF[1:], start=1):
        acc = acc + c / (z + i)
    t = z + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (z + 0.5) * np.log(t) - t + np.log(acc)


def log_gamma(x):
    """Natural log of the gamma function for positive real ``x``.

    Lanczos approximation (g=7, 9 terms) for ``x >= 0.5`` and the
    reflection formula below that.
    """
    arr = _positive(x, "log_gamma")
    out = np.empty_like(arr)
    big = arr >= 0.5
    out[big] = _lanczos(arr[big])
    small = arr[~big]
    # Gamma(x) Gamma(1-x) = pi / sin(pi x), sin(pi x) > 0 on (0, 0.5)
    out[~big] = np.log(np.pi) - np.log(np.sin(np.pi * small)) - _lanczos(1.0 - small)
    return _out(out, x)


def digamma(x):
    """Digamma function psi(x) = d/dx ln Gamma(x) for positive real ``x``.

    Shifts the argument up with psi(x) = psi(x + 1) - 1/x until it reaches
    the asymptotic region, then sums the Bernoulli-number series.
    """
    arr = _positive(x, "digamma").copy()
    acc = np.zeros_like(arr)
    low = arr < _ASYMPTOTIC_MIN
    while np.any(low):
        acc[low] -= 1.0 / arr[low]
        arr[low] += 1.0
        low = arr < _ASYMPTOTIC_MIN
    inv = 1.0 / arr
    inv2 = inv * inv
    series = inv2 * (
        1.0 / 12
        - inv2 * (1.0 / 120
        - inv2 * (1.0 / 252
        - inv2 * (1.0 / 240
        - inv2 * (1.0 / 132
        - inv2 * (691.0 / 32760
        - inv2 * (1.0 / 12)))))))
    out = acc + np.log(arr) - 0.5 * inv - series
    return _out(out, x)


def trigamma(x):
    """Trigamma function psi'(x) for positive real ``x``."""
    arr = _positive(x, "trigamma").copy()
    acc = np.zeros_like(arr)
    low = arr < _ASYMPTOTIC_MIN
    while np.any(low):
        acc[low] += 1.0 / (arr[low] * arr[low])
        arr[low] += 1.0
        low = arr < _ASYMPTOTIC_MIN
    inv = 1.0 / arr
    inv2 = inv * inv
    series = inv * (
        1.0
        + inv * (0.5
        + inv * (1.0 / 6
        - inv2 * (1.0 / 30
        - inv2 * (1.0 / 42
        - inv2 * (1.0 / 30
        - inv2 * (5.0 / 66
        - inv2 * (691.0 / 2730
        - inv2 * (7.0 / 6)))))))))
    return _out(acc + series, x)


def check_distribution(p, atol=1e-9):
    """Validate that the last axis of ``p`` holds probability vectors."""
    arr = np.asarray(p, dtype=float)
    if arr.ndim == 0 or arr.shape[-1] < 2:
        raise ValidationError("probability vectors need at least two classes")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValidationError("probabilities must be finite and nonnegative")
    if np.any(np.abs(arr.sum(axis=-1) - 1.0) > atol):
        raise ValidationError(f"probabilities must sum to 1 within {atol:g}")
    return arr


def entropy(p, eps=EPS):
    """Shannon entropy in nats, ``-sum_j p_j log(p_j + eps)``, over the last axis.

    Values pushed slightly below zero by ``eps`` are clamped to 0.
    """
    eps = check_eps(eps)
    arr = check_distribution(p)
    h = -np.sum(arr * np.log(arr + eps), axis=-1)
    h = np.maximum(h, 0.0)
    return float(h) if h.ndim == 0 else h


def softmax(z, axis=-1):
    """Numerically stable softmax along ``axis``."""
    z = np.asarray(z, dtype=float)
    shifted = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(z, axis=-1):
    z = np.asarray(z, dtype=float)
    shifted = z - np.max(z, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def softplus(z):
    return np.logaddexp(0.0, z)


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out
