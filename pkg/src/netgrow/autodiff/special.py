"""Log-gamma, digamma and trigamma for positive real arguments (vectorized)."""

from __future__ import annotations

import math

import numpy as np

# Lanczos approximation, g = 7, nine coefficients.
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
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

# Bernoulli numbers B_2 .. B_16 for the asymptotic series.
_BERNOULLI = (1 / 6, -1 / 30, 1 / 42, -1 / 30, 5 / 66, -691 / 2730, 7 / 6, -3617 / 510)
_ASYMPTOTIC_FROM = 10.0


def _positive(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if np.any(~(x > 0)):
        raise ValueError("special functions are defined here for positive arguments only")
    return x


def _lanczos(x: np.ndarray) -> np.ndarray:
    # valid for x >= 0.5
    z = x - 1.0
    acc = np.full_like(z, _LANCZOS_COEF[0])
    for i, c in enumerate(_LANCZOS_COEF[1:], start=1):
        acc = acc + c / (z + i)
    t = z + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (z + 0.5) * np.log(t) - t + np.log(acc)


def lgamma(x):
    """``log Γ(x)`` for ``x > 0``."""
    x = _positive(x)
    shape = x.shape
    x = x.reshape(-1)
    small = x < 0.5
    out = _lanczos(np.where(small, 1.0 - x, x))
    if np.any(small):
        # reflection: Γ(x)Γ(1-x) = π / sin(πx)
        xs = x[small]
        out[small] = np.log(np.pi / np.sin(np.pi * xs)) - out[small]
    return out.reshape(shape)


def digamma(x):
    """``ψ(x) = d/dx log Γ(x)`` by upward recurrence and the asymptotic series."""
    x = _positive(x)
    shift = np.zeros_like(x)
    x = x.copy()
    while True:
        low = x < _ASYMPTOTIC_FROM
        if not low.any():
            break
        shift = shift - np.where(low, 1.0 / x, 0.0)
        x = np.where(low, x + 1.0, x)
    inv2 = 1.0 / (x * x)
    series = np.zeros_like(x)
    power = inv2
    for k, b in enumerate(_BERNOULLI, start=1):
        series = series + b / (2 * k) * power
        power = power * inv2
    return shift + np.log(x) - 0.5 / x - series


def trigamma(x):
    """``ψ'(x)``, needed as the derivative rule of :func:`digamma`."""
    x = _positive(x)
    shift = np.zeros_like(x)
    x = x.copy()
    while True:
        low = x < _ASYMPTOTIC_FROM
        if not low.any():
            break
        shift = shift + np.where(low, 1.0 / (x * x), 0.0)
        x = np.where(low, x + 1.0, x)
    inv = 1.0 / x
    inv2 = inv * inv
    series = np.zeros_like(x)
    power = inv2 * inv
    for b in _BERNOULLI:
        series = series + b * power
        power = power * inv2
    return shift + inv + 0.5 * inv2 + series


def betaln(a, b):
    return lgamma(a) + lgamma(b) - lgamma(np.asarray(a) + np.asarray(b))


def beta_entropy(a, b):
    """Differential entropy of ``Beta(a, b)`` in nats."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return (
        betaln(a, b)
        - (a - 1.0) * digamma(a)
        - (b - 1.0) * digamma(b)
        + (a + b - 2.0) * digamma(a + b)
    )
