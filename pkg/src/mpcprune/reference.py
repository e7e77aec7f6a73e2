"""Float-precision reference implementations of the polynomial
approximations.  These are the oracles the shared protocols are tested
against and the math used by the exact-float pipeline mode."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# degree-3 / degree-6 pieces of the high-degree GELU approximation
P3_COEFFS = (-0.50540312, -0.42226581, -0.11807613, -0.01103413)
# constant, x, x^2, x^4, x^6 (odd terms above x are absent)
P6_COEFFS = (0.00852632, 0.5, 0.36032927, -0.03768820, 0.00180675)
# degree-2 low-degree GELU and its breakpoint
GELU_LOW_COEFFS = (0.5, 0.28367)
GELU_LOW_BREAK = 1.7626


@dataclass(frozen=True)
class PolyConfig:
    """Polynomial approximation settings shared by both inference paths."""

    exp_high_n: int = 6
    exp_low_n: int = 3
    exp_clip_t: float = -13.0
    gelu_high_breaks: tuple = (-5.0, -1.97, 3.0)
    gelu_low_break: float = GELU_LOW_BREAK

    def as_dict(self) -> dict:
        return {
            "exp_high_n": self.exp_high_n,
            "exp_low_n": self.exp_low_n,
            "exp_clip_t": self.exp_clip_t,
            "gelu_high_breaks": list(self.gelu_high_breaks),
            "gelu_low_break": self.gelu_low_break,
        }

    @staticmethod
    def from_dict(d: dict) -> "PolyConfig":
        return PolyConfig(
            exp_high_n=d["exp_high_n"],
            exp_low_n=d["exp_low_n"],
            exp_clip_t=d["exp_clip_t"],
            gelu_high_breaks=tuple(d["gelu_high_breaks"]),
            gelu_low_break=d["gelu_low_break"],
        )


def approx_exp(x, n: int, t: float):
    """Clipped iterated-squaring exponential: (1 + x/2^n)^(2^n), 0 below t."""
    x = np.asarray(x, dtype=np.float64)
    base = 1.0 + np.maximum(x, t) / (1 << n)
    y = base
    for _ in range(n):
        y = y * y
    return np.where(x > t, y, 0.0)


def approx_softmax(row, n: int, t: float):
    """Row softmax on max-normalised inputs with the approximate exponential."""
    row = np.asarray(row, dtype=np.float64)
    e = approx_exp(row - row.max(axis=-1, keepdims=True), n, t)
    return e / e.sum(axis=-1, keepdims=True)


def p3(x):
    c0, c1, c2, c3 = P3_COEFFS
    return c0 + c1 * x + c2 * x * x + c3 * x * x * x


def p6(x):
    c0, c1, c2, c4, c6 = P6_COEFFS
    x2 = x * x
    return c0 + c1 * x + c2 * x2 + c4 * x2 * x2 + c6 * x2 * x2 * x2


def gelu_high(x):
    """Piecewise high-degree GELU approximation."""
    x = np.asarray(x, dtype=np.float64)
    lo, mid, hi = (-5.0, -1.97, 3.0)
    return np.select(
        [x <= lo, x <= mid, x <= hi],
        [np.zeros_like(x), p3(x), p6(x)],
        default=x,
    )


def gelu_low(x):
    """Degree-2 GELU used for reduced tokens."""
    x = np.asarray(x, dtype=np.float64)
    a, b = GELU_LOW_COEFFS
    poly = a * x + b * x * x
    return np.select(
        [x < -GELU_LOW_BREAK, x <= GELU_LOW_BREAK],
        [np.zeros_like(x), poly],
        default=x,
    )


def gelu_exact(x):
    from math import sqrt, pi
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * x * (1.0 + np.tanh(sqrt(2.0 / pi) * (x + 0.044715 * x ** 3)))


def layernorm(x, gamma, beta, eps: float):
    x = np.asarray(x, dtype=np.float64)
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return gamma * (x - mu) / np.sqrt(var + eps) + beta
