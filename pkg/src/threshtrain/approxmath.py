"""Activation approximations in torch (training) and numpy (evaluation).

The numpy half mirrors the inference engine's float semantics so the
binarized-mask forward pass here predicts what the engine will compute
on an exported model.  The constants are part of the engine's public
model contract (they appear in the manifest's polynomial configuration).
"""

from __future__ import annotations

import math

import numpy as np
import torch

EXP_HIGH_N = 6
EXP_LOW_N = 3
EXP_CLIP_T = -13.0
GELU_HIGH_BREAKS = (-5.0, -1.97, 3.0)
GELU_LOW_BREAK = 1.7626

_P3 = (-0.50540312, -0.42226581, -0.11807613, -0.01103413)
_P6 = (0.00852632, 0.5, 0.36032927, -0.03768820, 0.00180675)
_LOW = (0.5, 0.28367)


def poly_dict() -> dict:
    return {
        "exp_high_n": EXP_HIGH_N,
        "exp_low_n": EXP_LOW_N,
        "exp_clip_t": EXP_CLIP_T,
        "gelu_high_breaks": list(GELU_HIGH_BREAKS),
        "gelu_low_break": GELU_LOW_BREAK,
    }


def positional_encoding(n: int, d: int) -> np.ndarray:
    """Half-amplitude sinusoidal table, matching the engine's."""
    pos = np.arange(n)[:, None].astype(np.float64)
    i = np.arange(d)[None, :].astype(np.float64)
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d)
    return 0.5 * np.where(np.arange(d)[None, :] % 2 == 0,
                          np.sin(angle), np.cos(angle))


# ---------------------------------------------------------------------------
# numpy: the engine's float-mode math

def np_approx_exp(x, n: int, t: float = EXP_CLIP_T):
    x = np.asarray(x, dtype=np.float64)
    y = 1.0 + np.maximum(x, t) / (1 << n)
    for _ in range(n):
        y = y * y
    return np.where(x > t, y, 0.0)


def np_approx_softmax(row, n: int, t: float = EXP_CLIP_T):
    row = np.asarray(row, dtype=np.float64)
    e = np_approx_exp(row - row.max(axis=-1, keepdims=True), n, t)
    return e / e.sum(axis=-1, keepdims=True)


def np_gelu_high(x):
    x = np.asarray(x, dtype=np.float64)
    lo, mid, hi = GELU_HIGH_BREAKS
    c0, c1, c2, c3 = _P3
    p3 = c0 + c1 * x + c2 * x * x + c3 * x ** 3
    d0, d1, d2, d4, d6 = _P6
    x2 = x * x
    p6 = d0 + d1 * x + d2 * x2 + d4 * x2 * x2 + d6 * x2 ** 3
    return np.select([x <= lo, x <= mid, x <= hi],
                     [np.zeros_like(x), p3, p6], default=x)


def np_gelu_low(x):
    x = np.asarray(x, dtype=np.float64)
    a, b = _LOW
    poly = a * x + b * x * x
    return np.select([x < -GELU_LOW_BREAK, x <= GELU_LOW_BREAK],
                     [np.zeros_like(x), poly], default=x)


def np_layernorm(x, gamma, beta, eps: float):
    x = np.asarray(x, dtype=np.float64)
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return gamma * (x - mu) / np.sqrt(var + eps) + beta


# ---------------------------------------------------------------------------
# torch: differentiable variants for training

def t_gelu_exact(x: torch.Tensor) -> torch.Tensor:
    return 0.5 * x * (1.0 + torch.tanh(
        math.sqrt(2.0 / math.pi) * (x + 0.044715 * x ** 3)))


def t_gelu_approx(x: torch.Tensor) -> torch.Tensor:
    """Low-degree polynomial GELU (the reduced-token activation)."""
    a, b = _LOW
    poly = a * x + b * x * x
    return torch.where(x < -GELU_LOW_BREAK, torch.zeros_like(x),
                       torch.where(x <= GELU_LOW_BREAK, poly, x))


def t_approx_exp(x: torch.Tensor, n: int, t: float = EXP_CLIP_T) -> torch.Tensor:
    y = 1.0 + torch.clamp(x, min=t) / (1 << n)
    for _ in range(n):
        y = y * y
    return torch.where(x > t, y, torch.zeros_like(y))


def t_softmax_exact(scores: torch.Tensor) -> torch.Tensor:
    return torch.softmax(scores, dim=-1)


def t_softmax_approx(scores: torch.Tensor, n: int = EXP_LOW_N) -> torch.Tensor:
    e = t_approx_exp(scores - scores.max(dim=-1, keepdim=True).values, n)
    return e / e.sum(dim=-1, keepdim=True)


def t_layernorm(x: torch.Tensor, gamma: torch.Tensor, beta: torch.Tensor,
                eps: float) -> torch.Tensor:
    mu = x.mean(dim=-1, keepdim=True)
    var = ((x - mu) ** 2).mean(dim=-1, keepdim=True)
    return gamma * (x - mu) / torch.sqrt(var + eps) + beta
