"""Differentiable threshold masks and the training loss."""

from __future__ import annotations

import torch

from .approxmath import t_gelu_approx, t_gelu_exact


def soft_masks(scores: torch.Tensor, theta: torch.Tensor, beta: torch.Tensor,
               temperature: float) -> tuple[torch.Tensor, torch.Tensor]:
    """Sigmoid relaxations of the keep decision [S > theta] and the
    full-degree decision [S > beta]."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    m_theta = torch.sigmoid((scores - theta) / temperature)
    m_beta = torch.sigmoid((scores - beta) / temperature)
    return m_theta, m_beta


def mixed_activations(x: torch.Tensor, m_beta: torch.Tensor) -> torch.Tensor:
    """Per-token convex blend of the exact and reduced activation.

    ``m_beta`` broadcasts over the feature dimension: 1 selects the exact
    activation, 0 the low-degree polynomial.
    """
    m = m_beta.unsqueeze(-1)
    return m * t_gelu_exact(x) + (1.0 - m) * t_gelu_approx(x)


def total_loss(task_loss: torch.Tensor,
               masks: list[tuple[torch.Tensor, torch.Tensor]],
               lam: float, alpha: float) -> torch.Tensor:
    """task + lam * (mean-per-layer |M_theta|_1 + alpha * |M_beta|_1).

    Norms are averaged over batch and tokens so the regularizer weight
    is independent of sequence length.
    """
    if lam < 0 or alpha < 0:
        raise ValueError("lam and alpha must be non-negative")
    if not masks:
        return task_loss
    l_prune = sum(mt.abs().mean() for mt, _ in masks) / len(masks)
    l_approx = sum(mb.abs().mean() for _, mb in masks) / len(masks)
    return task_loss + lam * (l_prune + alpha * l_approx)
