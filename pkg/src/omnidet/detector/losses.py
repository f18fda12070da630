"""Supervised detection losses: sigmoid focal loss and smooth L1."""

import torch
import torch.nn.functional as F

from ..core import clamp_probability

SMOOTH_L1_BETA = 1.0 / 9.0


def focal_loss(
    q: torch.Tensor,
    targets: torch.Tensor,
    valid: torch.Tensor | None = None,
    alpha: float = 0.25,
    gamma: float = 2.0,
    normalizer: float | None = None,
) -> torch.Tensor:
    """Two-sided, alpha-balanced focal loss on probabilities.

    Positive entries contribute ``-alpha (1 - q)^gamma log q``, negative
    entries ``-(1 - alpha) q^gamma log(1 - q)``. The sum is divided by the
    number of positive entries (at least 1) unless ``normalizer`` is given.

    Args:
        q: Predicted probabilities, shape (..., N)
        targets: One-hot targets in {0, 1}, same shape as ``q``
        valid: Boolean mask of anchors that contribute, shape (...) or (..., N)
        alpha: Foreground weight
        gamma: Focusing exponent
        normalizer: Explicit divisor

    Returns:
        Scalar loss
    """
    q = clamp_probability(q)
    targets = targets.to(q.dtype)
    positive = -alpha * (1.0 - q) ** gamma * torch.log(q)
    negative = -(1.0 - alpha) * q**gamma * torch.log1p(-q)
    loss = targets * positive + (1.0 - targets) * negative
    if valid is not None:
        mask = valid.to(q.dtype)
        if mask.dim() == loss.dim() - 1:
            mask = mask.unsqueeze(-1)
        loss = loss * mask
        targets = targets * mask
    if normalizer is None:
        normalizer = max(1.0, float(targets.sum()))
    return loss.sum() / normalizer


def smooth_l1(
    pred: torch.Tensor, target: torch.Tensor, beta: float = SMOOTH_L1_BETA
) -> torch.Tensor:
    """Smooth L1 averaged over elements; 0 for empty input.

    Elementwise ``0.5 x^2 / beta`` if ``|x| < beta`` else ``|x| - beta / 2``.
    Callers pass only the rows of positive anchors.
    """
    if pred.numel() == 0:
        return pred.sum() * 0.0
    return F.smooth_l1_loss(pred, target.to(pred.dtype), beta=beta, reduction="mean")
