"""Numeric conventions shared by every loss in the package.

All functions are pure and operate on ``torch`` tensors (Python floats are
promoted to float64 tensors), so they are differentiable and safe to call
from any thread.
"""

from typing import overload

import torch

from .exceptions import ShapeMismatchError

EPS = 1e-7
"""Probabilities are clamped to [EPS, 1 - EPS] before any logarithm."""


def clamp_probability(p: torch.Tensor, eps: float = EPS) -> torch.Tensor:
    """Clamp probabilities into the open unit interval."""
    return p.clamp(min=eps, max=1.0 - eps)


@overload
def sigmoid(x: float) -> float: ...


@overload
def sigmoid(x: torch.Tensor) -> torch.Tensor: ...


def sigmoid(x: float | torch.Tensor) -> float | torch.Tensor:
    """Logistic function 1 / (1 + e^-x).

    Saturates instead of overflowing for large |x|; floats in give floats out.
    """
    if isinstance(x, torch.Tensor):
        return torch.sigmoid(x)
    return float(torch.sigmoid(torch.tensor(x, dtype=torch.float64)))


def binary_cross_entropy(p: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """Multi-label binary cross entropy summed over the class dimension.

    Computes ``-sum_c [y_c log p_c + (1 - y_c) log(1 - p_c)]`` over the last
    dimension. Soft targets in [0, 1] are accepted.

    Args:
        p: Predicted probabilities, shape (..., N)
        y: Targets, same shape as ``p``

    Returns:
        Loss per leading index, shape (...)

    Raises:
        ShapeMismatchError: If ``p`` and ``y`` differ in shape
    """
    if p.shape != y.shape:
        raise ShapeMismatchError("binary_cross_entropy", tuple(p.shape), tuple(y.shape))
    return elementwise_bce(p, y).sum(dim=-1)


def elementwise_bce(p: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """Per-element binary cross entropy with probability clamping."""
    p = clamp_probability(p)
    y = y.to(p.dtype)
    return -(y * torch.log(p) + (1.0 - y) * torch.log1p(-p))
