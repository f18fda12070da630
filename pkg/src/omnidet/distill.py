"""Mean-teacher distillation with the soft focal loss."""

import copy
import logging
from typing import Any

import torch
from torch import nn

from .core import clamp_probability, elementwise_bce
from .exceptions import ShapeMismatchError

logger = logging.getLogger(__name__)


def ema_update(teacher: torch.Tensor, student: torch.Tensor, decay: float) -> torch.Tensor:
    """Return ``decay * teacher + (1 - decay) * student``.

    Raises:
        ShapeMismatchError: If the tensors differ in shape
    """
    if teacher.shape != student.shape:
        raise ShapeMismatchError("ema_update", tuple(teacher.shape), tuple(student.shape))
    return decay * teacher + (1.0 - decay) * student.to(teacher.dtype)


def soft_focal_loss(
    q: torch.Tensor,
    q_teacher: torch.Tensor,
    alpha: float = 0.9,
    epsilon: float = 0.05,
    gamma: float = 2.0,
) -> torch.Tensor:
    """Distillation loss ``(q~ alpha + eps) |q~ - q|^gamma BCE(q, q~)``.

    Summed over every element and divided by the number of anchors, i.e. the
    element count over the trailing class dimension. The teacher side is
    detached.

    Args:
        q: Student probabilities, shape (..., N)
        q_teacher: Teacher probabilities, same shape
        alpha: Slope of the teacher-confidence weight
        epsilon: Floor of the teacher-confidence weight
        gamma: Disagreement exponent

    Returns:
        Scalar loss

    Raises:
        ShapeMismatchError: If the shapes differ
    """
    if q.shape != q_teacher.shape:
        raise ShapeMismatchError("soft_focal_loss", tuple(q.shape), tuple(q_teacher.shape))
    q = clamp_probability(q)
    target = clamp_probability(q_teacher.detach().to(q.dtype))
    weight = (target * alpha + epsilon) * (target - q).abs() ** gamma
    loss = weight * elementwise_bce(q, target)
    anchors = q.numel() // q.shape[-1] if q.dim() > 0 and q.shape[-1] > 0 else q.numel()
    return loss.sum() / max(1, anchors)


class MeanTeacher:
    """A gradient-free copy of a network tracking the student by EMA.

    Args:
        student: Network to mirror; copied at construction
        decay: EMA coefficient lambda in [0, 1)
    """

    def __init__(self, student: nn.Module, decay: float = 0.99) -> None:
        if not 0.0 <= decay <= 1.0:
            raise ValueError(f"decay must lie in [0, 1], got {decay}")
        self.decay = decay
        self.model = copy.deepcopy(student)
        for param in self.model.parameters():
            param.requires_grad_(False)

    @torch.no_grad()
    def update(self, student: nn.Module) -> None:
        """Move every teacher parameter one EMA step toward the student."""
        student_params = dict(student.named_parameters())
        for name, param in self.model.named_parameters():
            param.copy_(ema_update(param, student_params[name].detach(), self.decay))
        student_buffers = dict(student.named_buffers())
        for name, buffer in self.model.named_buffers():
            buffer.copy_(student_buffers[name])

    @torch.no_grad()
    def predict(self, images: torch.Tensor) -> Any:
        """Teacher forward pass; outputs carry no autograd history."""
        return self.model(images)

    def copy_from(self, student: nn.Module) -> None:
        """Reset the teacher to an exact copy of ``student``."""
        self.model.load_state_dict(student.state_dict())

    def state_dict(self) -> dict[str, Any]:
        return self.model.state_dict()

    def load_state_dict(self, state: dict[str, Any]) -> None:
        self.model.load_state_dict(state)


def teacher_predict(teacher: MeanTeacher, images: torch.Tensor) -> Any:
    """Run the teacher on a batch without building a graph."""
    return teacher.predict(images)
