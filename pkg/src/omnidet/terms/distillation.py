"""Mean-teacher distillation on samples without boxes."""

from typing import ClassVar

from ..detector.network import flatten_levels
from ..distill import soft_focal_loss
from ..exceptions import OmniDetectionError
from ..models import Granularity
from .base import LossTerm, StepContext, TermOutput


class DistillationTerm(LossTerm):
    """Soft focal loss between student and teacher anchor probabilities.

    Every anchor, class and level of WEAK and UNLABELED samples takes part;
    box regression is not distilled.
    """

    name: ClassVar[str] = "distillation"
    components: ClassVar[tuple[str, ...]] = ("sfl",)
    granularities: ClassVar[frozenset[Granularity]] = frozenset(
        {Granularity.WEAK, Granularity.UNLABELED}
    )
    needs_teacher: ClassVar[bool] = True

    def compute(self, context: StepContext) -> TermOutput:
        rows = self.select(context)
        if not rows:
            return self.zeros(context)
        if context.teacher_outputs is None:
            raise OmniDetectionError("Distillation needs teacher outputs for the batch")
        config = context.config
        q = flatten_levels(context.outputs.pyramid.cls_maps)[rows]
        q_teacher = flatten_levels(context.teacher_outputs.pyramid.cls_maps)[rows]
        loss = soft_focal_loss(
            q, q_teacher, alpha=config.alpha, epsilon=config.epsilon, gamma=config.gamma
        )
        return TermOutput(losses={"sfl": loss})
