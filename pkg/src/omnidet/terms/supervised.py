"""Box-supervised detection losses on fully labeled samples."""

from typing import ClassVar

import torch
import torch.nn.functional as F

from ..detector.anchors import assign_targets
from ..detector.losses import focal_loss, smooth_l1
from ..detector.network import flatten_levels
from ..models import Granularity
from .base import LossTerm, StepContext, TermOutput


class SupervisedTerm(LossTerm):
    """Focal classification loss and smooth-L1 box regression.

    Anchor targets come from the boxes of each FULL sample; the focal loss
    is normalized by the number of positive anchors in the batch.
    """

    name: ClassVar[str] = "supervised"
    components: ClassVar[tuple[str, ...]] = ("focal", "regression")
    granularities: ClassVar[frozenset[Granularity]] = frozenset({Granularity.FULL})

    def compute(self, context: StepContext) -> TermOutput:
        rows = self.select(context)
        if not rows:
            return self.zeros(context)
        config = context.config
        pyramid = context.outputs.pyramid
        q = flatten_levels(pyramid.cls_maps)[rows]  # (F, K, N)
        deltas = flatten_levels(pyramid.reg_maps)[rows]  # (F, K, 4)

        targets = [
            assign_targets(
                context.batch.samples[i].boxes or (),
                context.anchors,
                fg_iou=config.fg_iou,
                bg_iou=config.bg_iou,
            )
            for i in rows
        ]
        labels = torch.stack([t.labels for t in targets])  # (F, K)
        regression = torch.stack([t.regression for t in targets]).to(deltas.dtype)
        positive = labels >= 0
        one_hot = F.one_hot(labels.clamp(min=0), num_classes=q.shape[-1])
        one_hot = one_hot * positive.unsqueeze(-1)

        # RetinaNet alpha, distinct from the distillation alpha
        focal = focal_loss(
            q,
            one_hot,
            valid=torch.stack([t.valid for t in targets]),
            alpha=config.focal_alpha,
            gamma=config.focal_gamma,
            normalizer=max(1.0, float(positive.sum())),
        )
        box = smooth_l1(deltas[positive], regression[positive])
        return TermOutput(losses={"focal": focal, "regression": box})
