"""Prototype alignment losses on samples with image labels."""

from typing import ClassVar

from ..daa import get_pooling
from ..gpa import CategoryFeatures, aggregate_features, inter_loss, intra_loss, update_prototypes
from ..models import Granularity
from .base import LossTerm, StepContext, TermOutput
from .weak import select_rows


class PrototypeTerm(LossTerm):
    """Intra-class compactness and inter-class separability.

    The bank is updated with this step's detached features first; both
    losses are then taken against the updated prototypes.
    """

    name: ClassVar[str] = "prototype"
    components: ClassVar[tuple[str, ...]] = ("intra", "inter")
    granularities: ClassVar[frozenset[Granularity]] = frozenset(
        {Granularity.FULL, Granularity.WEAK}
    )

    def compute(self, context: StepContext) -> TermOutput:
        rows = self.select(context)
        if not rows:
            return self.zeros(context)
        outputs = context.outputs
        pair = select_rows(outputs.attention, rows)
        features = aggregate_features(
            outputs.pyramid.backbone_feature[rows], pair.local_attention
        )
        confidences = get_pooling(context.config.pooling).pool(pair)
        batch = CategoryFeatures(
            features=features,
            confidences=confidences,
            presence=context.labels[rows] > 0,
        )
        bank = update_prototypes(context.bank, batch)
        return TermOutput(
            losses={
                "intra": intra_loss(batch, bank),
                "inter": inter_loss(batch, bank, margin=context.config.margin),
            },
            bank=bank,
        )
