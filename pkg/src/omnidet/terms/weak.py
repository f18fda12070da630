"""Image-label loss through attention pooling."""

from typing import ClassVar

from ..daa import AttentionPair, get_pooling, weak_loss
from ..models import Granularity
from .base import LossTerm, StepContext, TermOutput


def select_rows(pair: AttentionPair, rows: list[int]) -> AttentionPair:
    """Restrict an attention pair to some batch rows."""
    return AttentionPair(
        global_attention=pair.global_attention[rows],
        local_attention=pair.local_attention[rows],
        selected_levels=None if pair.selected_levels is None else pair.selected_levels[rows],
    )


class WeakTerm(LossTerm):
    """BCE between pooled image-level predictions and image labels."""

    name: ClassVar[str] = "weak"
    components: ClassVar[tuple[str, ...]] = ("bce",)
    granularities: ClassVar[frozenset[Granularity]] = frozenset(
        {Granularity.FULL, Granularity.WEAK}
    )

    def compute(self, context: StepContext) -> TermOutput:
        rows = self.select(context)
        if not rows:
            return self.zeros(context)
        pooling = get_pooling(context.config.pooling)
        p = pooling.pool(select_rows(context.outputs.attention, rows))
        labels = context.labels[rows].to(p.dtype)
        granularities = [context.batch.samples[i].granularity for i in rows]
        return TermOutput(losses={"bce": weak_loss(p, labels, granularities)})
