"""Base class and step context for loss terms."""

from abc import ABC, abstractmethod
from typing import ClassVar

import torch
from pydantic import BaseModel, Field

from ..config import Config
from ..data.batching import Batch
from ..detector.anchors import AnchorSet
from ..gpa import PrototypeBank
from ..model import OmniOutputs
from ..models import Granularity


class StepContext(BaseModel):
    """Everything a loss term may read during one training step."""

    model_config = {"frozen": True, "arbitrary_types_allowed": True}

    batch: Batch
    outputs: OmniOutputs = Field(..., description="Student forward pass")
    teacher_outputs: OmniOutputs | None = Field(
        None, description="Teacher forward pass, present when a term needs it"
    )
    anchors: AnchorSet
    bank: PrototypeBank
    labels: torch.Tensor = Field(..., description="(B, N) image labels")
    config: Config


class TermOutput(BaseModel):
    """Components computed by a term and, for stateful terms, the new bank."""

    model_config = {"frozen": True, "arbitrary_types_allowed": True}

    losses: dict[str, torch.Tensor]
    bank: PrototypeBank | None = None


class LossTerm(ABC):
    """Abstract base class for one family of training losses.

    Each term names the LossReport components it fills and the
    granularities of the samples it is computed on. Batch rows of other
    granularities never reach it; with no qualifying row every component
    is 0.
    """

    name: ClassVar[str]
    components: ClassVar[tuple[str, ...]]
    granularities: ClassVar[frozenset[Granularity]]
    needs_teacher: ClassVar[bool] = False

    def select(self, context: StepContext) -> list[int]:
        """Batch rows this term is computed on."""
        return context.batch.indices(*self.granularities)

    def zeros(self, context: StepContext) -> TermOutput:
        """Output of a step with no qualifying sample."""
        dtype = context.outputs.pyramid.backbone_feature.dtype
        return TermOutput(
            losses={c: torch.zeros((), dtype=dtype) for c in self.components}
        )

    @abstractmethod
    def compute(self, context: StepContext) -> TermOutput:
        """Compute this term's components for one step.

        Args:
            context: Student and teacher outputs of the whole batch

        Returns:
            TermOutput with one scalar tensor per component
        """
        ...

    def __repr__(self) -> str:
        return f"{type(self).__name__}(name={self.name!r})"
