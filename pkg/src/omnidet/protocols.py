"""Protocol definitions for structural subtyping (duck typing).

Loss terms and attention poolings are looked up by name and called through
these protocols, so a user-defined class works without inheriting from
:class:`~omnidet.terms.base.LossTerm` or
:class:`~omnidet.daa.AttentionPooling`.

Usage:
    from omnidet.protocols import LossTermProtocol

    def run_term(term: LossTermProtocol, context: StepContext) -> TermOutput:
        return term.compute(context)
"""

from __future__ import annotations

from typing import TYPE_CHECKING, Protocol, runtime_checkable

if TYPE_CHECKING:
    import torch

    from .daa import AttentionPair
    from .models import Granularity
    from .terms.base import StepContext, TermOutput


@runtime_checkable
class LossTermProtocol(Protocol):
    """Protocol for loss terms.

    Example:
        class ZeroTerm:
            name = "zero"
            components = ("sfl",)
            granularities = frozenset({Granularity.UNLABELED})
            needs_teacher = False

            def compute(self, context):
                return TermOutput(losses={"sfl": torch.zeros(())})
    """

    @property
    def name(self) -> str:
        """Name the term is configured by."""
        ...

    @property
    def components(self) -> tuple[str, ...]:
        """LossReport components this term fills."""
        ...

    @property
    def granularities(self) -> frozenset[Granularity]:
        """Granularities of the samples the term is computed on."""
        ...

    @property
    def needs_teacher(self) -> bool:
        """Whether the term reads teacher predictions."""
        ...

    def compute(self, context: StepContext) -> TermOutput:
        """Compute the components of one training step."""
        ...


@runtime_checkable
class PoolingProtocol(Protocol):
    """Protocol for image-level pooling of the attention maps."""

    @property
    def name(self) -> str:
        """Name the pooling is configured by."""
        ...

    def pool(self, pair: AttentionPair) -> torch.Tensor:
        """Return image-level probabilities of shape (B, N)."""
        ...
