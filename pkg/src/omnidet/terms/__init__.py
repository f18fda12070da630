"""Loss terms.

This package applies the Strategy pattern to loss routing: each term owns
one family of losses and the granularities it is computed on.
"""

from .base import LossTerm, StepContext, TermOutput
from .distillation import DistillationTerm
from .prototype import PrototypeTerm
from .supervised import SupervisedTerm
from .weak import WeakTerm

__all__ = [
    # Base classes
    "LossTerm",
    "StepContext",
    "TermOutput",
    # Concrete terms
    "SupervisedTerm",
    "WeakTerm",
    "PrototypeTerm",
    "DistillationTerm",
]
