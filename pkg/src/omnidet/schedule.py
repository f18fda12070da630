"""Learning-rate decay on stagnating validation mAP."""

import logging
from collections.abc import Sequence

logger = logging.getLogger(__name__)


def stagnant_evaluations(history: Sequence[float], threshold: float = 1e-4) -> int:
    """Count the trailing evaluations that did not beat the best so far by ``threshold``."""
    best = float("-inf")
    stagnant = 0
    for value in history:
        if value >= best + threshold:
            best = value
            stagnant = 0
        else:
            stagnant += 1
    return stagnant


def lr_schedule(
    history: Sequence[float],
    lr: float,
    patience: int = 3,
    threshold: float = 1e-4,
    factor: float = 0.1,
    floor: float = 1e-8,
) -> float:
    """Learning rate after the latest evaluation.

    The rate is multiplied by ``factor`` each time the run of stagnant
    evaluations reaches a multiple of ``patience``, and never drops below
    ``floor``.

    Args:
        history: Validation mAPs in evaluation order, latest last
        lr: Current learning rate
        patience: Stagnant evaluations tolerated before a decay
        threshold: Minimum improvement over the best mAP
        factor: Decay multiplier
        floor: Lower bound of the rate

    Returns:
        The new learning rate
    """
    stagnant = stagnant_evaluations(history, threshold)
    if stagnant == 0 or stagnant % patience:
        return lr
    new_lr = min(lr, max(floor, lr * factor))
    if new_lr < lr:
        logger.info(
            "Validation mAP stagnant for %d evaluations; lr %.3g -> %.3g",
            stagnant,
            lr,
            new_lr,
        )
    return new_lr
