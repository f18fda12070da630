"""Partition a fully labeled split into full, weak and unlabeled pools."""

import logging
from collections.abc import Sequence

import numpy as np

from ..exceptions import DatasetError
from ..models import DatasetManifest, Granularity, SampleRecord
from .sidecar import HiddenAnnotation, HiddenSidecar

logger = logging.getLogger(__name__)


def parse_ratios(text: str) -> tuple[float, float, float]:
    """Parse ``"0.2,0.8,0.0"`` into (full, weak, unlabeled) ratios.

    Raises:
        DatasetError: If the text does not hold three numbers summing to 1
    """
    try:
        values = tuple(float(part) for part in text.split(","))
    except ValueError:
        raise DatasetError(f"Granularity ratios must be numbers: '{text}'") from None
    if len(values) != 3:
        raise DatasetError(f"Expected three granularity ratios, got '{text}'")
    check_ratios(values)
    return values  # type: ignore[return-value]


def check_ratios(ratios: Sequence[float]) -> None:
    """Raise DatasetError unless ratios are three nonnegatives summing to 1."""
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-6:
        raise DatasetError(
            f"Granularity ratios must be three nonnegatives summing to 1: {tuple(ratios)}"
        )


def granularity_counts(n: int, ratios: Sequence[float]) -> tuple[int, int, int]:
    """Rounded pool sizes; the unlabeled pool takes the remainder."""
    n_full = int(round(ratios[0] * n))
    n_weak = min(int(round(ratios[1] * n)), n - n_full)
    return n_full, n_weak, n - n_full - n_weak


def _hide(record: SampleRecord, granularity: Granularity) -> SampleRecord:
    return SampleRecord(
        id=record.id,
        path=record.path,
        granularity=granularity,
        boxes=record.boxes if granularity.has_boxes else None,
        labels=record.labels if granularity.has_labels else None,
    )


def assign_granularity(
    manifest: DatasetManifest, ratios: Sequence[float], seed: int
) -> tuple[DatasetManifest, HiddenSidecar]:
    """Randomly tag every record FULL, WEAK or UNLABELED.

    WEAK records drop their boxes and UNLABELED records drop boxes and
    labels; whatever is dropped goes to the returned sidecar.

    Args:
        manifest: Fully labeled manifest
        ratios: (full, weak, unlabeled) fractions summing to 1
        seed: Partition seed

    Returns:
        The re-tagged manifest and the sidecar of hidden annotations

    Raises:
        DatasetError: If ratios are invalid or a record is not fully labeled
    """
    check_ratios(ratios)
    for record in manifest.records:
        if record.granularity is not Granularity.FULL:
            raise DatasetError(f"Record '{record.id}' is already {record.granularity.value}")

    n = len(manifest)
    n_full, n_weak, _ = granularity_counts(n, ratios)
    order = np.random.default_rng(np.random.SeedSequence([seed, 2])).permutation(n)
    tags = [Granularity.UNLABELED] * n
    for rank, index in enumerate(order.tolist()):
        if rank < n_full:
            tags[index] = Granularity.FULL
        elif rank < n_full + n_weak:
            tags[index] = Granularity.WEAK

    sidecar = HiddenSidecar()
    records = []
    for record, granularity in zip(manifest.records, tags):
        if granularity is not Granularity.FULL:
            assert record.boxes is not None and record.labels is not None
            sidecar.add(HiddenAnnotation(id=record.id, boxes=record.boxes, labels=record.labels))
        records.append(_hide(record, granularity))

    result = manifest.model_copy(update={"records": tuple(records)})
    logger.info("Assigned granularities for split '%s': %s", manifest.split, result.counts())
    return result, sidecar
