"""Mixed-granularity batches with fixed per-granularity quotas.

Each granularity pool is consumed as an endless sequence of per-epoch
permutations, and step s takes positions [s*q, (s+1)*q) of it. A batch is
therefore a pure function of (manifest, quotas, seed, step), which is what
lets a resumed run see exactly the batches of an uninterrupted one.
"""

import logging
from collections import deque
from collections.abc import Iterator
from concurrent.futures import Future, ThreadPoolExecutor
from pathlib import Path

import numpy as np
import torch
from pydantic import BaseModel

from ..exceptions import DatasetError
from ..models import BatchComposition, DatasetManifest, Granularity, Sample, SampleRecord
from .augment import augment
from .io import load_sample

logger = logging.getLogger(__name__)

GRANULARITY_ORDER: tuple[Granularity, ...] = (
    Granularity.FULL,
    Granularity.WEAK,
    Granularity.UNLABELED,
)


def _epoch_permutation(pool_size: int, seed: int, granularity: Granularity, epoch: int) -> np.ndarray:
    stream = GRANULARITY_ORDER.index(granularity)
    rng = np.random.default_rng(np.random.SeedSequence([seed, stream, epoch]))
    return rng.permutation(pool_size)


def draw_positions(
    pool_size: int, quota: int, seed: int, granularity: Granularity, step: int
) -> list[int]:
    """Pool indices drawn for one granularity at one step.

    Raises:
        DatasetError: If the quota is nonzero and the pool empty
    """
    if quota == 0:
        return []
    if pool_size == 0:
        raise DatasetError(f"Quota {quota} for an empty {granularity.value} pool")
    permutations: dict[int, np.ndarray] = {}
    positions = []
    for position in range(step * quota, (step + 1) * quota):
        epoch, offset = divmod(position, pool_size)
        if epoch not in permutations:
            permutations[epoch] = _epoch_permutation(pool_size, seed, granularity, epoch)
        positions.append(int(permutations[epoch][offset]))
    return positions


def compose_batch(
    manifest: DatasetManifest, composition: BatchComposition, seed: int, step: int
) -> tuple[SampleRecord, ...]:
    """Records of one batch: FULL quota first, then WEAK, then UNLABELED.

    Raises:
        DatasetError: If a pool with a nonzero quota is empty
    """
    records: list[SampleRecord] = []
    for granularity in GRANULARITY_ORDER:
        pool = manifest.by_granularity(granularity)
        quota = composition.quota(granularity)
        records += [pool[i] for i in draw_positions(len(pool), quota, seed, granularity, step)]
    return tuple(records)


def effective_composition(
    manifest: DatasetManifest, composition: BatchComposition
) -> BatchComposition:
    """Zero the quotas of empty pools.

    Raises:
        DatasetError: If no quota is left
    """
    quotas = {}
    for granularity in GRANULARITY_ORDER:
        quota = composition.quota(granularity)
        if quota and not manifest.by_granularity(granularity):
            logger.warning(
                "No %s samples in split '%s'; dropping their quota of %d",
                granularity.value,
                manifest.split,
                quota,
            )
            quota = 0
        quotas[f"n_{granularity.value}"] = quota
    if sum(quotas.values()) == 0:
        raise DatasetError(f"Split '{manifest.split}' has no samples for any quota")
    return BatchComposition(**quotas)


class Batch(BaseModel):
    """Augmented samples of one training step."""

    model_config = {"frozen": True}

    step: int
    samples: tuple[Sample, ...]

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def granularities(self) -> tuple[Granularity, ...]:
        return tuple(s.granularity for s in self.samples)

    def indices(self, *granularities: Granularity) -> list[int]:
        """Positions of the samples whose granularity is among ``granularities``."""
        return [i for i, s in enumerate(self.samples) if s.granularity in granularities]

    def images(self, dtype: torch.dtype = torch.float32) -> torch.Tensor:
        """Stacked images, shape (B, 1, H, W)."""
        return torch.stack([torch.as_tensor(s.image, dtype=dtype) for s in self.samples]).unsqueeze(1)

    def labels(self, num_classes: int, dtype: torch.dtype = torch.float32) -> torch.Tensor:
        """Image labels, shape (B, N); rows of unlabeled samples are zero."""
        rows = [s.image_labels or (0,) * num_classes for s in self.samples]
        return torch.tensor(rows, dtype=dtype)


def slot_seed(seed: int, step: int, slot: int) -> np.random.SeedSequence:
    """Augmentation seed of one batch slot."""
    return np.random.SeedSequence([seed, step, slot, 1])


def load_batch(
    records: tuple[SampleRecord, ...],
    root: str | Path,
    seed: int,
    step: int,
    image_size: int | None = None,
    flip_prob: float = 0.5,
    max_translation: float = 0.05,
) -> Batch:
    """Read and augment the records of one step."""
    samples = tuple(
        augment(
            load_sample(record, root),
            slot_seed(seed, step, slot),
            image_size=image_size,
            flip_prob=flip_prob,
            max_translation=max_translation,
        )
        for slot, record in enumerate(records)
    )
    return Batch(step=step, samples=samples)


class BatchStream:
    """Endless, ordered stream of training batches starting at ``start_step``.

    With ``workers > 0`` batches are prepared on a thread pool; delivery
    order is always the single-threaded order.
    """

    def __init__(
        self,
        manifest: DatasetManifest,
        root: str | Path,
        composition: BatchComposition,
        seed: int,
        image_size: int | None = None,
        flip_prob: float = 0.5,
        max_translation: float = 0.05,
        start_step: int = 0,
        workers: int = 0,
    ) -> None:
        self.manifest = manifest
        self.root = Path(root)
        self.composition = composition
        self.seed = seed
        self.image_size = image_size
        self.flip_prob = flip_prob
        self.max_translation = max_translation
        self.start_step = start_step
        self.workers = workers

    def batch_at(self, step: int) -> Batch:
        records = compose_batch(self.manifest, self.composition, self.seed, step)
        return load_batch(
            records,
            self.root,
            self.seed,
            step,
            image_size=self.image_size,
            flip_prob=self.flip_prob,
            max_translation=self.max_translation,
        )

    def __iter__(self) -> Iterator[Batch]:
        step = self.start_step
        if self.workers <= 0:
            while True:
                yield self.batch_at(step)
                step += 1
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            pending: deque[Future[Batch]] = deque()
            while True:
                while len(pending) < 2 * self.workers:
                    pending.append(pool.submit(self.batch_at, step))
                    step += 1
                yield pending.popleft().result()
