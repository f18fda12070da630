"""Saving and restoring the complete training state."""

import logging
import pickle
from pathlib import Path
from typing import Any

import torch
from pydantic import BaseModel, Field
from pydantic import ValidationError as PydanticValidationError

from .config import Config
from .exceptions import CheckpointError, ConfigMismatchError

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 1

_REQUIRED_KEYS = frozenset(
    {"format", "step", "seed", "lr", "map_history", "config", "student", "teacher", "bank", "optimizer"}
)


class Checkpoint(BaseModel):
    """Everything needed to continue a run exactly where it stopped.

    Batch composition and augmentation are pure functions of the seed and
    the step counter, so no data-loader state is stored.
    """

    model_config = {"frozen": True, "arbitrary_types_allowed": True}

    step: int = Field(..., ge=0)
    seed: int
    lr: float = Field(..., gt=0)
    map_history: tuple[float, ...] = ()
    config: Config
    student: dict[str, torch.Tensor]
    teacher: dict[str, torch.Tensor]
    bank: dict[str, Any]
    optimizer: dict[str, Any]


def save_checkpoint(checkpoint: Checkpoint, path: str | Path) -> Path:
    """Write a checkpoint with ``torch.save``.

    The file is written next to its destination first and renamed into
    place.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format": CHECKPOINT_FORMAT,
        "step": checkpoint.step,
        "seed": checkpoint.seed,
        "lr": checkpoint.lr,
        "map_history": list(checkpoint.map_history),
        "config": checkpoint.config.model_dump(mode="json"),
        "student": checkpoint.student,
        "teacher": checkpoint.teacher,
        "bank": checkpoint.bank,
        "optimizer": checkpoint.optimizer,
    }
    partial = path.with_name(f"{path.name}.partial")
    torch.save(payload, partial)
    partial.replace(path)
    logger.info("Saved checkpoint at step %d to %s", checkpoint.step, path)
    return path


def load_checkpoint(path: str | Path, config: Config | None = None) -> Checkpoint:
    """Read a checkpoint written by :func:`save_checkpoint`.

    Args:
        path: Checkpoint file
        config: Config of the current run; when given, every field outside
            run control must equal the saved one

    Raises:
        CheckpointError: If the file is missing, unreadable or incomplete
        ConfigMismatchError: If ``config`` differs from the saved config
    """
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(str(path), "file not found")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except (OSError, RuntimeError, EOFError, pickle.UnpicklingError, ValueError) as e:
        raise CheckpointError(str(path), f"corrupt file ({e})") from e

    if not isinstance(payload, dict):
        raise CheckpointError(str(path), "not a checkpoint")
    missing = sorted(_REQUIRED_KEYS - set(payload))
    if missing:
        raise CheckpointError(str(path), f"missing entries {missing}")
    if payload["format"] != CHECKPOINT_FORMAT:
        raise CheckpointError(str(path), f"unsupported format {payload['format']}")

    try:
        checkpoint = Checkpoint.model_validate(
            {**payload, "config": Config.model_validate(payload["config"])}
        )
    except PydanticValidationError as e:
        raise CheckpointError(str(path), f"invalid contents ({e.errors()[0]['msg']})") from e

    if config is not None:
        field = checkpoint.config.first_mismatch(config)
        if field is not None:
            raise ConfigMismatchError(
                str(path),
                field,
                getattr(checkpoint.config, field),
                getattr(config, field),
            )
    logger.info("Loaded checkpoint at step %d from %s", checkpoint.step, path)
    return checkpoint
