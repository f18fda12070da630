"""Run configuration: a flat, immutable Pydantic model plus file loading."""

import json
import logging
import os
from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import BaseModel, Field, model_validator
from pydantic import ValidationError as PydanticValidationError

from .exceptions import ConfigError, ParseError
from .models import BatchComposition

logger = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "OMNIDET_OUTPUT_DIR"

DEFAULT_TERMS: tuple[str, ...] = ("supervised", "weak", "prototype", "distillation")

# Fields that may change between a checkpoint and its resumption.
RUN_CONTROL_FIELDS = frozenset(
    {
        "max_steps",
        "eval_every",
        "log_every",
        "checkpoint_every",
        "output_dir",
        "init_checkpoint",
    }
)


class Config(BaseModel):
    """All hyperparameters of a run.

    Keys are flat so that a config file and the command line address the
    same names. Defaults follow the published settings where those exist
    and desk-scale choices otherwise.
    """

    model_config = {"frozen": True, "extra": "forbid"}

    # Data and model geometry
    num_classes: int = Field(9, ge=1, le=9, description="Number of lesion classes N")
    image_size: int = Field(128, gt=0, description="Square input size in pixels")
    pyramid_levels: int = Field(3, ge=2, description="Number of pyramid levels M")
    feature_channels: int = Field(32, ge=1, description="Channels D of the feature map")
    anchor_scales: tuple[float, ...] = (1.0, 2.0 ** (1.0 / 3.0), 2.0 ** (2.0 / 3.0))
    anchor_size_factor: float = Field(
        2.0, gt=0, description="Base anchor side as a multiple of the level stride"
    )
    fg_iou: float = Field(0.5, gt=0, le=1)
    bg_iou: float = Field(0.4, ge=0, lt=1)
    prior_probability: float = Field(0.01, gt=0, lt=1)
    focal_alpha: float = Field(0.25, ge=0, le=1, description="Supervised focal loss alpha")
    focal_gamma: float = Field(2.0, ge=0)

    # Loss hyperparameters
    prototype_momentum: float = Field(0.7, ge=0, lt=1, description="beta")
    margin: float = Field(1.0, gt=0, description="delta")
    ema_decay: float = Field(0.99, ge=0, lt=1, description="lambda")
    alpha: float = Field(0.9, ge=0, le=1)
    epsilon: float = Field(0.05, ge=0)
    gamma: float = Field(2.0, ge=0)
    w_focal: float = 1.0
    w_regression: float = 1.0
    w_bce: float = 1.0
    w_intra: float = 1.0
    w_inter: float = 1.0
    w_sfl: float = 1.0
    terms: tuple[str, ...] = DEFAULT_TERMS
    pooling: Literal["daa", "gap"] = "daa"

    # Optimizer and schedule
    lr: float = Field(1e-5, gt=0)
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    lr_patience: int = Field(3, ge=1)
    lr_threshold: float = 1e-4
    lr_factor: float = Field(0.1, gt=0, lt=1)
    lr_floor: float = Field(1e-8, ge=0)

    # Batching and augmentation
    granularity: tuple[float, float, float] = Field(
        (0.2, 0.8, 0.0), description="Train split fractions (full, weak, unlabeled)"
    )
    n_full: int = Field(2, ge=0)
    n_weak: int = Field(2, ge=0)
    n_unlabeled: int = Field(2, ge=0)
    flip_prob: float = Field(0.5, ge=0, le=1)
    max_translation: float = Field(0.05, ge=0, lt=0.5)

    # Inference
    score_thresh: float = Field(0.05, ge=0, le=1)
    nms_iou: float = Field(0.5, gt=0, le=1)
    max_dets: int = Field(100, ge=1)
    pre_nms_top_k: int = Field(1000, ge=1)

    # Run control
    max_steps: int = Field(5000, ge=0)
    eval_every: int = Field(250, ge=1)
    log_every: int = Field(50, ge=1)
    checkpoint_every: int = Field(500, ge=1)
    seed: int = 0
    output_dir: str = "runs/default"
    init_checkpoint: str | None = None

    @model_validator(mode="after")
    def _check_consistency(self) -> "Config":
        if self.bg_iou > self.fg_iou:
            raise ValueError("bg_iou must not exceed fg_iou")
        coarsest = self.coarsest_stride
        if self.image_size % coarsest:
            raise ValueError(
                f"image_size {self.image_size} must be divisible by {coarsest}"
            )
        unknown = sorted(set(self.terms) - set(DEFAULT_TERMS))
        if unknown:
            raise ValueError(f"Unknown loss terms: {unknown}")
        if "supervised" in self.terms and self.n_full < 1:
            raise ValueError("n_full must be at least 1 when the supervised term is on")
        if any(r < 0 for r in self.granularity) or abs(sum(self.granularity) - 1.0) > 1e-6:
            raise ValueError("granularity fractions must be nonnegative and sum to 1")
        if self.n_full + self.n_weak + self.n_unlabeled < 1:
            raise ValueError("Batch quotas must sum to at least 1")
        return self

    @property
    def coarsest_stride(self) -> int:
        """Stride of the coarsest pyramid level, 8 * 2^(M-1)."""
        return 8 * 2 ** (self.pyramid_levels - 1)

    @property
    def num_anchors(self) -> int:
        """Anchors per location A."""
        return len(self.anchor_scales)

    @property
    def batch_composition(self) -> BatchComposition:
        return BatchComposition(
            n_full=self.n_full, n_weak=self.n_weak, n_unlabeled=self.n_unlabeled
        )

    def loss_weight(self, component: str) -> float:
        """Get the weight of a LossReport component (e.g. ``"sfl"``)."""
        return float(getattr(self, f"w_{component}"))

    def first_mismatch(self, other: "Config") -> str | None:
        """Name the first field outside run control where two configs differ."""
        mine, theirs = self.model_dump(), other.model_dump()
        for name in type(self).model_fields:
            if name in RUN_CONTROL_FIELDS:
                continue
            if mine[name] != theirs[name]:
                return name
        return None


def parse_config_content(content: str, source: str | None = None) -> dict[str, Any]:
    """Parse config text as JSON, falling back to YAML.

    Args:
        content: Raw file content
        source: File name used in error messages

    Returns:
        Parsed mapping

    Raises:
        ParseError: If the content is not a JSON/YAML object
    """
    try:
        try:
            result = json.loads(content)
        except json.JSONDecodeError:
            # YAML is a superset of JSON, so try YAML
            result = yaml.safe_load(content)
    except yaml.YAMLError as e:
        raise ParseError(f"Invalid YAML: {e}", source=source)

    if result is None:
        return {}
    if not isinstance(result, dict):
        raise ParseError("Config must be a JSON/YAML object", source=source)
    return result


def build_config(values: dict[str, Any]) -> Config:
    """Validate a mapping into a Config.

    Raises:
        ConfigError: Naming the first offending key
    """
    try:
        return Config.model_validate(values)
    except PydanticValidationError as e:
        first = e.errors()[0]
        key = ".".join(str(part) for part in first["loc"]) or "config"
        raise ConfigError(key, first["msg"]) from e


def load_config(
    path: str | Path | None = None,
    overrides: dict[str, Any] | None = None,
    base: Config | None = None,
) -> Config:
    """Load a config file and apply overrides on top of it.

    Precedence is defaults (or ``base``) < file < ``OMNIDET_OUTPUT_DIR`` (only for
    ``output_dir``) < overrides. ``None`` overrides are ignored.

    Raises:
        ParseError: If the file cannot be parsed
        ConfigError: If a value is invalid
    """
    values: dict[str, Any] = base.model_dump() if base is not None else {}
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ParseError(str(e), source=str(path)) from e
        values.update(parse_config_content(text, source=str(path)))
        logger.debug("Loaded config from %s", path)
    env_dir = os.environ.get(OUTPUT_DIR_ENV)
    if env_dir:
        values["output_dir"] = env_dir
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    return build_config(values)


def save_config(config: Config, path: str | Path) -> None:
    """Write a config as YAML."""
    Path(path).write_text(
        yaml.safe_dump(config.model_dump(mode="json"), sort_keys=False),
        encoding="utf-8",
    )
