"""Immutable Pydantic models for samples, annotations, detections and reports."""

from collections.abc import Iterable, Sequence
from enum import Enum
from typing import Any, ClassVar

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

# COCO area cutoffs (pixels²)
SMALL_AREA = 32.0**2
LARGE_AREA = 96.0**2


class Granularity(str, Enum):
    """Annotation granularity of a training image.

    The granularity decides which labels a sample carries and, through the
    loss routing of the trainer, which objectives it contributes to.
    """

    FULL = "full"
    """Lesion-level boxes and the image labels derived from them."""

    WEAK = "weak"
    """Image-level multi-label indicators only."""

    UNLABELED = "unlabeled"
    """No annotation at all."""

    @property
    def display_name(self) -> str:
        """Get human-readable name for the granularity."""
        names = {
            Granularity.FULL: "Fully labeled",
            Granularity.WEAK: "Weakly labeled",
            Granularity.UNLABELED: "Unlabeled",
        }
        return names.get(self, self.value)

    @property
    def has_boxes(self) -> bool:
        """Whether samples of this granularity expose boxes."""
        return self is Granularity.FULL

    @property
    def has_labels(self) -> bool:
        """Whether samples of this granularity expose image labels."""
        return self is not Granularity.UNLABELED


class AreaRange(str, Enum):
    """Ground-truth area buckets used for size-stratified AP."""

    ALL = "all"
    SMALL = "small"
    MEDIUM = "medium"
    LARGE = "large"

    @property
    def bounds(self) -> tuple[float, float]:
        """Half-open area interval [low, high) in pixels²."""
        ranges = {
            AreaRange.ALL: (0.0, float("inf")),
            AreaRange.SMALL: (0.0, SMALL_AREA),
            AreaRange.MEDIUM: (SMALL_AREA, LARGE_AREA),
            AreaRange.LARGE: (LARGE_AREA, float("inf")),
        }
        return ranges[self]

    @property
    def display_name(self) -> str:
        """Get human-readable name for the bucket."""
        return {"all": "AP", "small": "AP_S", "medium": "AP_M", "large": "AP_L"}[
            self.value
        ]

    def contains(self, area: float) -> bool:
        """Check whether an area falls inside this bucket."""
        low, high = self.bounds
        return low <= area < high


class GroundTruthBox(BaseModel):
    """An annotated lesion box in pixel coordinates."""

    model_config = {"frozen": True}

    x_min: float = Field(..., description="Left edge in pixels")
    y_min: float = Field(..., description="Top edge in pixels")
    x_max: float = Field(..., description="Right edge in pixels")
    y_max: float = Field(..., description="Bottom edge in pixels")
    class_id: int = Field(..., ge=0, description="Lesion class in [0, N)")

    @model_validator(mode="after")
    def _check_order(self) -> "GroundTruthBox":
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(
                f"Box is not well-ordered: ({self.x_min}, {self.y_min}, "
                f"{self.x_max}, {self.y_max})"
            )
        return self

    @property
    def area(self) -> float:
        """Box area in pixels²."""
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def as_xyxy(self) -> tuple[float, float, float, float]:
        """Return the box as an (x_min, y_min, x_max, y_max) tuple."""
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def inside(self, width: float, height: float) -> bool:
        """Check whether the box lies within an image of the given size."""
        return (
            self.x_min >= 0
            and self.y_min >= 0
            and self.x_max <= width
            and self.y_max <= height
        )


class Detection(BaseModel):
    """A scored box produced by the detector."""

    model_config = {"frozen": True}

    x_min: float
    y_min: float
    x_max: float
    y_max: float
    class_id: int = Field(..., ge=0)
    score: float = Field(..., ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _check_order(self) -> "Detection":
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError("Detection box is not well-ordered")
        return self

    @property
    def area(self) -> float:
        """Box area in pixels²."""
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def as_xyxy(self) -> tuple[float, float, float, float]:
        """Return the box as an (x_min, y_min, x_max, y_max) tuple."""
        return (self.x_min, self.y_min, self.x_max, self.y_max)


def derive_labels(boxes: Iterable[GroundTruthBox], num_classes: int) -> tuple[int, ...]:
    """Derive the binary image-label vector implied by a set of boxes.

    Args:
        boxes: Annotated boxes of one image
        num_classes: Number of classes N

    Returns:
        Tuple y of length N with y_c = 1 iff a box of class c exists
    """
    labels = [0] * num_classes
    for box in boxes:
        if box.class_id >= num_classes:
            raise ValueError(
                f"Box class {box.class_id} outside [0, {num_classes})"
            )
        labels[box.class_id] = 1
    return tuple(labels)


class Sample(BaseModel):
    """One grayscale image with whatever labels its granularity permits."""

    model_config = {"frozen": True, "arbitrary_types_allowed": True}

    sample_id: str = Field(..., description="Unique identifier within a split")
    image: np.ndarray = Field(..., description="H×W float image with values in [0, 1]")
    granularity: Granularity
    boxes: tuple[GroundTruthBox, ...] | None = None
    image_labels: tuple[int, ...] | None = None

    @field_validator("image")
    @classmethod
    def _check_image(cls, value: np.ndarray) -> np.ndarray:
        if value.ndim != 2:
            raise ValueError(f"Image must be 2-D, got shape {value.shape}")
        if value.size and (value.min() < 0.0 or value.max() > 1.0):
            raise ValueError("Image values must lie in [0, 1]")
        return value

    @model_validator(mode="after")
    def _check_granularity(self) -> "Sample":
        g = self.granularity
        if g is Granularity.UNLABELED:
            if self.boxes is not None or self.image_labels is not None:
                raise ValueError("Unlabeled samples carry neither boxes nor labels")
            return self
        if self.image_labels is None:
            raise ValueError(f"{g.display_name} samples require image labels")
        if any(v not in (0, 1) for v in self.image_labels):
            raise ValueError("Image labels must be binary")
        if g is Granularity.WEAK:
            if self.boxes is not None:
                raise ValueError("Weakly labeled samples carry no boxes")
            return self
        if self.boxes is None:
            raise ValueError("Fully labeled samples require boxes")
        height, width = self.image.shape
        for box in self.boxes:
            if not box.inside(width, height):
                raise ValueError(f"Box {box.as_xyxy()} outside {width}x{height} image")
        if derive_labels(self.boxes, len(self.image_labels)) != self.image_labels:
            raise ValueError("Image labels disagree with the annotated boxes")
        return self

    @classmethod
    def full(
        cls,
        sample_id: str,
        image: np.ndarray,
        boxes: Sequence[GroundTruthBox],
        num_classes: int,
    ) -> "Sample":
        """Create a fully labeled sample, deriving its image labels."""
        return cls(
            sample_id=sample_id,
            image=image,
            granularity=Granularity.FULL,
            boxes=tuple(boxes),
            image_labels=derive_labels(boxes, num_classes),
        )

    @property
    def height(self) -> int:
        return int(self.image.shape[0])

    @property
    def width(self) -> int:
        return int(self.image.shape[1])


class SampleRecord(BaseModel):
    """One manifest line: where an image lives and what labels it exposes."""

    model_config = {"frozen": True}

    id: str
    path: str = Field(..., description="Image path relative to the manifest")
    granularity: Granularity = Granularity.FULL
    boxes: tuple[GroundTruthBox, ...] | None = None
    labels: tuple[int, ...] | None = None

    @model_validator(mode="after")
    def _check_granularity(self) -> "SampleRecord":
        if self.granularity.has_boxes != (self.boxes is not None):
            raise ValueError(f"Record '{self.id}': boxes inconsistent with granularity")
        if self.granularity.has_labels != (self.labels is not None):
            raise ValueError(f"Record '{self.id}': labels inconsistent with granularity")
        return self


class DatasetManifest(BaseModel):
    """A split of the dataset together with its provenance."""

    model_config = {"frozen": True}

    split: str = Field(..., description="Split name (train, val, test)")
    seed: int = Field(..., description="Seed the split was generated with")
    num_classes: int = Field(..., ge=1, le=9)
    image_size: int = Field(..., gt=0)
    records: tuple[SampleRecord, ...] = ()

    @model_validator(mode="after")
    def _check_unique(self) -> "DatasetManifest":
        ids = [r.id for r in self.records]
        if len(ids) != len(set(ids)):
            raise ValueError(f"Duplicate sample ids in split '{self.split}'")
        return self

    def __len__(self) -> int:
        return len(self.records)

    def by_granularity(self, granularity: Granularity) -> tuple[SampleRecord, ...]:
        """Get the records of one granularity, in manifest order."""
        return tuple(r for r in self.records if r.granularity is granularity)

    def counts(self) -> dict[str, int]:
        """Count records per granularity."""
        return {g.value: len(self.by_granularity(g)) for g in Granularity}


class BatchComposition(BaseModel):
    """Per-batch quotas of the three granularities."""

    model_config = {"frozen": True}

    n_full: int = Field(2, ge=0)
    n_weak: int = Field(2, ge=0)
    n_unlabeled: int = Field(2, ge=0)

    @model_validator(mode="after")
    def _check_total(self) -> "BatchComposition":
        if self.total < 1:
            raise ValueError("Batch must contain at least one sample")
        return self

    @property
    def total(self) -> int:
        return self.n_full + self.n_weak + self.n_unlabeled

    def quota(self, granularity: Granularity) -> int:
        """Get the quota for one granularity."""
        return {
            Granularity.FULL: self.n_full,
            Granularity.WEAK: self.n_weak,
            Granularity.UNLABELED: self.n_unlabeled,
        }[granularity]


class EvalResult(BaseModel):
    """Detection metrics over a set of images.

    APs are in [0, 1]. ``per_class_ap`` maps class id to one AP per IoU
    threshold; classes without ground truth are absent from it.
    """

    model_config = {"frozen": True}

    thresholds: tuple[float, ...]
    per_class_ap: dict[int, tuple[float, ...]] = Field(default_factory=dict)
    mean_ap: float = Field(0.0, ge=0.0, le=1.0)
    ap_at_threshold: tuple[float, ...] = ()
    ap_small: float | None = None
    ap_medium: float | None = None
    ap_large: float | None = None
    num_gt: int = 0
    num_detections: int = 0

    def ap_at(self, threshold: float) -> float:
        """Get the class-averaged AP at one IoU threshold."""
        for t, ap in zip(self.thresholds, self.ap_at_threshold):
            if abs(t - threshold) < 1e-9:
                return ap
        raise KeyError(f"Threshold {threshold} was not evaluated")

    def get_summary(self) -> dict[str, float | None]:
        """Get the headline numbers in the column order of the result tables."""
        summary: dict[str, float | None] = {"mAP": self.mean_ap}
        for t in (0.40, 0.75):
            try:
                summary[f"AP{round(t * 100)}"] = self.ap_at(t)
            except KeyError:
                summary[f"AP{round(t * 100)}"] = None
        summary["AP_S"] = self.ap_small
        summary["AP_M"] = self.ap_medium
        summary["AP_L"] = self.ap_large
        return summary


class LossReport(BaseModel):
    """Loss components of one optimizer step."""

    model_config = {"frozen": True}

    step: int = Field(..., ge=0)
    lr: float
    focal: float = 0.0
    regression: float = 0.0
    bce: float = 0.0
    intra: float = 0.0
    inter: float = 0.0
    sfl: float = 0.0
    total: float = 0.0

    COMPONENTS: ClassVar[tuple[str, ...]] = (
        "focal",
        "regression",
        "bce",
        "intra",
        "inter",
        "sfl",
    )

    def as_row(self) -> dict[str, Any]:
        """Flatten to a CSV row."""
        return self.model_dump()
