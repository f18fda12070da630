"""Deterministic augmentation: horizontal flip, small translation, resize."""

from collections.abc import Sequence

import numpy as np
from PIL import Image
from pydantic import BaseModel

from ..models import GroundTruthBox, Sample, derive_labels

_MIN_EXTENT = 1.0


class AugmentParams(BaseModel):
    """One draw of augmentation parameters (translation in whole pixels)."""

    model_config = {"frozen": True}

    flip: bool = False
    dx: int = 0
    dy: int = 0


def draw_params(
    rng: np.random.Generator,
    width: int,
    height: int,
    flip_prob: float = 0.5,
    max_translation: float = 0.05,
) -> AugmentParams:
    """Draw a flip with probability ``flip_prob`` and a shift of at most ``max_translation``."""
    flip = bool(rng.random() < flip_prob)
    max_dx = int(np.floor(max_translation * width))
    max_dy = int(np.floor(max_translation * height))
    dx = int(rng.integers(-max_dx, max_dx + 1))
    dy = int(rng.integers(-max_dy, max_dy + 1))
    return AugmentParams(flip=flip, dx=dx, dy=dy)


def flip_boxes(boxes: Sequence[GroundTruthBox], width: float) -> list[GroundTruthBox]:
    """Mirror boxes about the vertical axis: x_min -> W - x_max."""
    return [
        b.model_copy(update={"x_min": width - b.x_max, "x_max": width - b.x_min})
        for b in boxes
    ]


def _clip_interval(low: float, high: float, limit: float) -> tuple[float, float]:
    low = min(max(low, 0.0), limit)
    high = min(max(high, 0.0), limit)
    if high - low < _MIN_EXTENT:
        low = min(low, limit - _MIN_EXTENT)
        high = low + _MIN_EXTENT
    return low, high


def translate_boxes(
    boxes: Sequence[GroundTruthBox], dx: float, dy: float, width: float, height: float
) -> list[GroundTruthBox]:
    """Shift boxes and clip them to the image.

    A box clipped thinner than a pixel keeps a one-pixel extent at the image
    border, so the labels derived from the boxes never change.
    """
    moved = []
    for b in boxes:
        x_min, x_max = _clip_interval(b.x_min + dx, b.x_max + dx, width)
        y_min, y_max = _clip_interval(b.y_min + dy, b.y_max + dy, height)
        moved.append(
            GroundTruthBox(x_min=x_min, y_min=y_min, x_max=x_max, y_max=y_max, class_id=b.class_id)
        )
    return moved


def shift_image(image: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Shift an image by whole pixels, filling uncovered pixels with 0."""
    height, width = image.shape
    out = np.zeros_like(image)
    src_x = slice(max(0, -dx), min(width, width - dx))
    dst_x = slice(max(0, dx), min(width, width + dx))
    src_y = slice(max(0, -dy), min(height, height - dy))
    dst_y = slice(max(0, dy), min(height, height + dy))
    out[dst_y, dst_x] = image[src_y, src_x]
    return out


def _with(
    sample: Sample, image: np.ndarray, boxes: list[GroundTruthBox] | None
) -> Sample:
    if boxes is None:
        return sample.model_copy(update={"image": image})
    assert sample.image_labels is not None
    return Sample(
        sample_id=sample.sample_id,
        image=image,
        granularity=sample.granularity,
        boxes=tuple(boxes),
        image_labels=derive_labels(boxes, len(sample.image_labels)),
    )


def apply_params(sample: Sample, params: AugmentParams) -> Sample:
    """Apply a flip and a translation to the image and its boxes."""
    image = sample.image
    boxes = list(sample.boxes) if sample.boxes is not None else None
    width, height = sample.width, sample.height
    if params.flip:
        image = image[:, ::-1].copy()
        if boxes is not None:
            boxes = flip_boxes(boxes, width)
    if params.dx or params.dy:
        image = shift_image(image, params.dx, params.dy)
        if boxes is not None:
            boxes = translate_boxes(boxes, params.dx, params.dy, width, height)
    return _with(sample, image, boxes)


def resize_sample(sample: Sample, size: int) -> Sample:
    """Resize to ``size``×``size`` (bilinear, no cropping), scaling the boxes."""
    if sample.height == size and sample.width == size:
        return sample
    sx, sy = size / sample.width, size / sample.height
    resized = Image.fromarray(sample.image.astype(np.float32)).resize(
        (size, size), Image.Resampling.BILINEAR
    )
    image = np.clip(np.asarray(resized, dtype=np.float64), 0.0, 1.0)
    boxes = None
    if sample.boxes is not None:
        boxes = [
            b.model_copy(
                update={
                    "x_min": b.x_min * sx,
                    "x_max": min(b.x_max * sx, float(size)),
                    "y_min": b.y_min * sy,
                    "y_max": min(b.y_max * sy, float(size)),
                }
            )
            for b in sample.boxes
        ]
    return _with(sample, image, boxes)


def augment(
    sample: Sample,
    seed: int | np.random.SeedSequence,
    image_size: int | None = None,
    flip_prob: float = 0.5,
    max_translation: float = 0.05,
) -> Sample:
    """Flip, translate and resize a sample; a pure function of ``seed``."""
    rng = np.random.default_rng(seed)
    params = draw_params(rng, sample.width, sample.height, flip_prob, max_translation)
    out = apply_params(sample, params)
    if image_size is not None:
        out = resize_sample(out, image_size)
    return out
