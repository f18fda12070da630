"""Synthetic grayscale images with lesion-like shapes on smooth noise.

Every class has its own shape family, so classes are separable by
construction. Lesion sides are log-uniform between 8 and 110 pixels, which
populates all three COCO area buckets at 128×128. Each image is a pure
function of (seed, index).
"""

import logging
from collections.abc import Sequence

import numpy as np
from PIL import Image, ImageDraw

from ..exceptions import DatasetError
from ..models import GroundTruthBox, Sample

logger = logging.getLogger(__name__)

SHAPE_FAMILIES: tuple[str, ...] = (
    "disc",
    "block",
    "ring",
    "triangle",
    "cross",
    "diamond",
    "frame",
    "stripes",
    "checker",
)

MIN_SIDE = 8.0
MAX_SIDE = 110.0
MAX_LESIONS = 4
MIN_IMAGE_SIZE = 16


def _shape_mask(family: str, size: int, box: tuple[int, int, int, int]) -> np.ndarray:
    """Boolean mask of one shape drawn inside the inclusive box."""
    x0, y0, x1, y1 = box
    w, h = x1 - x0 + 1, y1 - y0 + 1
    cx, cy = (x0 + x1) // 2, (y0 + y1) // 2
    thick = max(1, min(w, h) // 6)

    if family in ("stripes", "checker"):
        mask = np.zeros((size, size), dtype=bool)
        period = max(2, min(w, h) // 4)
        yy, xx = np.mgrid[0:h, 0:w]
        if family == "stripes":
            pattern = (yy // period) % 2 == 0
        else:
            pattern = ((yy // period) + (xx // period)) % 2 == 0
        mask[y0 : y1 + 1, x0 : x1 + 1] = pattern
        return mask

    canvas = Image.new("L", (size, size), 0)
    draw = ImageDraw.Draw(canvas)
    if family == "disc":
        draw.ellipse([x0, y0, x1, y1], fill=255)
    elif family == "block":
        draw.rectangle([x0, y0, x1, y1], fill=255)
    elif family == "ring":
        draw.ellipse([x0, y0, x1, y1], outline=255, width=thick)
    elif family == "triangle":
        draw.polygon([(cx, y0), (x1, y1), (x0, y1)], fill=255)
    elif family == "cross":
        draw.rectangle([x0, cy - thick, x1, cy + thick], fill=255)
        draw.rectangle([cx - thick, y0, cx + thick, y1], fill=255)
    elif family == "diamond":
        draw.polygon([(cx, y0), (x1, cy), (cx, y1), (x0, cy)], fill=255)
    elif family == "frame":
        draw.rectangle([x0, y0, x1, y1], outline=255, width=thick)
    else:
        raise DatasetError(f"Unknown shape family '{family}'")
    return np.asarray(canvas) > 0


def _background(rng: np.random.Generator, size: int) -> np.ndarray:
    coarse = rng.uniform(0.0, 1.0, (8, 8)).astype(np.float32)
    smooth = np.asarray(
        Image.fromarray(coarse).resize((size, size), Image.Resampling.BILINEAR),
        dtype=np.float64,
    )
    return 0.15 + 0.25 * smooth + rng.normal(0.0, 0.02, (size, size))


def render_image(
    rng: np.random.Generator, image_size: int, num_classes: int
) -> tuple[np.ndarray, list[GroundTruthBox]]:
    """Draw one image and return it (values k/255) with its exact boxes."""
    image = _background(rng, image_size)
    boxes: list[GroundTruthBox] = []
    for _ in range(int(rng.integers(0, MAX_LESIONS + 1))):
        class_id = int(rng.integers(0, num_classes))
        side = float(np.exp(rng.uniform(np.log(MIN_SIDE), np.log(MAX_SIDE))))
        aspect = float(np.exp(rng.uniform(np.log(0.75), np.log(4.0 / 3.0))))
        w = int(np.clip(round(side * aspect), 6, image_size - 2))
        h = int(np.clip(round(side / aspect), 6, image_size - 2))
        x0 = int(rng.integers(0, image_size - w + 1))
        y0 = int(rng.integers(0, image_size - h + 1))
        intensity = float(rng.uniform(0.6, 0.95))

        mask = _shape_mask(SHAPE_FAMILIES[class_id], image_size, (x0, y0, x0 + w - 1, y0 + h - 1))
        ys, xs = np.nonzero(mask)
        if xs.size == 0:
            continue
        image[mask] = intensity
        boxes.append(
            GroundTruthBox(
                x_min=float(xs.min()),
                y_min=float(ys.min()),
                x_max=float(xs.max() + 1),
                y_max=float(ys.max() + 1),
                class_id=class_id,
            )
        )
    quantized = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    return quantized.astype(np.float64) / 255.0, boxes


def sample_id(index: int) -> str:
    return f"img{index:05d}"


def generate_synthetic(
    seed: int, n_images: int, image_size: int = 128, num_classes: int = 9
) -> list[Sample]:
    """Generate fully labeled synthetic samples.

    Args:
        seed: Dataset seed; image i depends only on (seed, i)
        n_images: Number of images (0 gives an empty list)
        image_size: Square side in pixels
        num_classes: Number of classes N (at most 9)

    Returns:
        FULL samples with ids ``img00000``, ``img00001``, ...

    Raises:
        DatasetError: On an invalid size, count or class number
    """
    if image_size < MIN_IMAGE_SIZE:
        raise DatasetError(f"image_size must be at least {MIN_IMAGE_SIZE}, got {image_size}")
    if n_images < 0:
        raise DatasetError(f"n_images must be nonnegative, got {n_images}")
    if not 1 <= num_classes <= len(SHAPE_FAMILIES):
        raise DatasetError(
            f"num_classes must lie in [1, {len(SHAPE_FAMILIES)}], got {num_classes}"
        )
    samples = []
    for index in range(n_images):
        rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
        image, boxes = render_image(rng, image_size, num_classes)
        samples.append(Sample.full(sample_id(index), image, boxes, num_classes))
    logger.debug("Generated %d synthetic images (seed=%d)", n_images, seed)
    return samples


def split_samples(
    samples: Sequence[Sample],
    fractions: Sequence[float] = (0.6, 0.2, 0.2),
    seed: int = 0,
    names: Sequence[str] = ("train", "val", "test"),
) -> dict[str, list[Sample]]:
    """Randomly partition samples into disjoint named splits.

    Split sizes are rounded from the fractions; the last split takes the
    remainder. Samples keep their original order within a split.

    Raises:
        DatasetError: If fractions and names differ in length or do not sum to 1
    """
    if len(fractions) != len(names):
        raise DatasetError("Need one fraction per split name")
    if any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-6:
        raise DatasetError(f"Split fractions must be nonnegative and sum to 1: {fractions}")
    n = len(samples)
    order = np.random.default_rng(np.random.SeedSequence([seed, 1])).permutation(n)
    splits: dict[str, list[Sample]] = {}
    start = 0
    for i, (name, fraction) in enumerate(zip(names, fractions)):
        count = n - start if i == len(names) - 1 else min(int(round(fraction * n)), n - start)
        chosen = sorted(order[start : start + count].tolist())
        splits[name] = [samples[j] for j in chosen]
        start += count
    return splits
