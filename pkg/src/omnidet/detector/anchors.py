"""Anchor generation, anchor-to-box matching and box coding."""

import math
from collections.abc import Sequence

import torch
from pydantic import BaseModel
from torchvision.ops import box_iou

from ..models import GroundTruthBox

BACKGROUND = -1
IGNORE = -2

# Upper bound on predicted log-scale deltas, as in torchvision's BoxCoder
_BBOX_XFORM_CLIP = math.log(1000.0 / 16)


class AnchorSet(BaseModel):
    """Per-level anchor boxes in image pixels.

    Each level holds ``A * H_m * W_m`` boxes in (x_min, y_min, x_max, y_max)
    form, ordered anchor-major then row then column, the same order in which
    :func:`omnidet.detector.network.flatten_levels` lays out head outputs.
    """

    model_config = {"frozen": True, "arbitrary_types_allowed": True}

    boxes_per_level: tuple[torch.Tensor, ...]
    shapes: tuple[tuple[int, int], ...]
    strides: tuple[int, ...]
    num_anchors: int

    @property
    def boxes(self) -> torch.Tensor:
        """All anchors of all levels, shape (K, 4)."""
        return torch.cat(self.boxes_per_level, dim=0)

    @property
    def centers_sizes(self) -> torch.Tensor:
        """All anchors as (cx, cy, w, h), shape (K, 4)."""
        b = self.boxes
        wh = b[:, 2:] - b[:, :2]
        return torch.cat([b[:, :2] + 0.5 * wh, wh], dim=1)

    def __len__(self) -> int:
        return sum(int(level.shape[0]) for level in self.boxes_per_level)


def generate_anchors(
    image_size: int,
    pyramid_levels: int,
    scales: Sequence[float],
    size_factor: float = 2.0,
    dtype: torch.dtype = torch.float32,
) -> AnchorSet:
    """Generate square anchors for every pyramid level.

    Level m (0-based) has stride 8 * 2^m and anchor sides
    ``size_factor * stride * scale`` for each scale.

    Args:
        image_size: Square input size in pixels
        pyramid_levels: Number of levels M
        scales: Anchor scales per location (A = len(scales))
        size_factor: Base anchor side in units of the stride
        dtype: Tensor dtype of the boxes

    Returns:
        Deterministic AnchorSet
    """
    levels: list[torch.Tensor] = []
    shapes: list[tuple[int, int]] = []
    strides: list[int] = []
    sizes = torch.tensor(list(scales), dtype=dtype)
    for m in range(pyramid_levels):
        stride = 8 * 2**m
        size = image_size // stride
        half = (size_factor * stride * sizes / 2.0).view(-1, 1, 1)
        centers = (torch.arange(size, dtype=dtype) + 0.5) * stride
        cy = centers.view(1, -1, 1)
        cx = centers.view(1, 1, -1)
        shape = (len(scales), size, size)
        boxes = torch.stack(
            [
                (cx - half).expand(shape),
                (cy - half).expand(shape),
                (cx + half).expand(shape),
                (cy + half).expand(shape),
            ],
            dim=-1,
        ).reshape(-1, 4)
        levels.append(boxes)
        shapes.append((size, size))
        strides.append(stride)
    return AnchorSet(
        boxes_per_level=tuple(levels),
        shapes=tuple(shapes),
        strides=tuple(strides),
        num_anchors=len(scales),
    )


class AnchorTargets(BaseModel):
    """Training targets for every anchor of one image.

    ``labels`` holds a class id for positives, ``BACKGROUND`` (-1) or
    ``IGNORE`` (-2); ``regression`` holds encoded offsets (zero for
    non-positives).
    """

    model_config = {"frozen": True, "arbitrary_types_allowed": True}

    labels: torch.Tensor
    regression: torch.Tensor

    @property
    def positive(self) -> torch.Tensor:
        return self.labels >= 0

    @property
    def valid(self) -> torch.Tensor:
        return self.labels != IGNORE

    @property
    def num_positive(self) -> int:
        return int(self.positive.sum())


def boxes_to_tensor(boxes: Sequence[GroundTruthBox], dtype: torch.dtype) -> torch.Tensor:
    """Stack boxes into a (G, 4) tensor."""
    if not boxes:
        return torch.zeros((0, 4), dtype=dtype)
    return torch.tensor([b.as_xyxy() for b in boxes], dtype=dtype)


def encode_boxes(anchors: torch.Tensor, boxes: torch.Tensor) -> torch.Tensor:
    """Encode boxes as (dx, dy, dw, dh) offsets relative to anchors."""
    aw = anchors[:, 2] - anchors[:, 0]
    ah = anchors[:, 3] - anchors[:, 1]
    ax = anchors[:, 0] + 0.5 * aw
    ay = anchors[:, 1] + 0.5 * ah
    bw = boxes[:, 2] - boxes[:, 0]
    bh = boxes[:, 3] - boxes[:, 1]
    bx = boxes[:, 0] + 0.5 * bw
    by = boxes[:, 1] + 0.5 * bh
    return torch.stack(
        [(bx - ax) / aw, (by - ay) / ah, torch.log(bw / aw), torch.log(bh / ah)], dim=1
    )


def decode_boxes(anchors: torch.Tensor, deltas: torch.Tensor) -> torch.Tensor:
    """Invert :func:`encode_boxes`."""
    aw = anchors[:, 2] - anchors[:, 0]
    ah = anchors[:, 3] - anchors[:, 1]
    ax = anchors[:, 0] + 0.5 * aw
    ay = anchors[:, 1] + 0.5 * ah
    dw = deltas[:, 2].clamp(max=_BBOX_XFORM_CLIP)
    dh = deltas[:, 3].clamp(max=_BBOX_XFORM_CLIP)
    cx = deltas[:, 0] * aw + ax
    cy = deltas[:, 1] * ah + ay
    w = torch.exp(dw) * aw
    h = torch.exp(dh) * ah
    return torch.stack([cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h], dim=1)


def assign_targets(
    boxes: Sequence[GroundTruthBox],
    anchors: AnchorSet,
    fg_iou: float = 0.5,
    bg_iou: float = 0.4,
) -> AnchorTargets:
    """Label every anchor against the ground-truth boxes of one image.

    Anchors with IoU >= ``fg_iou`` become positives of the best box's class,
    IoU < ``bg_iou`` background, anything in between is ignored. Every box
    is additionally force-matched to its single highest-IoU anchor.
    """
    anchor_boxes = anchors.boxes
    num = anchor_boxes.shape[0]
    dtype = anchor_boxes.dtype
    labels = torch.full((num,), BACKGROUND, dtype=torch.long)
    regression = torch.zeros((num, 4), dtype=dtype)
    if not boxes:
        return AnchorTargets(labels=labels, regression=regression)

    gt = boxes_to_tensor(boxes, dtype)
    classes = torch.tensor([b.class_id for b in boxes], dtype=torch.long)
    iou = box_iou(anchor_boxes, gt)  # (K, G)
    best_iou, matched = iou.max(dim=1)

    labels[best_iou >= bg_iou] = IGNORE
    foreground = best_iou >= fg_iou
    forced = iou.argmax(dim=0)  # (G,)
    matched[forced] = torch.arange(gt.shape[0])
    foreground[forced] = True

    labels[foreground] = classes[matched[foreground]]
    regression[foreground] = encode_boxes(
        anchor_boxes[foreground], gt[matched[foreground]]
    )
    return AnchorTargets(labels=labels, regression=regression)
