"""Inference: decode dense outputs into scored boxes with per-class NMS."""

import torch
from torchvision.ops import batched_nms, clip_boxes_to_image, remove_small_boxes

from ..models import Detection
from .anchors import AnchorSet, decode_boxes
from .network import PyramidOutputs, flatten_levels


def class_nms(
    boxes: torch.Tensor,
    scores: torch.Tensor,
    classes: torch.Tensor,
    iou_thresh: float,
    max_dets: int,
) -> torch.Tensor:
    """Greedy NMS applied independently per class.

    Returns:
        Indices of the kept boxes, by descending score, at most ``max_dets``
    """
    keep = batched_nms(boxes, scores, classes, iou_thresh)
    return keep[:max_dets]


def detect_image(
    scores: torch.Tensor,
    deltas: torch.Tensor,
    anchor_boxes: torch.Tensor,
    image_size: tuple[int, int],
    score_thresh: float = 0.05,
    iou_thresh: float = 0.5,
    max_dets: int = 100,
    pre_nms_top_k: int = 1000,
) -> list[Detection]:
    """Turn flat per-anchor outputs of one image into detections.

    Args:
        scores: Class probabilities, shape (K, N)
        deltas: Regression outputs, shape (K, 4)
        anchor_boxes: Anchors, shape (K, 4)
        image_size: (height, width) used to clip boxes
        score_thresh: Minimum class probability
        iou_thresh: NMS overlap threshold
        max_dets: Maximum number of detections kept
        pre_nms_top_k: Candidates kept before NMS

    Returns:
        Detections sorted by descending score
    """
    num_classes = scores.shape[1]
    flat = scores.reshape(-1)
    candidates = torch.nonzero(flat > score_thresh).squeeze(1)
    if candidates.numel() == 0:
        return []
    if candidates.numel() > pre_nms_top_k:
        top = flat[candidates].topk(pre_nms_top_k).indices
        candidates = candidates[top]
    anchor_idx = candidates // num_classes
    classes = candidates % num_classes
    cand_scores = flat[candidates]

    boxes = decode_boxes(anchor_boxes[anchor_idx], deltas[anchor_idx])
    boxes = clip_boxes_to_image(boxes, image_size)
    sized = remove_small_boxes(boxes, min_size=1e-2)
    boxes, cand_scores, classes = boxes[sized], cand_scores[sized], classes[sized]

    keep = class_nms(boxes, cand_scores, classes, iou_thresh, max_dets)
    return [
        Detection(
            x_min=float(boxes[i, 0]),
            y_min=float(boxes[i, 1]),
            x_max=float(boxes[i, 2]),
            y_max=float(boxes[i, 3]),
            class_id=int(classes[i]),
            score=min(max(float(cand_scores[i]), 0.0), 1.0),
        )
        for i in keep.tolist()
    ]


@torch.no_grad()
def decode_and_nms(
    outputs: PyramidOutputs,
    anchors: AnchorSet,
    image_size: tuple[int, int],
    score_thresh: float = 0.05,
    iou_thresh: float = 0.5,
    max_dets: int = 100,
    pre_nms_top_k: int = 1000,
) -> list[list[Detection]]:
    """Decode a batch of pyramid outputs into per-image detection lists."""
    scores = flatten_levels(outputs.cls_maps)
    deltas = flatten_levels(outputs.reg_maps)
    anchor_boxes = anchors.boxes.to(deltas.dtype)
    return [
        detect_image(
            scores[b],
            deltas[b],
            anchor_boxes,
            image_size,
            score_thresh=score_thresh,
            iou_thresh=iou_thresh,
            max_dets=max_dets,
            pre_nms_top_k=pre_nms_top_k,
        )
        for b in range(scores.shape[0])
    ]
