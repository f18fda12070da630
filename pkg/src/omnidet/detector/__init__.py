"""RetinaNet-shaped dense detector at toy scale."""

from .anchors import (
    BACKGROUND,
    IGNORE,
    AnchorSet,
    AnchorTargets,
    assign_targets,
    decode_boxes,
    encode_boxes,
    generate_anchors,
)
from .losses import focal_loss, smooth_l1
from .network import PyramidOutputs, RetinaDetector, flatten_levels
from .postprocess import class_nms, decode_and_nms, detect_image

__all__ = [
    "BACKGROUND",
    "IGNORE",
    "AnchorSet",
    "AnchorTargets",
    "PyramidOutputs",
    "RetinaDetector",
    "assign_targets",
    "class_nms",
    "decode_and_nms",
    "decode_boxes",
    "detect_image",
    "encode_boxes",
    "flatten_levels",
    "focal_loss",
    "generate_anchors",
    "smooth_l1",
]
