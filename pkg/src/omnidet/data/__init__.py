"""Synthetic data, granularity partitioning, augmentation and batching."""

from .augment import AugmentParams, apply_params, augment, flip_boxes, translate_boxes
from .batching import Batch, BatchStream, compose_batch, effective_composition, load_batch
from .granularity import assign_granularity, parse_ratios
from .io import (
    build_dataset,
    load_image,
    load_sample,
    manifest_path,
    read_manifest,
    read_partition,
    save_image,
    write_manifest,
    write_partition,
)
from .sidecar import HiddenAnnotation, HiddenSidecar
from .synthetic import SHAPE_FAMILIES, generate_synthetic, split_samples

__all__ = [
    "AugmentParams",
    "Batch",
    "BatchStream",
    "HiddenAnnotation",
    "HiddenSidecar",
    "SHAPE_FAMILIES",
    "apply_params",
    "assign_granularity",
    "augment",
    "build_dataset",
    "compose_batch",
    "effective_composition",
    "flip_boxes",
    "generate_synthetic",
    "load_batch",
    "load_image",
    "load_sample",
    "manifest_path",
    "parse_ratios",
    "read_manifest",
    "read_partition",
    "save_image",
    "split_samples",
    "translate_boxes",
    "write_manifest",
    "write_partition",
]
