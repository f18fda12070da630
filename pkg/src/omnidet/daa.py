"""Dual attention alignment.

Local attention is read off the dense classification head: the maximum over
anchors, then, per class, the pyramid level with the largest peak. After
resizing to the backbone map and normalizing to unit mass it weights the
global class-activation map 𝒳 into image-level predictions, so the
image-label loss reaches the local head through the weights.
"""

import logging
from abc import ABC, abstractmethod
from collections.abc import Sequence
from pathlib import Path
from typing import ClassVar

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image
from pydantic import BaseModel
from torch import nn

from .core import binary_cross_entropy
from .exceptions import ConfigError, GranularityError, ShapeMismatchError
from .models import Granularity

logger = logging.getLogger(__name__)

_DEGENERATE_MASS = 1e-12


class AttentionPair(BaseModel):
    """Global attention 𝒳 and normalized local attention ℛ, both (B, N, H, W)."""

    model_config = {"frozen": True, "arbitrary_types_allowed": True}

    global_attention: torch.Tensor
    local_attention: torch.Tensor
    selected_levels: torch.Tensor | None = None

    @property
    def num_classes(self) -> int:
        return int(self.global_attention.shape[1])


class GlobalAttentionHead(nn.Module):
    """Bias-free 1×1 convolution from the backbone map ℳ to per-class maps 𝒳."""

    def __init__(self, channels: int, num_classes: int) -> None:
        super().__init__()
        self.conv = nn.Conv2d(channels, num_classes, 1, bias=False)

    def reset_parameters(self, generator: torch.Generator | None = None) -> None:
        nn.init.normal_(self.conv.weight, std=0.01, generator=generator)

    def forward(self, feature: torch.Tensor) -> torch.Tensor:
        return self.conv(feature)


def reduce_anchor_dimension(cls_maps: Sequence[torch.Tensor]) -> list[torch.Tensor]:
    """Max over the anchor axis of every level: (B, N, A, H, W) -> (B, N, H, W)."""
    return [level.amax(dim=2) for level in cls_maps]


def select_pyramid_level(levels: Sequence[torch.Tensor]) -> torch.Tensor:
    """Pick, per sample and class, the level with the largest peak activation.

    Args:
        levels: M anchor-reduced maps, each (B, N, H_m, W_m)

    Returns:
        Level indices, shape (B, N); ties go to the finest level
    """
    peaks = torch.stack([level.flatten(2).amax(dim=2) for level in levels])  # (M, B, N)
    # argmax returns the first maximal index, i.e. the finest level on ties
    return peaks.argmax(dim=0)


def normalize_attention(
    attention: torch.Tensor, target_shape: tuple[int, int]
) -> torch.Tensor:
    """Resize attention maps bilinearly and normalize each to unit mass.

    Args:
        attention: Nonnegative maps, shape (..., H, W)
        target_shape: Output spatial shape (H_0, W_0)

    Returns:
        Maps of shape (..., H_0, W_0), each summing to 1; maps with no mass
        become uniform
    """
    lead = attention.shape[:-2]
    flat = attention.reshape(1, -1, *attention.shape[-2:])
    if tuple(flat.shape[-2:]) != tuple(target_shape):
        flat = F.interpolate(flat, size=target_shape, mode="bilinear", align_corners=False)
    flat = flat.clamp(min=0.0)
    mass = flat.sum(dim=(-2, -1), keepdim=True)
    uniform = torch.full_like(flat, 1.0 / (target_shape[0] * target_shape[1]))
    degenerate = mass <= _DEGENERATE_MASS
    normalized = torch.where(degenerate, uniform, flat / mass.clamp(min=_DEGENERATE_MASS))
    return normalized.reshape(*lead, *target_shape)


def build_local_attention(
    cls_maps: Sequence[torch.Tensor], target_shape: tuple[int, int]
) -> tuple[torch.Tensor, torch.Tensor]:
    """Normalized local attention ℛ from the dense classification maps.

    Returns:
        (ℛ of shape (B, N, H_0, W_0), selected level per sample and class)
    """
    levels = reduce_anchor_dimension(cls_maps)
    selected = select_pyramid_level(levels)
    candidates = torch.stack([normalize_attention(level, target_shape) for level in levels])
    index = selected.view(1, *selected.shape, 1, 1).expand(1, *candidates.shape[1:])
    return candidates.gather(0, index).squeeze(0), selected


def daa_pool(global_attention: torch.Tensor, local_attention: torch.Tensor) -> torch.Tensor:
    """Image-level probability ``sigmoid(sum_i X_i * R_i)`` over the last two axes.

    Raises:
        ShapeMismatchError: If the two maps differ in shape
    """
    if global_attention.shape != local_attention.shape:
        raise ShapeMismatchError(
            "daa_pool", tuple(global_attention.shape), tuple(local_attention.shape)
        )
    return torch.sigmoid((global_attention * local_attention).sum(dim=(-2, -1)))


def gap_pool(global_attention: torch.Tensor) -> torch.Tensor:
    """Image-level probability from global average pooling of 𝒳."""
    return torch.sigmoid(global_attention.mean(dim=(-2, -1)))


def weak_loss(
    p: torch.Tensor,
    labels: torch.Tensor,
    granularities: Sequence[Granularity],
) -> torch.Tensor:
    """Image-label BCE averaged over the samples of a batch.

    Args:
        p: Pooled probabilities, shape (B, N)
        labels: Image labels, shape (B, N)
        granularities: Granularity of each sample

    Raises:
        GranularityError: If any sample is unlabeled
        ShapeMismatchError: If ``p`` and ``labels`` differ in shape
    """
    for g in granularities:
        if not g.has_labels:
            raise GranularityError("weak_loss", g.value)
    if len(granularities) != p.shape[0]:
        raise ShapeMismatchError("weak_loss", p.shape[0], len(granularities))
    if p.shape[0] == 0:
        return p.sum() * 0.0
    return binary_cross_entropy(p, labels).mean()


class AttentionPooling(ABC):
    """Strategy turning global and local attention into image-level probabilities."""

    name: ClassVar[str]

    @abstractmethod
    def pool(self, pair: AttentionPair) -> torch.Tensor:
        """Return probabilities of shape (B, N)."""
        ...


class DualAttentionPooling(AttentionPooling):
    """𝒳 weighted by the normalized local attention."""

    name: ClassVar[str] = "daa"

    def pool(self, pair: AttentionPair) -> torch.Tensor:
        return daa_pool(pair.global_attention, pair.local_attention)


class GlobalAveragePooling(AttentionPooling):
    """Plain multi-task global head; the local branch gets no gradient from it."""

    name: ClassVar[str] = "gap"

    def pool(self, pair: AttentionPair) -> torch.Tensor:
        return gap_pool(pair.global_attention)


_POOLINGS: dict[str, type[AttentionPooling]] = {
    cls.name: cls for cls in (DualAttentionPooling, GlobalAveragePooling)
}


def get_pooling(name: str) -> AttentionPooling:
    """Instantiate a pooling strategy by name.

    Raises:
        ConfigError: If the name is unknown
    """
    try:
        return _POOLINGS[name]()
    except KeyError:
        raise ConfigError("pooling", f"unknown pooling '{name}'") from None


def _to_uint8(attention: np.ndarray) -> np.ndarray:
    low, high = float(attention.min()), float(attention.max())
    if high - low <= 0:
        return np.zeros(attention.shape, dtype=np.uint8)
    return np.round(255.0 * (attention - low) / (high - low)).astype(np.uint8)


def export_attention_maps(
    pair: AttentionPair,
    sample_ids: Sequence[str],
    out_dir: str | Path,
    upscale: int = 1,
) -> list[Path]:
    """Write global (sigmoid of 𝒳) and local (ℛ) maps as grayscale PNGs.

    Each map is min-max scaled to 8 bits and written as
    ``<sample_id>_class<c>_{global,local}.png``.

    Returns:
        Paths written
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    global_maps = torch.sigmoid(pair.global_attention).detach().cpu().numpy()
    local_maps = pair.local_attention.detach().cpu().numpy()
    written: list[Path] = []
    for b, sample_id in enumerate(sample_ids):
        for c in range(pair.num_classes):
            for kind, maps in (("global", global_maps), ("local", local_maps)):
                image = Image.fromarray(_to_uint8(maps[b, c]))
                if upscale > 1:
                    image = image.resize(
                        (image.width * upscale, image.height * upscale), Image.Resampling.NEAREST
                    )
                path = out / f"{sample_id}_class{c}_{kind}.png"
                image.save(path)
                written.append(path)
    logger.info("Wrote %d attention maps to %s", len(written), out)
    return written
