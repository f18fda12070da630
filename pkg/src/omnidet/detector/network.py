"""Miniature anchor-based one-stage detector.

A four-block stride-2 convolutional backbone, a top-down feature pyramid
with M levels (strides 8, 16, 32, ...) and classification / box-regression
heads shared across levels, shaped like RetinaNet at toy scale.
"""

import math
from collections.abc import Sequence

import torch
import torch.nn.functional as F
from pydantic import BaseModel
from torch import nn

from ..exceptions import ShapeMismatchError


class PyramidOutputs(BaseModel):
    """Dense head outputs of one forward pass.

    Per level m: ``cls_logits[m]`` and ``cls_maps[m]`` (probabilities) have
    shape (B, N, A, H_m, W_m); ``reg_maps[m]`` has shape (B, 4, A, H_m, W_m).
    ``backbone_feature`` is the deepest backbone map ℳ, shape (B, D, H_0, W_0).
    """

    model_config = {"frozen": True, "arbitrary_types_allowed": True}

    cls_logits: tuple[torch.Tensor, ...]
    cls_maps: tuple[torch.Tensor, ...]
    reg_maps: tuple[torch.Tensor, ...]
    backbone_feature: torch.Tensor

    @property
    def num_levels(self) -> int:
        return len(self.cls_maps)

    def detach(self) -> "PyramidOutputs":
        """Return a copy cut from the autograd graph."""
        return PyramidOutputs(
            cls_logits=tuple(t.detach() for t in self.cls_logits),
            cls_maps=tuple(t.detach() for t in self.cls_maps),
            reg_maps=tuple(t.detach() for t in self.reg_maps),
            backbone_feature=self.backbone_feature.detach(),
        )


def flatten_levels(maps: Sequence[torch.Tensor]) -> torch.Tensor:
    """Flatten per-level (B, C, A, H, W) maps to (B, K, C).

    K enumerates anchors level by level, anchor-major then row then column,
    matching :class:`omnidet.detector.anchors.AnchorSet`.
    """
    flat = [m.permute(0, 2, 3, 4, 1).reshape(m.shape[0], -1, m.shape[1]) for m in maps]
    return torch.cat(flat, dim=1)


def _conv_block(in_channels: int, out_channels: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_channels, out_channels, 3, stride=2, padding=1),
        nn.ReLU(inplace=True),
        nn.Conv2d(out_channels, out_channels, 3, padding=1),
        nn.ReLU(inplace=True),
    )


class Backbone(nn.Module):
    """Four stride-2 blocks; returns the stride-8 and stride-16 maps."""

    def __init__(self, channels: int) -> None:
        super().__init__()
        half = max(channels // 2, 1)
        self.blocks = nn.ModuleList(
            [
                _conv_block(1, half),
                _conv_block(half, channels),
                _conv_block(channels, channels),
                _conv_block(channels, channels),
            ]
        )

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        x = self.blocks[0](x)
        x = self.blocks[1](x)
        c3 = self.blocks[2](x)
        c4 = self.blocks[3](c3)
        return c3, c4


class PyramidNeck(nn.Module):
    """Top-down pyramid: P3 and P4 from laterals, P5+ by strided convolutions."""

    def __init__(self, channels: int, levels: int) -> None:
        super().__init__()
        self.lateral3 = nn.Conv2d(channels, channels, 1)
        self.lateral4 = nn.Conv2d(channels, channels, 1)
        self.smooth3 = nn.Conv2d(channels, channels, 3, padding=1)
        self.smooth4 = nn.Conv2d(channels, channels, 3, padding=1)
        self.extra = nn.ModuleList(
            nn.Conv2d(channels, channels, 3, stride=2, padding=1)
            for _ in range(levels - 2)
        )

    def forward(self, c3: torch.Tensor, c4: torch.Tensor) -> list[torch.Tensor]:
        p4 = self.lateral4(c4)
        p3 = self.lateral3(c3) + F.interpolate(p4, size=c3.shape[-2:], mode="nearest")
        levels = [self.smooth3(p3), self.smooth4(p4)]
        x = c4
        for i, conv in enumerate(self.extra):
            x = conv(x if i == 0 else F.relu(x))
            levels.append(x)
        return levels


class DenseHead(nn.Module):
    """Shared convolutional subnet predicting ``outputs_per_anchor`` values per anchor."""

    def __init__(
        self, channels: int, num_anchors: int, outputs_per_anchor: int, depth: int = 2
    ) -> None:
        super().__init__()
        layers: list[nn.Module] = []
        for _ in range(depth):
            layers += [nn.Conv2d(channels, channels, 3, padding=1), nn.ReLU(inplace=True)]
        self.conv = nn.Sequential(*layers)
        self.out = nn.Conv2d(channels, num_anchors * outputs_per_anchor, 3, padding=1)
        self.num_anchors = num_anchors
        self.outputs_per_anchor = outputs_per_anchor

    def forward(self, feature: torch.Tensor) -> torch.Tensor:
        x = self.out(self.conv(feature))
        b, _, h, w = x.shape
        # (B, A*C, H, W) -> (B, C, A, H, W)
        x = x.view(b, self.num_anchors, self.outputs_per_anchor, h, w)
        return x.permute(0, 2, 1, 3, 4)


class RetinaDetector(nn.Module):
    """Backbone, pyramid and the two dense heads.

    Args:
        num_classes: Number of classes N
        num_anchors: Anchors per location A
        channels: Feature channels D
        pyramid_levels: Number of pyramid levels M (>= 2)
        prior_probability: Initial foreground probability of every anchor
    """

    def __init__(
        self,
        num_classes: int,
        num_anchors: int,
        channels: int = 32,
        pyramid_levels: int = 3,
        prior_probability: float = 0.01,
    ) -> None:
        super().__init__()
        if pyramid_levels < 2:
            raise ValueError("At least two pyramid levels are required")
        self.num_classes = num_classes
        self.num_anchors = num_anchors
        self.channels = channels
        self.pyramid_levels = pyramid_levels
        self.prior_probability = prior_probability
        self.backbone = Backbone(channels)
        self.neck = PyramidNeck(channels, pyramid_levels)
        self.cls_head = DenseHead(channels, num_anchors, num_classes)
        self.reg_head = DenseHead(channels, num_anchors, 4)

    @property
    def coarsest_stride(self) -> int:
        return 8 * 2 ** (self.pyramid_levels - 1)

    def reset_parameters(self, generator: torch.Generator | None = None) -> None:
        """Initialize all weights from ``generator``.

        Backbone and neck use He initialization; head convolutions use
        N(0, 0.01) with zero bias, except the classification output whose
        bias encodes the prior probability.
        """
        for module in (self.backbone, self.neck):
            for layer in module.modules():
                if isinstance(layer, nn.Conv2d):
                    nn.init.kaiming_normal_(layer.weight, nonlinearity="relu", generator=generator)
                    nn.init.zeros_(layer.bias)
        for head in (self.cls_head, self.reg_head):
            for layer in head.modules():
                if isinstance(layer, nn.Conv2d):
                    nn.init.normal_(layer.weight, std=0.01, generator=generator)
                    nn.init.zeros_(layer.bias)
        prior = self.prior_probability
        nn.init.constant_(self.cls_head.out.bias, -math.log((1 - prior) / prior))

    def forward(self, images: torch.Tensor) -> PyramidOutputs:
        """Run the detector.

        Args:
            images: (B, 1, H, W) or (B, H, W) tensor with values in [0, 1];
                H and W must be divisible by the coarsest stride

        Returns:
            PyramidOutputs
        """
        if images.dim() == 3:
            images = images.unsqueeze(1)
        if images.dim() != 4 or images.shape[1] != 1:
            raise ShapeMismatchError("forward", "(B, 1, H, W)", tuple(images.shape))
        stride = self.coarsest_stride
        if images.shape[-1] % stride or images.shape[-2] % stride:
            raise ShapeMismatchError(
                "forward", f"H, W divisible by {stride}", tuple(images.shape[-2:])
            )
        x = (images - 0.5) / 0.25
        c3, c4 = self.backbone(x)
        levels = self.neck(c3, c4)
        cls_logits = tuple(self.cls_head(f) for f in levels)
        return PyramidOutputs(
            cls_logits=cls_logits,
            cls_maps=tuple(torch.sigmoid(t) for t in cls_logits),
            reg_maps=tuple(self.reg_head(f) for f in levels),
            backbone_feature=c4,
        )
