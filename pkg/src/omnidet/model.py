"""The full network: dense detector plus the global attention head."""

import torch
from pydantic import BaseModel
from torch import nn

from .config import Config
from .daa import AttentionPair, GlobalAttentionHead, build_local_attention
from .detector.network import PyramidOutputs, RetinaDetector


class OmniOutputs(BaseModel):
    """Everything one forward pass produces."""

    model_config = {"frozen": True, "arbitrary_types_allowed": True}

    pyramid: PyramidOutputs
    attention: AttentionPair


class OmniDetector(nn.Module):
    """RetinaDetector with a global head reading the backbone map ℳ."""

    def __init__(
        self,
        num_classes: int,
        num_anchors: int,
        channels: int = 32,
        pyramid_levels: int = 3,
        prior_probability: float = 0.01,
    ) -> None:
        super().__init__()
        self.detector = RetinaDetector(
            num_classes,
            num_anchors,
            channels=channels,
            pyramid_levels=pyramid_levels,
            prior_probability=prior_probability,
        )
        self.global_head = GlobalAttentionHead(channels, num_classes)

    @classmethod
    def from_config(
        cls, config: Config, generator: torch.Generator | None = None
    ) -> "OmniDetector":
        """Build and initialize a network for ``config``."""
        model = cls(
            config.num_classes,
            config.num_anchors,
            channels=config.feature_channels,
            pyramid_levels=config.pyramid_levels,
            prior_probability=config.prior_probability,
        )
        model.reset_parameters(generator)
        return model

    def reset_parameters(self, generator: torch.Generator | None = None) -> None:
        self.detector.reset_parameters(generator)
        self.global_head.reset_parameters(generator)

    def forward(self, images: torch.Tensor) -> OmniOutputs:
        pyramid = self.detector(images)
        global_attention = self.global_head(pyramid.backbone_feature)
        local, selected = build_local_attention(
            pyramid.cls_maps, tuple(global_attention.shape[-2:])
        )
        return OmniOutputs(
            pyramid=pyramid,
            attention=AttentionPair(
                global_attention=global_attention,
                local_attention=local,
                selected_levels=selected,
            ),
        )
