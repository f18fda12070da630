"""Global prototype alignment.

Class features are pooled from the backbone map under the local attention,
one running prototype per class is kept by confidence-weighted EMA, and two
metric losses pull features toward their own prototype and push them at
least ``margin`` (squared distance) away from the others. Prototypes are
state, not parameters: no gradient ever reaches them.
"""

import torch
from pydantic import BaseModel, Field, field_validator, model_validator

from .exceptions import ShapeMismatchError


class PrototypeBank(BaseModel):
    """Per-class prototypes with their EMA step counter.

    ``initialized[c]`` is set once class c has received its first update;
    only initialized prototypes take part in the losses.
    """

    model_config = {"frozen": True, "arbitrary_types_allowed": True}

    prototypes: torch.Tensor = Field(..., description="(N, D) prototype matrix")
    initialized: torch.Tensor = Field(..., description="(N,) boolean mask")
    step: int = Field(0, ge=0)
    momentum: float = Field(0.7, ge=0, lt=1)

    @model_validator(mode="after")
    def _check_shapes(self) -> "PrototypeBank":
        if self.prototypes.dim() != 2:
            raise ValueError("prototypes must be an (N, D) matrix")
        if tuple(self.initialized.shape) != (self.prototypes.shape[0],):
            raise ValueError("initialized mask must have one entry per class")
        if not bool(torch.isfinite(self.prototypes).all()):
            raise ValueError("prototypes must be finite")
        return self

    @classmethod
    def create(
        cls,
        num_classes: int,
        dim: int,
        momentum: float = 0.7,
        dtype: torch.dtype = torch.float32,
    ) -> "PrototypeBank":
        """An empty bank at step 0."""
        return cls(
            prototypes=torch.zeros((num_classes, dim), dtype=dtype),
            initialized=torch.zeros(num_classes, dtype=torch.bool),
            momentum=momentum,
        )

    @property
    def beta(self) -> float:
        """EMA coefficient of the next update: 0 at step 0, ``momentum`` after."""
        return 0.0 if self.step == 0 else self.momentum

    @property
    def num_classes(self) -> int:
        return int(self.prototypes.shape[0])

    def state_dict(self) -> dict[str, object]:
        return {
            "prototypes": self.prototypes.clone(),
            "initialized": self.initialized.clone(),
            "step": self.step,
            "momentum": self.momentum,
        }

    @classmethod
    def from_state_dict(cls, state: dict[str, object]) -> "PrototypeBank":
        return cls.model_validate(state)


class CategoryFeatures(BaseModel):
    """Attention-pooled class features of a batch with their confidences.

    ``features`` is (B, N, D); ``confidences`` (global predictions p) and
    ``presence`` (image label y_c = 1) are (B, N). Features of absent classes
    are carried but never used.
    """

    model_config = {"frozen": True, "arbitrary_types_allowed": True}

    features: torch.Tensor
    confidences: torch.Tensor
    presence: torch.Tensor

    @field_validator("presence")
    @classmethod
    def _as_bool(cls, value: torch.Tensor) -> torch.Tensor:
        return value.bool()

    @model_validator(mode="after")
    def _check_shapes(self) -> "CategoryFeatures":
        lead = tuple(self.features.shape[:2])
        for name in ("confidences", "presence"):
            if tuple(getattr(self, name).shape) != lead:
                raise ValueError(f"{name} must have shape {lead}")
        return self

    @property
    def batch_size(self) -> int:
        return int(self.features.shape[0])


def aggregate_features(feature_map: torch.Tensor, attention: torch.Tensor) -> torch.Tensor:
    """Attention-weighted sum of spatial feature vectors.

    Args:
        feature_map: Backbone map ℳ, shape (B, D, H, W)
        attention: Normalized local attention ℛ, shape (B, N, H, W)

    Returns:
        Class features ℱ, shape (B, N, D)

    Raises:
        ShapeMismatchError: If batch or spatial sizes differ
    """
    if feature_map.dim() != 4 or attention.dim() != 4:
        raise ShapeMismatchError(
            "aggregate_features", "4-D inputs", (feature_map.dim(), attention.dim())
        )
    if feature_map.shape[0] != attention.shape[0] or feature_map.shape[-2:] != attention.shape[-2:]:
        raise ShapeMismatchError(
            "aggregate_features", tuple(feature_map.shape), tuple(attention.shape)
        )
    return torch.einsum("bdhw,bnhw->bnd", feature_map, attention.to(feature_map.dtype))


def update_prototypes(bank: PrototypeBank, batch: CategoryFeatures) -> PrototypeBank:
    """One confidence-weighted EMA step of the prototypes.

    For each class c, the batch mean ``m_c = sum_k p_k F_k / sum_k p_k`` runs
    over the samples containing c; ``P_c <- beta P_c + (1 - beta) m_c``.
    Classes absent from the batch, or whose confidences sum to 0, keep their
    prototype. The step counter always advances.
    """
    dtype = bank.prototypes.dtype
    features = batch.features.detach().to(dtype)
    weights = batch.confidences.detach().to(dtype) * batch.presence.to(dtype)
    total = weights.sum(dim=0)  # (N,)
    updated = total > 0
    weighted = torch.einsum("bn,bnd->nd", weights, features)
    mean = weighted / total.clamp(min=torch.finfo(dtype).tiny).unsqueeze(1)
    beta = bank.beta
    blended = beta * bank.prototypes + (1.0 - beta) * mean
    prototypes = torch.where(updated.unsqueeze(1), blended, bank.prototypes)
    return PrototypeBank(
        prototypes=prototypes,
        initialized=bank.initialized | updated,
        step=bank.step + 1,
        momentum=bank.momentum,
    )


def _squared_distances(features: torch.Tensor, prototypes: torch.Tensor) -> torch.Tensor:
    """(B, N, D) x (N, D) -> (B, N_feature, N_prototype)."""
    diff = features.unsqueeze(2) - prototypes.unsqueeze(0).unsqueeze(0)
    return (diff**2).sum(dim=-1)


def intra_loss(batch: CategoryFeatures, bank: PrototypeBank) -> torch.Tensor:
    """Compactness: ``(1/N) sum_c ||F_c - P_c||^2`` over present classes, mean over samples."""
    features = batch.features
    if batch.batch_size == 0:
        return features.sum() * 0.0
    prototypes = bank.prototypes.detach().to(features.dtype)
    num_classes = bank.num_classes
    own = ((features - prototypes.unsqueeze(0)) ** 2).sum(dim=-1)  # (B, N)
    mask = (batch.presence & bank.initialized.unsqueeze(0)).to(features.dtype)
    return ((own * mask).sum(dim=1) / num_classes).mean()


def inter_loss(batch: CategoryFeatures, bank: PrototypeBank, margin: float = 1.0) -> torch.Tensor:
    """Separability hinge ``max(0, margin - ||F_j - P_c||^2)`` over pairs j != c.

    j ranges over present classes, c over initialized prototypes; the sum is
    normalized by N(N - 1) per sample and averaged over samples.
    """
    features = batch.features
    num_classes = bank.num_classes
    if batch.batch_size == 0 or num_classes < 2:
        return features.sum() * 0.0
    prototypes = bank.prototypes.detach().to(features.dtype)
    distances = _squared_distances(features, prototypes)  # (B, j, c)
    hinge = torch.relu(margin - distances)
    off_diagonal = ~torch.eye(num_classes, dtype=torch.bool, device=features.device)
    pairs = (
        batch.presence.unsqueeze(2)
        & bank.initialized.view(1, 1, -1)
        & off_diagonal.unsqueeze(0)
    ).to(features.dtype)
    per_sample = (hinge * pairs).sum(dim=(1, 2)) / (num_classes * (num_classes - 1))
    return per_sample.mean()
