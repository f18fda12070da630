"""Finite-difference checks of the analytic loss gradients.

Every check runs in float64 over at least 100 input entries drawn at random,
with a relative tolerance of 1e-4.
"""

import pytest
import torch
from torch.autograd import gradcheck

from omnidet.daa import daa_pool, normalize_attention, weak_loss
from omnidet.detector.losses import focal_loss, smooth_l1
from omnidet.distill import soft_focal_loss
from omnidet.gpa import CategoryFeatures, PrototypeBank, inter_loss, intra_loss
from omnidet.models import Granularity

RTOL = 1e-4
ATOL = 1e-8


def _check(fn, *inputs) -> bool:
    return gradcheck(fn, inputs, eps=1e-6, atol=ATOL, rtol=RTOL)


def _randn(*shape, generator, requires_grad=True):
    return torch.randn(
        *shape, dtype=torch.float64, generator=generator, requires_grad=requires_grad
    )


class TestDetectionGradients:
    """Gradients of the supervised detection losses."""

    def test_focal_loss(self, generator):
        """Test the focal loss through the sigmoid at 100 logits."""
        logits = _randn(25, 4, generator=generator)
        targets = (torch.rand(25, 4, generator=generator) < 0.2).to(torch.float64)
        assert _check(lambda x: focal_loss(torch.sigmoid(x), targets, alpha=0.9), logits)

    def test_smooth_l1(self, generator):
        """Test both branches of smooth L1 at 120 offsets."""
        pred = 0.3 * torch.randn(30, 4, dtype=torch.float64, generator=generator)
        pred.requires_grad_()
        target = _randn(30, 4, generator=generator, requires_grad=False) * 0.1
        assert (pred - target).abs().lt(1.0 / 9.0).any()
        assert (pred - target).abs().gt(1.0 / 9.0).any()
        assert _check(lambda x: smooth_l1(x, target), pred)


class TestSoftFocalGradients:
    """Gradients of the distillation loss."""

    def test_soft_focal_loss(self, generator):
        """Test the soft focal loss at 100 student logits against soft targets."""
        logits = _randn(20, 5, generator=generator)
        q_teacher = torch.rand(20, 5, dtype=torch.float64, generator=generator)
        assert _check(lambda x: soft_focal_loss(torch.sigmoid(x), q_teacher), logits)

    def test_with_hard_targets(self, generator):
        """Test the gradient when teacher targets are 0 or 1."""
        logits = _randn(10, 10, generator=generator)
        q_teacher = (torch.rand(10, 10, generator=generator) < 0.5).to(torch.float64)
        assert _check(lambda x: soft_focal_loss(torch.sigmoid(x), q_teacher), logits)


class TestAttentionGradients:
    """Gradients of the image-label loss through dual attention pooling."""

    GRANULARITIES = [Granularity.FULL, Granularity.WEAK]

    def _loss(self, labels, target_shape):
        def fn(global_attention, raw_local):
            local = normalize_attention(torch.exp(raw_local), target_shape)
            return weak_loss(daa_pool(global_attention, local), labels, self.GRANULARITIES)

        return fn

    def test_same_resolution(self, generator):
        """Test gradients with respect to both attention maps at 192 entries."""
        global_attention = _randn(2, 3, 4, 4, generator=generator)
        raw_local = _randn(2, 3, 4, 4, generator=generator)
        labels = torch.tensor([[1.0, 0.0, 1.0], [0.0, 1.0, 0.0]], dtype=torch.float64)
        assert _check(self._loss(labels, (4, 4)), global_attention, raw_local)

    def test_through_resize(self, generator):
        """Test gradients when the local attention is resized before pooling."""
        global_attention = _randn(2, 3, 8, 8, generator=generator)
        raw_local = _randn(2, 3, 4, 4, generator=generator)
        labels = torch.tensor([[0.0, 1.0, 1.0], [1.0, 0.0, 0.0]], dtype=torch.float64)
        assert _check(self._loss(labels, (8, 8)), global_attention, raw_local)


class TestPrototypeGradients:
    """Gradients of the prototype alignment losses."""

    @pytest.fixture
    def bank(self, generator):
        prototypes = 0.5 * torch.randn(4, 4, dtype=torch.float64, generator=generator)
        return PrototypeBank(
            prototypes=prototypes,
            initialized=torch.tensor([True, True, False, True]),
            step=3,
        )

    @pytest.fixture
    def presence(self, generator):
        presence = torch.rand(8, 4, generator=generator) < 0.6
        assert bool(presence.any())
        return presence

    @staticmethod
    def _batch(features, presence):
        return CategoryFeatures(
            features=features,
            confidences=torch.ones(presence.shape, dtype=torch.float64),
            presence=presence,
        )

    def test_intra_loss(self, generator, bank, presence):
        """Test the compactness loss at 128 feature entries."""
        features = _randn(8, 4, 4, generator=generator)
        assert _check(lambda x: intra_loss(self._batch(x, presence), bank), features)

    def test_inter_loss(self, generator, bank, presence):
        """Test the separability hinge at 128 feature entries with active pairs."""
        features = 0.5 * torch.randn(8, 4, 4, dtype=torch.float64, generator=generator)
        features.requires_grad_()

        def fn(x):
            return inter_loss(self._batch(x, presence), bank, margin=2.0)

        assert float(fn(features.detach())) > 0.0
        assert _check(fn, features)
