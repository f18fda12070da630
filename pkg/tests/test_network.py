"""Tests for the dense detector network."""

import pytest
import torch

from omnidet.detector.network import RetinaDetector, flatten_levels
from omnidet.exceptions import ShapeMismatchError


@pytest.fixture
def detector(generator):
    net = RetinaDetector(num_classes=3, num_anchors=3, channels=8, pyramid_levels=3)
    net.reset_parameters(generator)
    return net.eval()


class TestRetinaDetector:
    """Tests for RetinaDetector."""

    def test_output_shapes(self, detector):
        """Test per-level shapes for a 64x64 input with M=3, N=3, A=3."""
        out = detector(torch.rand(2, 1, 64, 64))
        assert out.num_levels == 3
        assert [tuple(m.shape) for m in out.cls_maps] == [
            (2, 3, 3, 8, 8),
            (2, 3, 3, 4, 4),
            (2, 3, 3, 2, 2),
        ]
        assert [tuple(m.shape) for m in out.reg_maps] == [
            (2, 4, 3, 8, 8),
            (2, 4, 3, 4, 4),
            (2, 4, 3, 2, 2),
        ]
        assert tuple(out.backbone_feature.shape) == (2, 8, 4, 4)

    def test_accepts_channelless_batch(self, detector):
        """Test that (B, H, W) input is treated as one channel."""
        out = detector(torch.rand(1, 32, 32))
        assert tuple(out.cls_maps[0].shape) == (1, 3, 3, 4, 4)

    def test_deterministic(self, detector):
        """Test that identical inputs give identical outputs."""
        x = torch.rand(1, 1, 64, 64)
        a, b = detector(x), detector(x)
        for m, n in zip(a.cls_maps, b.cls_maps):
            assert torch.equal(m, n)

    def test_prior_probability(self, detector):
        """Test that freshly initialized class probabilities sit at the prior."""
        out = detector(torch.rand(1, 1, 64, 64))
        for m in out.cls_maps:
            assert torch.allclose(m, torch.full_like(m, 0.01), atol=1e-3)

    def test_same_seed_same_weights(self):
        """Test that initialization is a function of the generator."""
        nets = []
        for _ in range(2):
            net = RetinaDetector(num_classes=2, num_anchors=1, channels=4, pyramid_levels=2)
            net.reset_parameters(torch.Generator().manual_seed(7))
            nets.append(net)
        for p, q in zip(nets[0].parameters(), nets[1].parameters()):
            assert torch.equal(p, q)

    def test_probabilities_match_logits(self, detector):
        """Test that cls_maps is the sigmoid of cls_logits."""
        out = detector(torch.rand(1, 1, 32, 32))
        assert torch.allclose(out.cls_maps[1], torch.sigmoid(out.cls_logits[1]))

    def test_indivisible_size(self, detector):
        """Test that sizes not divisible by the coarsest stride are rejected."""
        with pytest.raises(ShapeMismatchError, match="divisible by 32"):
            detector(torch.rand(1, 1, 60, 60))

    def test_wrong_channels(self, detector):
        """Test that multi-channel input is rejected."""
        with pytest.raises(ShapeMismatchError):
            detector(torch.rand(1, 3, 64, 64))

    def test_single_level_rejected(self):
        """Test that at least two pyramid levels are required."""
        with pytest.raises(ValueError):
            RetinaDetector(num_classes=1, num_anchors=1, pyramid_levels=1)

    def test_detach(self, detector):
        """Test that detached outputs carry no graph."""
        out = detector.train()(torch.rand(1, 1, 32, 32))
        assert out.cls_maps[0].requires_grad
        assert not any(m.requires_grad for m in out.detach().cls_maps)


class TestFlattenLevels:
    """Tests for flatten_levels."""

    def test_anchor_major_order(self):
        """Test that entries run anchor, row, column within a level."""
        level = torch.arange(2 * 3 * 4, dtype=torch.float32).view(1, 1, 2, 3, 4)
        flat = flatten_levels([level])
        assert flat.shape == (1, 24, 1)
        assert flat[0, :, 0].tolist() == list(range(24))

    def test_levels_concatenated(self):
        """Test that levels follow each other and channels become the last axis."""
        a = torch.zeros(2, 3, 1, 2, 2)
        b = torch.ones(2, 3, 1, 1, 1)
        flat = flatten_levels([a, b])
        assert flat.shape == (2, 5, 3)
        assert torch.all(flat[:, 4] == 1) and torch.all(flat[:, :4] == 0)
