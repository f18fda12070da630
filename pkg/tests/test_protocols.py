"""Tests for Protocol compliance and duck typing support."""

import torch

from omnidet.daa import (
    AttentionPair,
    DualAttentionPooling,
    GlobalAveragePooling,
    gap_pool,
    get_pooling,
)
from omnidet.models import Granularity
from omnidet.protocols import LossTermProtocol, PoolingProtocol
from omnidet.term_registry import TermRegistry
from omnidet.terms import TermOutput


def _pair() -> AttentionPair:
    g = torch.Generator().manual_seed(0)
    return AttentionPair(
        global_attention=torch.rand(2, 3, 4, 4, generator=g),
        local_attention=torch.rand(2, 3, 4, 4, generator=g),
    )


class TestPoolingProtocol:
    """Tests for PoolingProtocol duck typing support."""

    def test_builtin_poolings_satisfy_protocol(self) -> None:
        """Test that built-in poolings satisfy the protocol."""
        for pooling in (DualAttentionPooling(), GlobalAveragePooling(), get_pooling("daa")):
            assert isinstance(pooling, PoolingProtocol)

    def test_duck_typed_pooling(self) -> None:
        """Test that a pooling without inheritance is usable through the protocol."""

        class MaxPooling:
            name = "max"

            def pool(self, pair: AttentionPair) -> torch.Tensor:
                return torch.sigmoid(pair.global_attention.amax(dim=(2, 3)))

        pooling = MaxPooling()
        assert isinstance(pooling, PoolingProtocol)
        assert pooling.pool(_pair()).shape == (2, 3)

    def test_gap_ignores_local_attention(self) -> None:
        """Test that global average pooling reads only the global maps."""
        pair = _pair()
        other = AttentionPair(
            global_attention=pair.global_attention,
            local_attention=torch.zeros_like(pair.local_attention),
        )
        pooling = GlobalAveragePooling()
        assert torch.equal(pooling.pool(pair), pooling.pool(other))
        assert torch.equal(pooling.pool(pair), gap_pool(pair.global_attention))

    def test_object_without_pool(self) -> None:
        """Test that an object lacking pool() does not satisfy the protocol."""

        class NameOnly:
            name = "none"

        assert not isinstance(NameOnly(), PoolingProtocol)


class TestLossTermProtocol:
    """Tests for LossTermProtocol with the registry."""

    def test_duck_typed_term_registers(self) -> None:
        """Test that a duck-typed term replaces the built-in term of the same name."""

        class SilentDistillation:
            name = "distillation"
            components = ("sfl",)
            granularities = frozenset({Granularity.UNLABELED})
            needs_teacher = False

            def compute(self, context) -> TermOutput:
                return TermOutput(losses={"sfl": torch.zeros(())})

        term = SilentDistillation()
        assert isinstance(term, LossTermProtocol)

        registry = TermRegistry()
        registry.register(term)
        assert registry.get("distillation") is term
        assert registry.resolve(["supervised", "distillation"])[1] is term

    def test_incomplete_term(self) -> None:
        """Test that a term without compute() does not satisfy the protocol."""

        class Incomplete:
            name = "partial"
            components = ("bce",)
            granularities = frozenset({Granularity.WEAK})
            needs_teacher = False

        assert not isinstance(Incomplete(), LossTermProtocol)
