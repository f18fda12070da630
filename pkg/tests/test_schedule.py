"""Tests for the learning-rate schedule."""

import pytest

from omnidet.schedule import lr_schedule, stagnant_evaluations


class TestStagnantEvaluations:
    """Tests for stagnant_evaluations."""

    def test_empty(self):
        """Test that no history means no stagnation."""
        assert stagnant_evaluations([]) == 0

    def test_improving(self):
        """Test a strictly improving history."""
        assert stagnant_evaluations([0.1, 0.2, 0.3]) == 0

    def test_trailing_count(self):
        """Test that a tie with the best counts as stagnant."""
        assert stagnant_evaluations([0.1, 0.2, 0.2, 0.15]) == 2

    def test_threshold(self):
        """Test that gains below the threshold do not reset the count."""
        assert stagnant_evaluations([0.5, 0.50005, 0.5001], threshold=1e-3) == 2
        assert stagnant_evaluations([0.5, 0.502], threshold=1e-3) == 0

    def test_reset_after_improvement(self):
        """Test that a new best resets the run."""
        assert stagnant_evaluations([0.3, 0.1, 0.1, 0.4, 0.2]) == 1


class TestLrSchedule:
    """Tests for lr_schedule."""

    def test_no_decay_while_improving(self):
        """Test that an improving run keeps its rate."""
        assert lr_schedule([0.1, 0.2], 1e-3, patience=1) == 1e-3

    def test_decay_at_patience(self):
        """Test that the rate drops once the stagnant run reaches patience."""
        history = [0.5, 0.4, 0.4]
        assert lr_schedule(history[:2], 1e-3, patience=2) == 1e-3
        assert lr_schedule(history, 1e-3, patience=2) == pytest.approx(1e-4)

    def test_decay_at_multiples_only(self):
        """Test that the rate drops again only after another full patience."""
        history = [0.5, 0.4, 0.4, 0.4]
        assert lr_schedule(history, 1e-4, patience=2) == 1e-4
        assert lr_schedule(history + [0.4], 1e-4, patience=2) == pytest.approx(1e-5)

    def test_floor(self):
        """Test that the rate never goes below the floor."""
        assert lr_schedule([0.5, 0.4], 1e-3, patience=1, floor=5e-4) == pytest.approx(5e-4)
        assert lr_schedule([0.5, 0.4], 1e-9, patience=1, floor=1e-8) == 1e-9

    def test_factor(self):
        """Test a custom decay factor."""
        assert lr_schedule([0.5, 0.4], 1.0, patience=1, factor=0.5) == 0.5
