"""Tests for omnidet."""
