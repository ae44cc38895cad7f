"""Tests for axfi-lite."""
