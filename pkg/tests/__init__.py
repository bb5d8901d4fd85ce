"""Tests for svilc."""
