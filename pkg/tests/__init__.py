"""Tests for smtrt."""
