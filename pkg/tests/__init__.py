"""Tests for quad_residual_lab."""
