"""Minimal reverse-mode differentiable compute core."""
