"""Equivariant local frames: construction, refinement and stability metrics."""
