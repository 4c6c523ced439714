"""Utility functions: seeded generators and atomic file output."""
