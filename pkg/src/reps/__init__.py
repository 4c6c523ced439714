"""Representation algebra for O(d): specs, tensor representations, changes of basis."""
