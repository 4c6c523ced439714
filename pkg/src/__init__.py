"""
lframes: O(d)-equivariant message passing via local canonicalization with tensorial messages.
"""
__version__ = "1.0.0"
