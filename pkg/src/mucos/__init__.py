"""Negative-sampling-free knowledge graph completion from density-sampled contexts."""

__version__ = "0.1.0"
