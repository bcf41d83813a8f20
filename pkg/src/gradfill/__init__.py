"""Infilling for sequence-to-sequence models by gradient search over blank embeddings."""

__version__ = "0.1.0"
