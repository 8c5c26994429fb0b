"""Pseudoinverse physics-informed networks: transferable embeddings with
closed-form output-head adaptation."""

__version__ = "0.1.0"
