"""Instruction-tuning data generation and replay planning over dataset metadata."""

__version__ = "0.1.0"
