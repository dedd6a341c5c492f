"""Attention-based NMT with temporal attention, built on a small numpy autodiff."""

__version__ = "0.1.0"
