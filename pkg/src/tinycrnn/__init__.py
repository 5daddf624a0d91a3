"""Streaming Tiny-CRNN keyword spotting in numpy."""

__version__ = "0.1.0"
