"""ENF-based location forensics."""

__version__ = "0.1.0"
