"""Zero-interaction pairing from shared vehicle context."""

__version__ = "0.1.0"
