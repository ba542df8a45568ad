"""Black-box policy search with traced policy programs."""

__version__ = "0.1.0"
