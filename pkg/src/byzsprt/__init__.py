"""Sequential hypothesis testing with Byzantine-compromised sensors."""

__version__ = "0.1.0"
