"""Feature-level fusion experiments for origination-fraud detection."""

__version__ = "0.1.0"
