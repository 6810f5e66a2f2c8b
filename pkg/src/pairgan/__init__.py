"""Joint image and class-map translation between unpaired domains."""

__version__ = "0.1.0"
