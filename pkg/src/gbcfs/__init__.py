"""Open-world continual feature selection with granular-ball neighborhood rough sets."""

__version__ = "0.1.0"
