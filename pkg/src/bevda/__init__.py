"""Domain-adaptive BEV mapping on a deterministic synthetic multi-camera world."""

__version__ = "0.1.0"
