"""Cardinal-POS-pattern guided hierarchical attention for headline incongruence."""

__version__ = "0.1.0"
