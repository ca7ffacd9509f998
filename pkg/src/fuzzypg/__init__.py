"""Policy-gradient learning of fuzzy rule weights, with a car-following testbed."""

__version__ = "0.1.0"
