"""Transaction-level flow compiler and simulator."""

__version__ = "0.1.0"
