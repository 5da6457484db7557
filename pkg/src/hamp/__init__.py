"""Human-aware motion planning with time-dilation costmaps."""

__version__ = "0.1.0"
