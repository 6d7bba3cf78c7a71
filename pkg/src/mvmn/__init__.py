"""Multi-view matching for social link inference in location-aware social networks."""

__version__ = "0.1.0"
