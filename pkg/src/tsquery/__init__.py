"""Search-then-verify natural-language querying over embedded time-series stores."""

__version__ = "0.1.0"
