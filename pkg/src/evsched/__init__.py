"""Day-ahead scheduling simulator comparing EV-based and station-based aggregation."""

__version__ = "0.1.0"
