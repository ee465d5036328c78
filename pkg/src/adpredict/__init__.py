"""Benchmark harness for measuring whether TV-advert exposure time predicts
purchase behavior better than demographics, on synthetic or supplied panels."""

__version__ = "0.1.0"
