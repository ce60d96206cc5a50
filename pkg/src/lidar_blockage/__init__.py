"""2-D LiDAR street-scene simulation, static-clutter removal, and
learned blockage prediction for line-of-sight radio links."""

__version__ = "0.1.0"
