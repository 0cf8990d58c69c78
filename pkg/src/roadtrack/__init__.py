"""Roadside lidar object tracking with grid-based dimension estimation."""

__version__ = "0.1.0"
