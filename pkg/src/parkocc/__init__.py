"""Synthetic parking-lot LiDAR datasets, dense occupancy ground truth and metrics."""

__version__ = "0.1.0"
