"""Joint multicut clustering of point trajectories and object detections."""

__version__ = "0.1.0"
