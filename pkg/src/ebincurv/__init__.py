"""Scalar curvature along volume-preserving L2 geodesics of metrics on flat tori."""

__version__ = "0.1.0"
