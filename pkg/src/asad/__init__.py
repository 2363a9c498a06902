"""Auditory spatial attention detection with dense 3D convolutional networks."""

__version__ = "0.1.0"
