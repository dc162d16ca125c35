"""3D convolutional network engine for spatiotemporal video features."""

__version__ = "0.1.0"
