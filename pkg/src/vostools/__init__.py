"""Video object segmentation tooling: data, augmentation, losses, calibration, metrics."""

__version__ = "0.1.0"
