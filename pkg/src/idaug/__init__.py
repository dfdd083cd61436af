"""Inpainting-based copy-paste augmentation for salient object detection datasets."""

__version__ = "0.1.0"
