"""Rate-distortion simulator for pixel-based and parameter-based radiance field streaming."""

__version__ = "0.1.0"
