"""Hybrid EMD-CWT scalogram features and a lightweight CNN for lung sound classification."""

__version__ = "0.1.0"

TARGET_FS = 22050
SEGMENT_SECONDS = 6.0
MIN_CYCLE_SECONDS = 3.0
