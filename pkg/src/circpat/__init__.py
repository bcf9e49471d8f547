"""Two-stage photoacoustic reconstruction for stacks of circular integrating detectors."""

__version__ = "0.1.0"
