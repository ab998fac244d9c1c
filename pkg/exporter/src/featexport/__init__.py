"""Offline feature exporter for the video saliency pipeline.

Reads a segmented video (frames, label maps, track file), runs pluggable
region-level and clip-level embedding backbones, and writes the pipeline's
binary feature file together with a manifest describing the backbones and
preprocessing.
"""

__version__ = "0.1.0"
