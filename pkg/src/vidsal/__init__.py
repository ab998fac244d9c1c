"""Batch video salient-object detection.

Segments a clip at multiple scales into temporally linked regions, scores
each region's foreground probability from aggregated descriptors, smooths
labels with an exact min-cut over a spatiotemporal region graph per video
block, and fuses block and scale results into per-frame saliency maps.
"""

__version__ = "0.1.0"
