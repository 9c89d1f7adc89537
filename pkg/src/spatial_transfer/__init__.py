"""Spatial prediction with a radial-basis-embedded network and transfer learning.

A feed-forward network over a multi-resolution Wendland embedding is pretrained
on a large source sample of a spatial surface and fine-tuned on a small target
sample, then benchmarked against a target-only network and ordinary Kriging.
"""

__version__ = "0.1.0"
