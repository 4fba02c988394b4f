"""Self-supervised multi-view stereo toolkit.

Plane-sweep depth estimation with photometric and flow-depth
consistency losses (analytic gradients included), ensemble-based
uncertainty with certainty masking, depth-map fusion, and point-cloud
benchmark metrics — all verifiable end to end on deterministic
synthetic scenes with exact ground truth.
"""

__version__ = "0.1.0"

from . import fusion_eval, geometry, kernels, losses, matcher, scene_io, spatial, synth, uncertainty

__all__ = [
    "fusion_eval",
    "geometry",
    "kernels",
    "losses",
    "matcher",
    "scene_io",
    "spatial",
    "synth",
    "uncertainty",
    "__version__",
]
