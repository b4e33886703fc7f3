"""Vanishing points of document images via the fast Hough transform.

Modules: :mod:`fht` (dyadic transform and adjoint), :mod:`geometry`
(Hough coordinate algebra), :mod:`nn` (numpy layer stack and HoughNet),
:mod:`pipeline` (detectors), :mod:`rectify`, :mod:`synth`,
:mod:`training` and :mod:`cli`.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    DegenerateError,
    DimensionError,
    HoughVPError,
    InvalidMapError,
    NoStructureError,
    OutOfQuadrantError,
    RegimeError,
    TrainingDivergenceError,
    UnrepresentableTargetError,
)
from .fht import Quadrant, brute_force_hough, fht_join, fht_quadrant, hough_transform, hough_transform_adjoint  # noqa: E402
from .nn import build_houghnet  # noqa: E402
from .pipeline import VanishingPair, classical_detect, network_detect  # noqa: E402
from .rectify import Quad, homography_from_vps, metric_d1, metric_d2  # noqa: E402
from .synth import gen_document, gen_line_bundle  # noqa: E402

__all__ = [
    "__version__",
    "HoughVPError",
    "DimensionError",
    "OutOfQuadrantError",
    "DegenerateError",
    "RegimeError",
    "NoStructureError",
    "InvalidMapError",
    "UnrepresentableTargetError",
    "TrainingDivergenceError",
    "Quadrant",
    "fht_quadrant",
    "fht_join",
    "brute_force_hough",
    "hough_transform",
    "hough_transform_adjoint",
    "build_houghnet",
    "VanishingPair",
    "classical_detect",
    "network_detect",
    "Quad",
    "homography_from_vps",
    "metric_d1",
    "metric_d2",
    "gen_document",
    "gen_line_bundle",
]
