"""Closed-loop feedback registration for consecutive images of a moving target.

Library layout:

* ``geometry``   - homographies, DLT estimation, translation models, RMSE
* ``image_io``   - PGM read/write for grayscale rasters
* ``features``   - reference keypoint extractor and patch descriptors
* ``matching``   - SSD kernels, gated matcher, RANSAC and NCC baselines
* ``feedback``   - the closed registration loop and its motion prior
* ``synthetic``  - ground-truthed grid-pattern benchmark generator
* ``stitching``  - homography chaining and panorama blending
* ``evaluation`` - accuracy/count/timing reports
* ``cli``        - the ``seqreg`` command
"""

__version__ = "0.1.0"

from .features import ExtractorConfig, FeatureSet, extract
from .feedback import (
    FeedbackState,
    MotionPrior,
    RegistrationConfig,
    SpeedUncertainty,
    register_pair,
    register_sequence,
)
from .geometry import (
    CorrespondenceSet,
    Homography,
    TranslationModel,
    estimate_homography_dlt,
    estimate_translation,
    rmse,
)
from .matching import GateConfig, MatchSet, match_gated, match_lowest_ssd
from .synthetic import DistortionSpec, GridSpec, NoiseSpec, generate_sequence

__all__ = [
    "CorrespondenceSet",
    "DistortionSpec",
    "ExtractorConfig",
    "FeatureSet",
    "FeedbackState",
    "GateConfig",
    "GridSpec",
    "Homography",
    "MatchSet",
    "MotionPrior",
    "NoiseSpec",
    "RegistrationConfig",
    "SpeedUncertainty",
    "TranslationModel",
    "estimate_homography_dlt",
    "estimate_translation",
    "extract",
    "generate_sequence",
    "match_gated",
    "match_lowest_ssd",
    "register_pair",
    "register_sequence",
    "rmse",
]
