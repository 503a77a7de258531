"""Standardize fetal-face 3D volumes to a canonical pose from anatomical landmarks."""

from .errors import (CorruptionError, DegenerateInputError, FetalFaceError, FitFailureError,
                     FormatError, InsufficientLandmarksError, InvariantViolationError,
                     OrientationUndeterminedError)
from .landmarks import MODEL_LANDMARKS, PLANES, VOCABULARY, LandmarkSet
from .metrics import (EvalReport, aggregated_loss, evaluate_planes, grid_loss, paired_t_test,
                      plane_angle_error, so3_geodesic, translation_error)
from .plane_fit import FitConfig, PlaneTriple, assign_landmarks, fit_orthogonal_planes, homogenize_normals
from .shape_model import MorphableModel, complete_landmarks, procrustes_align
from .transform import (RigidTransform, compose, cumulative_update, gt_transform, invert,
                        quaternion_from_rotation, quaternion_to_rotation, standardizing_transform)
from .volume import Volume, VolumeMeta

__version__ = "0.1.0"

__all__ = [
    "CorruptionError", "DegenerateInputError", "FetalFaceError", "FitFailureError", "FormatError",
    "InsufficientLandmarksError", "InvariantViolationError", "OrientationUndeterminedError",
    "MODEL_LANDMARKS", "PLANES", "VOCABULARY", "LandmarkSet",
    "EvalReport", "aggregated_loss", "evaluate_planes", "grid_loss", "paired_t_test",
    "plane_angle_error", "so3_geodesic", "translation_error",
    "FitConfig", "PlaneTriple", "assign_landmarks", "fit_orthogonal_planes", "homogenize_normals",
    "MorphableModel", "complete_landmarks", "procrustes_align",
    "RigidTransform", "compose", "cumulative_update", "gt_transform", "invert",
    "quaternion_from_rotation", "quaternion_to_rotation", "standardizing_transform",
    "Volume", "VolumeMeta",
]
