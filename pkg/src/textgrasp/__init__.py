"""Toolkit for text-interfaced planar grasp prediction.

Builds instruction-tuning grasp datasets from Cornell-style corpora,
parses grasp poses out of free-form model replies, scores them with the
rotated-rectangle metric, runs fold-based evaluations against chat-style
multimodal endpoints (or deterministic mocks), and hosts interactive
refinement sessions behind an HTTP service.
"""

from .geometry import (
    GraspEvalOutcome,
    GraspPose,
    GraspRectangle,
    MetricThresholds,
    angle_difference,
    denormalize_pose,
    normalize_pose,
    pose_to_rect,
    rect_iou,
    rect_to_pose,
    rectangle_metric,
    wrap_half_pi,
)
from .parsing import ParsedOutput, parse_pose, validate_answer

__all__ = [
    "GraspEvalOutcome",
    "GraspPose",
    "GraspRectangle",
    "MetricThresholds",
    "ParsedOutput",
    "angle_difference",
    "denormalize_pose",
    "normalize_pose",
    "parse_pose",
    "pose_to_rect",
    "rect_iou",
    "rect_to_pose",
    "rectangle_metric",
    "validate_answer",
    "wrap_half_pi",
]

__version__ = "0.1.0"
