"""Planar antipodal grasp geometry.

Conventions (pixel coordinates, y down):
  * A grasp pose is ``(x, y, theta)`` with the center normalized by image
    width/height and ``theta`` the closing-axis angle in radians, wrapped
    to the half-open interval [-pi/2, pi/2) with period pi (antipodal
    grasps are symmetric under 180-degree rotation).
  * A grasp rectangle is four ordered vertices ``v0..v3`` where ``v0v1``
    and ``v2v3`` are the jaw-plate edges. The gripper opening ``w`` is the
    distance v1->v2, the plate length is the distance v0->v1, and the
    closing axis points from the midpoint of v0v1 to the midpoint of v2v3.

Everything here is pure and stateless.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_EPS = 1e-9

HALF_PI = math.pi / 2.0


class GeometryError(ValueError):
    """Invalid geometric input."""


class PixelRangeError(GeometryError):
    """Pixel coordinate outside the image bounds (corrupt annotation)."""


class DegenerateRectangleError(GeometryError):
    """Rectangle with a zero-length edge."""


def wrap_half_pi(theta: float) -> float:
    """Wrap an angle into [-pi/2, pi/2) with period pi; +pi/2 maps to -pi/2."""
    if -HALF_PI <= theta < HALF_PI:
        return theta  # already canonical; the shift-and-fmod path costs a ulp
    t = math.fmod(theta + HALF_PI, math.pi)
    if t < 0.0:
        t += math.pi
    return t - HALF_PI


@dataclass(frozen=True)
class GraspPose:
    """Normalized planar grasp: center in [0,1]^2, theta in [-pi/2, pi/2)."""

    x: float
    y: float
    theta: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.x <= 1.0 and 0.0 <= self.y <= 1.0):
            raise GeometryError(f"normalized center out of range: ({self.x}, {self.y})")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_half_pi(float(self.theta)))


@dataclass(frozen=True)
class MetricThresholds:
    """Success thresholds for the rectangle metric (strict comparisons)."""

    min_iou: float = 0.25
    max_angle_deg: float = 30.0

    def __post_init__(self) -> None:
        if not (0.0 < self.min_iou < 1.0):
            raise GeometryError(f"min_iou must be in (0,1), got {self.min_iou}")
        if not (0.0 < self.max_angle_deg <= 90.0):
            raise GeometryError(f"max_angle_deg must be in (0,90], got {self.max_angle_deg}")


@dataclass(frozen=True)
class GraspEvalOutcome:
    success: bool
    best_iou: float
    best_angle_diff_deg: float
    matched_gt_index: int | None


class GraspRectangle:
    """Oriented grasp rectangle stored as 4 ordered pixel vertices.

    Vertices are assumed to already satisfy the edge conventions above;
    use :meth:`from_raw_vertices` to canonicalize an arbitrary (possibly
    hand-annotated, slightly skewed) 4-point quad first.
    """

    __slots__ = ("vertices",)

    def __init__(self, vertices) -> None:
        v = np.asarray(vertices, dtype=np.float64)
        if v.shape != (4, 2):
            raise GeometryError(f"expected 4x2 vertices, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise GeometryError("non-finite vertex coordinate")
        self.vertices = v
        self.vertices.setflags(write=False)

    @classmethod
    def from_raw_vertices(cls, vertices) -> "GraspRectangle":
        """Fit an exact rectangle to a raw 4-point quad.

        Cornell-style annotations list the first edge v0->v1 as a jaw
        plate, but integer rounding leaves the quad slightly skewed.
        Opposite edges are averaged, the closing axis is taken from the
        plate-midpoint axis, and an exact rectangle is rebuilt around the
        centroid, so downstream invariants (equal opposite edges,
        perpendicular corners) hold to machine precision.
        """
        p = np.asarray(vertices, dtype=np.float64)
        if p.shape != (4, 2):
            raise GeometryError(f"expected 4x2 vertices, got shape {p.shape}")
        if not np.isfinite(p).all():
            raise GeometryError("non-finite vertex coordinate")
        plate_vec = ((p[1] - p[0]) - (p[3] - p[2])) / 2.0
        # equals mid(v2v3) - mid(v0v1): the closing axis
        open_vec = ((p[2] - p[1]) - (p[0] - p[3])) / 2.0
        plate_len = float(np.hypot(*plate_vec))
        w = float(np.hypot(*open_vec))
        if w < _EPS or plate_len < _EPS:
            raise DegenerateRectangleError("zero-length rectangle edge")
        theta = wrap_half_pi(math.atan2(open_vec[1], open_vec[0]))
        center = p.mean(axis=0)
        return cls(_build_vertices(center, w, plate_len, theta))

    @classmethod
    def from_center(cls, center, w: float, plate_len: float, theta: float) -> "GraspRectangle":
        if w <= 0.0 or plate_len <= 0.0:
            raise GeometryError(f"rectangle dimensions must be positive, got w={w}, plate_len={plate_len}")
        return cls(_build_vertices(np.asarray(center, dtype=np.float64), w, plate_len, wrap_half_pi(theta)))

    @property
    def center(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    @property
    def w(self) -> float:
        """Gripper opening: distance v1 -> v2."""
        return float(np.hypot(*(self.vertices[2] - self.vertices[1])))

    @property
    def plate_len(self) -> float:
        """Jaw plate length: distance v0 -> v1."""
        return float(np.hypot(*(self.vertices[1] - self.vertices[0])))

    @property
    def theta(self) -> float:
        """Closing-axis angle, wrapped to [-pi/2, pi/2)."""
        m01 = (self.vertices[0] + self.vertices[1]) / 2.0
        m23 = (self.vertices[2] + self.vertices[3]) / 2.0
        axis = m23 - m01
        return wrap_half_pi(math.atan2(axis[1], axis[0]))

    @property
    def area(self) -> float:
        return self.w * self.plate_len

    def is_degenerate(self, eps: float = _EPS) -> bool:
        return self.w < eps or self.plate_len < eps

    def translated(self, dx: float, dy: float) -> "GraspRectangle":
        return GraspRectangle(self.vertices + np.array([dx, dy]))

    def __repr__(self) -> str:
        c = self.center
        return (f"GraspRectangle(center=({c[0]:.1f}, {c[1]:.1f}), w={self.w:.1f}, "
                f"plate_len={self.plate_len:.1f}, theta={self.theta:.3f})")


def _build_vertices(center: np.ndarray, w: float, plate_len: float, theta: float) -> np.ndarray:
    u = np.array([math.cos(theta), math.sin(theta)])        # closing axis
    n = np.array([math.sin(theta), -math.cos(theta)])       # plate direction
    half_w = 0.5 * w * u
    half_p = 0.5 * plate_len * n
    return np.stack([
        center - half_w - half_p,
        center - half_w + half_p,
        center + half_w + half_p,
        center + half_w - half_p,
    ])


def normalize_pose(px: float, py: float, theta: float, img_w: float, img_h: float) -> GraspPose:
    """Convert a pixel-space grasp center + angle to a normalized pose."""
    if img_w <= 0 or img_h <= 0:
        raise GeometryError(f"image dims must be positive, got {img_w}x{img_h}")
    if not (0.0 <= px <= img_w and 0.0 <= py <= img_h):
        raise PixelRangeError(f"pixel ({px}, {py}) outside {img_w}x{img_h} image")
    return GraspPose(px / img_w, py / img_h, theta)


def denormalize_pose(pose: GraspPose, img_w: float, img_h: float) -> tuple[float, float, float]:
    """Inverse of :func:`normalize_pose` up to floating round-off."""
    return pose.x * img_w, pose.y * img_h, pose.theta


def rect_to_pose(rect: GraspRectangle, img_w: float, img_h: float) -> GraspPose:
    """Normalized pose of a rectangle: centroid plus closing-axis angle."""
    if rect.is_degenerate():
        raise DegenerateRectangleError("cannot derive pose from a degenerate rectangle")
    cx, cy = rect.center
    return normalize_pose(float(cx), float(cy), rect.theta, img_w, img_h)


def pose_to_rect(pose: GraspPose, w: float, plate_len: float, img_w: float, img_h: float) -> GraspRectangle:
    """Rebuild a pixel rectangle from a pose plus known gripper dimensions."""
    if w <= 0.0 or plate_len <= 0.0:
        raise GeometryError(f"rectangle dimensions must be positive, got w={w}, plate_len={plate_len}")
    center = np.array([pose.x * img_w, pose.y * img_h])
    return GraspRectangle(_build_vertices(center, w, plate_len, pose.theta))


def _clip_polygon(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman: clip a convex polygon by a convex polygon."""
    # orient the clip polygon clockwise so the interior is cross(edge, p) <= 0
    signed = _signed_area(clip)
    if signed > 0:
        clip = clip[::-1]
    output = [tuple(p) for p in subject]
    n = len(clip)
    for i in range(n):
        if not output:
            return np.empty((0, 2))
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % n]
        ex, ey = bx - ax, by - ay
        input_list = output
        output = []
        s = input_list[-1]
        s_in = ex * (s[1] - ay) - ey * (s[0] - ax) <= 0.0
        for e in input_list:
            e_in = ex * (e[1] - ay) - ey * (e[0] - ax) <= 0.0
            if e_in:
                if not s_in:
                    output.append(_segment_line_intersection(s, e, (ax, ay), (bx, by)))
                output.append(e)
            elif s_in:
                output.append(_segment_line_intersection(s, e, (ax, ay), (bx, by)))
            s, s_in = e, e_in
    return np.asarray(output, dtype=np.float64)


def _segment_line_intersection(s, e, a, b) -> tuple[float, float]:
    dx, dy = e[0] - s[0], e[1] - s[1]
    ex, ey = b[0] - a[0], b[1] - a[1]
    denom = ex * dy - ey * dx
    if abs(denom) < 1e-30:
        return e
    t = -(ex * (s[1] - a[1]) - ey * (s[0] - a[0])) / denom
    return (s[0] + t * dx, s[1] + t * dy)


def _signed_area(poly: np.ndarray) -> float:
    x = poly[:, 0]
    y = poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def polygon_area(poly: np.ndarray) -> float:
    """Shoelace area of an ordered polygon (absolute value)."""
    if len(poly) < 3:
        return 0.0
    return abs(_signed_area(np.asarray(poly, dtype=np.float64)))


def rect_iou(a: GraspRectangle, b: GraspRectangle) -> float:
    """Intersection over union of two oriented rectangles.

    Computed by clipping ``a`` against ``b``'s half-planes and taking the
    shoelace area of the clipped polygon. Degenerate (zero-area) input
    scores 0 so batch evaluation stays total.
    """
    # shoelace on both rects and on the clipped polygon, so that identical
    # inputs cancel exactly and rect_iou(a, a) == 1.0
    area_a = polygon_area(a.vertices)
    area_b = polygon_area(b.vertices)
    if area_a < _EPS or area_b < _EPS:
        return 0.0
    inter_poly = _clip_polygon(a.vertices, b.vertices)
    inter = polygon_area(inter_poly)
    union = area_a + area_b - inter
    if union <= 0.0:
        return 0.0
    return min(max(inter / union, 0.0), 1.0)


def angle_difference(t1: float, t2: float) -> float:
    """Smallest deviation between two closing-axis angles, in [0, pi/2].

    Antipodal grasps are pi-periodic, so the distance is taken on the
    circle R/(pi Z).
    """
    d = math.fmod(t1 - t2, math.pi)
    if d < 0.0:
        d += math.pi
    return min(d, math.pi - d)


def rectangle_metric(
    pred: GraspPose,
    gts: list[GraspRectangle],
    thresholds: MetricThresholds,
    img_w: float,
    img_h: float,
) -> GraspEvalOutcome:
    """Score a predicted pose against ground-truth rectangles.

    For each ground truth, the pose is rebuilt into a rectangle using that
    ground truth's own opening and plate length, then compared by IoU and
    closing-axis deviation. The prediction succeeds if ANY ground truth
    yields IoU strictly above ``min_iou`` AND an angle deviation strictly
    below ``max_angle_deg``. Reported best values come from the ground
    truth with maximal IoU among angle-passing candidates, falling back to
    the global IoU maximum when no candidate passes the angle gate.
    """
    if not gts:
        raise GeometryError("rectangle_metric requires at least one ground-truth rectangle")
    # compare angles in radians, the unit the poses live in; converting the
    # threshold once keeps the strict < exact at the boundary
    max_angle = math.radians(thresholds.max_angle_deg)
    ious = np.empty(len(gts))
    angles = np.empty(len(gts))
    for i, gt in enumerate(gts):
        angles[i] = angle_difference(pred.theta, gt.theta)
        if gt.is_degenerate():
            ious[i] = 0.0
            continue
        candidate = pose_to_rect(pred, gt.w, gt.plate_len, img_w, img_h)
        ious[i] = rect_iou(candidate, gt)
    angle_ok = angles < max_angle
    if angle_ok.any():
        idx = int(np.flatnonzero(angle_ok)[np.argmax(ious[angle_ok])])
    else:
        idx = int(np.argmax(ious))
    success = bool(angle_ok[idx] and ious[idx] > thresholds.min_iou)
    return GraspEvalOutcome(
        success=success,
        best_iou=float(ious[idx]),
        best_angle_diff_deg=math.degrees(float(angles[idx])),
        matched_gt_index=idx if success else None,
    )
