"""Geometric augmentation of images together with their grasp rectangles.

One affine map drives both the pixel resampling and the analytic label
transform, so rectangles never have to be re-estimated from pixels. The
map is rotate-about-center, then zoom-about-center (a zoom factor below 1
magnifies content by 1/zoom), then a square crop rescaled to the output
size. Rectangles whose center leaves the crop are dropped; if a draw
drops every rectangle the planner resamples the parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import cv2
import numpy as np

from .cornell import CornellSample
from .geometry import GraspRectangle

HALF_PI = math.pi / 2


class LabelsOutOfView(RuntimeError):
    """Every rectangle center fell outside the crop for these params."""


@dataclass(frozen=True)
class AugmentationParams:
    rotation: float
    zoom: float
    crop_origin: tuple[float, float]
    crop_size: int

    def __post_init__(self) -> None:
        if not (0.0 < self.zoom <= 2.0):
            raise ValueError(f"zoom must be in (0, 2], got {self.zoom}")
        if self.crop_size <= 0:
            raise ValueError(f"crop_size must be positive, got {self.crop_size}")

    @classmethod
    def identity(cls, size: int) -> "AugmentationParams":
        return cls(rotation=0.0, zoom=1.0, crop_origin=(0.0, 0.0), crop_size=size)

    def to_dict(self) -> dict:
        return {
            "rotation": self.rotation,
            "zoom": self.zoom,
            "crop_origin": [self.crop_origin[0], self.crop_origin[1]],
            "crop_size": self.crop_size,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "AugmentationParams":
        return cls(rotation=float(raw["rotation"]), zoom=float(raw["zoom"]),
                   crop_origin=(float(raw["crop_origin"][0]), float(raw["crop_origin"][1])),
                   crop_size=int(raw["crop_size"]))


@dataclass(frozen=True)
class AugmentationConfig:
    per_image_count: int = 86
    rotation_range: tuple[float, float] = (-HALF_PI, HALF_PI)
    zoom_range: tuple[float, float] = (0.8, 1.1)
    output_size: int = 224
    seed: int = 0
    max_resamples: int = 10

    def __post_init__(self) -> None:
        if self.per_image_count < 1:
            raise ValueError("per_image_count must be >= 1")
        if self.output_size <= 0:
            raise ValueError("output_size must be positive")
        lo, hi = self.zoom_range
        if not (0.0 < lo <= hi <= 2.0):
            raise ValueError(f"zoom_range must lie in (0, 2], got {self.zoom_range}")
        if self.rotation_range[0] > self.rotation_range[1]:
            raise ValueError("rotation_range must be (lo, hi) with lo <= hi")
        if self.max_resamples < 1:
            raise ValueError("max_resamples must be >= 1")


def affine_matrix(params: AugmentationParams, src_w: int, src_h: int,
                  output_size: int) -> np.ndarray:
    """2x3 map from source pixel coordinates to output pixel coordinates."""
    cx, cy = src_w / 2.0, src_h / 2.0
    cos_r, sin_r = math.cos(params.rotation), math.sin(params.rotation)
    g = 1.0 / params.zoom
    # rotate about (cx, cy), scale by g about (cx, cy)
    a = g * cos_r
    b = g * sin_r
    m = np.array([
        [a, -b, cx - a * cx + b * cy],
        [b, a, cy - b * cx - a * cy],
    ])
    # crop translate, then rescale the crop window to the output size
    out_scale = output_size / params.crop_size
    m[0, 2] -= params.crop_origin[0]
    m[1, 2] -= params.crop_origin[1]
    return out_scale * m


def transform_points(points: np.ndarray, m: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    return pts @ m[:, :2].T + m[:, 2]


def transform_rects(rects: list[GraspRectangle], params: AugmentationParams,
                    src_w: int, src_h: int, output_size: int) -> list[GraspRectangle]:
    """Map rectangles through the augmentation affine, dropping off-crop ones.

    Raises :class:`LabelsOutOfView` when a non-empty input loses every
    rectangle, signalling the caller to resample parameters.
    """
    m = affine_matrix(params, src_w, src_h, output_size)
    kept: list[GraspRectangle] = []
    for r in rects:
        vertices = transform_points(r.vertices, m)
        center = vertices.mean(axis=0)
        if not (0.0 <= center[0] <= output_size and 0.0 <= center[1] <= output_size):
            continue
        kept.append(GraspRectangle.from_raw_vertices(vertices))
    if rects and not kept:
        raise LabelsOutOfView(f"all {len(rects)} rectangle centers left the crop")
    return kept


def warp_image(image: np.ndarray, params: AugmentationParams, output_size: int) -> np.ndarray:
    """Resample an image with the same affine used for the labels."""
    m = affine_matrix(params, src_w=image.shape[1], src_h=image.shape[0],
                      output_size=output_size)
    return cv2.warpAffine(image, m, (output_size, output_size),
                          flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_CONSTANT,
                          borderValue=0)


def sample_params(cfg: AugmentationConfig, rng: np.random.Generator,
                  src_w: int, src_h: int) -> AugmentationParams:
    """Uniform draw from the configured ranges; crop always fits the source."""
    crop = cfg.output_size
    if crop > src_w or crop > src_h:
        raise ValueError(f"output_size {crop} exceeds source {src_w}x{src_h}")
    rotation = float(rng.uniform(cfg.rotation_range[0], cfg.rotation_range[1]))
    zoom = float(rng.uniform(cfg.zoom_range[0], cfg.zoom_range[1]))
    ox = float(rng.uniform(0.0, src_w - crop))
    oy = float(rng.uniform(0.0, src_h - crop))
    return AugmentationParams(rotation=rotation, zoom=zoom, crop_origin=(ox, oy),
                              crop_size=crop)


@dataclass(frozen=True)
class PlanItem:
    sample: CornellSample
    params: AugmentationParams
    chosen_rect_index: int  # index into the surviving transformed rectangles
    variant_index: int

    @property
    def record_id(self) -> str:
        return f"{self.sample.image_id}_a{self.variant_index:03d}"


@dataclass
class ExpansionPlan:
    items: list[PlanItem]
    planned_total: int
    dropped_count: int


def expand_dataset(samples: list[CornellSample], cfg: AugmentationConfig) -> ExpansionPlan:
    """Plan ``per_image_count`` augmented variants per source image.

    Pure bookkeeping: no pixels are touched. Each variant gets freshly
    sampled parameters (resampled up to ``max_resamples`` times when a
    crop loses every label) and one surviving rectangle chosen uniformly
    as the target grasp. Per-image RNG streams make the plan independent
    of any outer iteration order.
    """
    if not samples:
        raise ValueError("expand_dataset requires a non-empty sample list")
    items: list[PlanItem] = []
    dropped = 0
    for img_idx, sample in enumerate(samples):
        rng = np.random.default_rng([cfg.seed, img_idx])
        for variant_index in range(cfg.per_image_count):
            item = _plan_variant(sample, cfg, rng, variant_index)
            if item is None:
                dropped += 1
            else:
                items.append(item)
    return ExpansionPlan(items=items, planned_total=len(samples) * cfg.per_image_count,
                         dropped_count=dropped)


def _plan_variant(sample: CornellSample, cfg: AugmentationConfig,
                  rng: np.random.Generator, variant_index: int) -> PlanItem | None:
    for _ in range(cfg.max_resamples):
        params = sample_params(cfg, rng, sample.width, sample.height)
        try:
            survivors = transform_rects(sample.positive_rects, params,
                                        sample.width, sample.height, cfg.output_size)
        except LabelsOutOfView:
            continue
        chosen = int(rng.integers(0, len(survivors)))
        return PlanItem(sample=sample, params=params, chosen_rect_index=chosen,
                        variant_index=variant_index)
    return None


def iter_plan_by_image(plan: ExpansionPlan) -> Iterator[tuple[str, list[PlanItem]]]:
    """Group plan items by source image, preserving deterministic order."""
    current_id: str | None = None
    bucket: list[PlanItem] = []
    for item in plan.items:
        if item.sample.image_id != current_id:
            if bucket:
                yield current_id, bucket
            current_id = item.sample.image_id
            bucket = []
        bucket.append(item)
    if bucket:
        yield current_id, bucket
