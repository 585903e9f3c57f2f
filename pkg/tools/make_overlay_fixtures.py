#!/usr/bin/env python3
"""Regenerate the frontend's overlay contract fixtures.

Emits 100 seeded random poses with the service-computed overlay corners,
plus the hand-checked display case, so the TypeScript renderer can be
held to within 1 px of the service geometry.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from textgrasp.geometry import GraspPose, pose_to_rect

OUT = Path(__file__).resolve().parents[1] / "frontend" / "tests" / "fixtures"


def corners(pose: GraspPose, w: float, plate: float, img_w: float, img_h: float):
    rect = pose_to_rect(pose, w, plate, img_w, img_h)
    return [[float(x), float(y)] for x, y in rect.vertices]


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(424242)
    cases = []
    for _ in range(100):
        pose = GraspPose(float(rng.uniform(0, 1)), float(rng.uniform(0, 1)),
                         float(rng.uniform(-math.pi / 2, math.pi / 2)))
        img_w, img_h = 224, 224
        w, plate = 150.0, 60.0
        cases.append({
            "pose": {"x": pose.x, "y": pose.y, "theta": pose.theta},
            "img_w": img_w, "img_h": img_h,
            "overlay_w": w, "overlay_plate": plate,
            "corners": corners(pose, w, plate, img_w, img_h),
        })
    hand = GraspPose(0.5, 0.375, -math.pi / 2)
    cases.append({
        "pose": {"x": hand.x, "y": hand.y, "theta": hand.theta},
        "img_w": 400, "img_h": 400,
        "overlay_w": 100.0, "overlay_plate": 200.0,
        "corners": corners(hand, 100.0, 200.0, 400, 400),
    })
    path = OUT / "overlay_fixtures.json"
    path.write_text(json.dumps(cases, indent=1) + "\n", encoding="utf-8")
    print(f"wrote {len(cases)} cases to {path}")


if __name__ == "__main__":
    main()
