#!/usr/bin/env python3
"""Regenerate the bundled 6-image Cornell-style fixture.

Synthetic stand-in for the real dataset: small objects drawn on a table
backdrop, with hand-placed positive grasp rectangles in cpos format and
an object index. Deterministic, so the committed files never churn.
"""

from __future__ import annotations

import math
from pathlib import Path

import cv2
import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "textgrasp" / "data" / "cornell_fixture"

W, H = 640, 480


def rect_lines(cx, cy, w, plate, theta):
    u = np.array([math.cos(theta), math.sin(theta)])
    n = np.array([math.sin(theta), -math.cos(theta)])
    c = np.array([cx, cy], dtype=float)
    verts = [c - w / 2 * u - plate / 2 * n,
             c - w / 2 * u + plate / 2 * n,
             c + w / 2 * u + plate / 2 * n,
             c + w / 2 * u - plate / 2 * n]
    return [f"{v[0]:.2f} {v[1]:.2f}" for v in verts]


def backdrop(seed):
    # smooth gradient background keeps the committed PNGs small
    img = np.full((H, W, 3), 178, np.uint8)
    gradient = (np.linspace(0, 24, H, dtype=np.float32)[:, None] +
                np.linspace(0, 12, W, dtype=np.float32)[None, :] + 3 * seed) % 28
    img = np.clip(img.astype(np.float32) - gradient[..., None], 0, 255).astype(np.uint8)
    cv2.rectangle(img, (40, 40), (W - 40, H - 40), (150, 150, 150), 2)
    return img


def draw_cup(img, cx, cy):
    cv2.ellipse(img, (cx, cy), (52, 64), 0, 0, 360, (40, 90, 170), -1)
    cv2.ellipse(img, (cx, cy - 50), (48, 16), 0, 0, 360, (60, 120, 200), -1)
    cv2.ellipse(img, (cx + 62, cy), (22, 34), 0, 90, 270, (40, 90, 170), 10)


def draw_bottle(img, cx, cy, angle_deg):
    box = cv2.boxPoints(((cx, cy), (46, 150), angle_deg)).astype(np.int32)
    cv2.fillPoly(img, [box], (70, 150, 70))
    neck = cv2.boxPoints(((cx, cy - 95), (20, 46), angle_deg)).astype(np.int32)
    cv2.fillPoly(img, [neck], (70, 150, 70))


def draw_screwdriver(img, cx, cy, angle_deg):
    handle = cv2.boxPoints(((cx - 55, cy), (36, 104), angle_deg)).astype(np.int32)
    cv2.fillPoly(img, [handle], (30, 40, 160))
    shaft = cv2.boxPoints(((cx + 62, cy), (12, 130), angle_deg)).astype(np.int32)
    cv2.fillPoly(img, [shaft], (140, 140, 140))


def draw_box(img, cx, cy, angle_deg):
    box = cv2.boxPoints(((cx, cy), (130, 90), angle_deg)).astype(np.int32)
    cv2.fillPoly(img, [box], (50, 60, 110))
    cv2.polylines(img, [box], True, (90, 100, 150), 3)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    specs = {
        # image_id: (object_id, drawer, grasp rectangles as (cx, cy, w, plate, theta))
        "pcd0100": (10, lambda im: draw_cup(im, 320, 240), [
            (320, 240, 120, 60, 0.0),
            (382, 240, 70, 48, math.pi / 2 - 0.01),
        ]),
        "pcd0101": (10, lambda im: draw_cup(im, 280, 260), [
            (280, 260, 120, 60, 0.2),
            (342, 260, 70, 48, -1.35),
        ]),
        "pcd0102": (11, lambda im: draw_bottle(im, 330, 250, 15), [
            (330, 250, 80, 70, math.radians(15)),
            (305, 155, 50, 40, math.radians(15)),
            (355, 345, 80, 60, math.radians(15)),
        ]),
        "pcd0200": (12, lambda im: draw_screwdriver(im, 320, 230, 0), [
            (265, 230, 70, 60, -1.5),
            (382, 230, 40, 70, 1.45),
        ]),
        "pcd0201": (12, lambda im: draw_screwdriver(im, 300, 270, 25), [
            (250, 247, 70, 60, math.radians(25) - math.pi / 2),
            (356, 296, 40, 70, math.radians(25) + math.pi / 2 - 0.05),
        ]),
        "pcd0300": (13, lambda im: draw_box(im, 330, 240, 10), [
            (330, 240, 140, 70, math.radians(100)),
            (330, 240, 110, 60, math.radians(10)),
            (290, 232, 120, 50, math.radians(100)),
            (370, 248, 120, 50, math.radians(100)),
        ]),
    }
    index_lines = []
    for i, (image_id, (object_id, drawer, grasps)) in enumerate(specs.items()):
        img = backdrop(seed=1000 + i)
        drawer(img)
        ok, png = cv2.imencode(".png", img)
        assert ok
        (OUT / f"{image_id}r.png").write_bytes(png.tobytes())
        lines = []
        for g in grasps:
            lines.extend(rect_lines(*g))
        (OUT / f"{image_id}cpos.txt").write_text("\n".join(lines) + "\n")
        index_lines.append(f"{image_id} {object_id}")
    (OUT / "object_index.txt").write_text("\n".join(index_lines) + "\n")
    print(f"wrote fixture to {OUT}")


if __name__ == "__main__":
    main()
