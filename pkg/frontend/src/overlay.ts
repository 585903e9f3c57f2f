// Grasp overlay geometry. Mirrors the service's rectangle construction so
// locally rendered corners stay within 1 px of the authoritative ones at
// any display scale; the service remains the source of truth for poses.

import type { Corner, GraspPose, OverlayRole } from "./types.js";

export const ROLE_COLORS: Record<OverlayRole, string> = {
  initial: "#e5534b", // red: first prediction
  intermediate: "#8b949e", // gray: superseded refinements
  latest: "#3fb950", // green: current refinement
};

// u points along the closing axis, n along the jaw plates; corner order
// matches the service: v0v1 and v2v3 are the plate edges.
export function poseToRect(
  pose: GraspPose,
  w: number,
  plateLen: number,
  imgW: number,
  imgH: number,
): Corner[] {
  const cx = pose.x * imgW;
  const cy = pose.y * imgH;
  const ux = Math.cos(pose.theta);
  const uy = Math.sin(pose.theta);
  const nx = Math.sin(pose.theta);
  const ny = -Math.cos(pose.theta);
  const hw = w / 2;
  const hp = plateLen / 2;
  return [
    [cx - hw * ux - hp * nx, cy - hw * uy - hp * ny],
    [cx - hw * ux + hp * nx, cy - hw * uy + hp * ny],
    [cx + hw * ux + hp * nx, cy + hw * uy + hp * ny],
    [cx + hw * ux - hp * nx, cy + hw * uy - hp * ny],
  ];
}

export function scaleCorners(corners: Corner[], scale: number): Corner[] {
  return corners.map(([x, y]) => [x * scale, y * scale]);
}

// Local render of an overlay at display size: the rectangle is computed in
// image coordinates (same dims the service used) and then scaled, so the
// two paths agree wherever the display is a uniform zoom of the image.
export function renderOverlayCorners(
  pose: GraspPose,
  imgW: number,
  imgH: number,
  displayW: number,
  rectW: number,
  rectPlate: number,
): Corner[] {
  const scale = displayW / imgW;
  return scaleCorners(poseToRect(pose, rectW, rectPlate, imgW, imgH), scale);
}

export function maxCornerDistance(a: Corner[], b: Corner[]): number {
  let worst = 0;
  for (let i = 0; i < a.length; i++) {
    const pa = a[i];
    const pb = b[i];
    if (!pa || !pb) return Infinity;
    worst = Math.max(worst, Math.hypot(pa[0] - pb[0], pa[1] - pb[1]));
  }
  return worst;
}
