// Canvas drawing: the image, then each overlay rectangle in its role color
// with thicker jaw-plate edges, plus a badge when the latest reply had no
// usable pose.

import type { Overlay } from "./types.js";

export function drawScene(
  ctx: CanvasRenderingContext2D,
  image: HTMLImageElement | null,
  overlays: Overlay[],
  warning: string | null,
): void {
  const { width, height } = ctx.canvas;
  ctx.clearRect(0, 0, width, height);
  if (image) {
    ctx.drawImage(image, 0, 0, width, height);
  } else {
    ctx.fillStyle = "#161b22";
    ctx.fillRect(0, 0, width, height);
  }
  for (const overlay of overlays) {
    drawRect(ctx, overlay);
  }
  if (warning) {
    drawBadge(ctx, warning);
  }
}

function drawRect(ctx: CanvasRenderingContext2D, overlay: Overlay): void {
  const c = overlay.corners;
  if (c.length !== 4) return;
  const segments: Array<[number, number, number]> = [
    [0, 1, 3], // jaw plate
    [1, 2, 1.5],
    [2, 3, 3], // jaw plate
    [3, 0, 1.5],
  ];
  ctx.strokeStyle = overlay.color;
  ctx.globalAlpha = overlay.role === "intermediate" ? 0.6 : 1.0;
  for (const [i, j, width] of segments) {
    const a = c[i];
    const b = c[j];
    if (!a || !b) continue;
    ctx.lineWidth = width;
    ctx.beginPath();
    ctx.moveTo(a[0], a[1]);
    ctx.lineTo(b[0], b[1]);
    ctx.stroke();
  }
  ctx.globalAlpha = 1.0;
}

function drawBadge(ctx: CanvasRenderingContext2D, text: string): void {
  ctx.font = "12px sans-serif";
  const pad = 6;
  const w = ctx.measureText(text).width + 2 * pad;
  ctx.fillStyle = "rgba(210, 153, 34, 0.9)";
  ctx.fillRect(8, 8, w, 22);
  ctx.fillStyle = "#0d1117";
  ctx.fillText(text, 8 + pad, 23);
}
