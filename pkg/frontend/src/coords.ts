/**
 * Frame <-> canvas coordinate mapping.
 *
 * The frame is letterboxed into the canvas with a uniform scale, so a box
 * drawn on screen maps back to frame pixels independently of the zoom the
 * canvas happens to render at.
 */

import type { BoxPayload } from "./types.js";

export interface ViewTransform {
  scale: number;
  offsetX: number;
  offsetY: number;
}

export function fitTransform(
  frameW: number,
  frameH: number,
  canvasW: number,
  canvasH: number,
): ViewTransform {
  if (frameW <= 0 || frameH <= 0 || canvasW <= 0 || canvasH <= 0) {
    throw new Error("frame and canvas extents must be positive");
  }
  const scale = Math.min(canvasW / frameW, canvasH / frameH);
  return {
    scale,
    offsetX: (canvasW - frameW * scale) / 2,
    offsetY: (canvasH - frameH * scale) / 2,
  };
}

export function frameToCanvas(t: ViewTransform, x: number, y: number): [number, number] {
  return [t.offsetX + x * t.scale, t.offsetY + y * t.scale];
}

export function canvasToFrame(t: ViewTransform, x: number, y: number): [number, number] {
  return [(x - t.offsetX) / t.scale, (y - t.offsetY) / t.scale];
}

export function boxToCanvas(t: ViewTransform, box: BoxPayload): BoxPayload {
  const [x, y] = frameToCanvas(t, box.x, box.y);
  return { x, y, w: box.w * t.scale, h: box.h * t.scale };
}

/** Canvas-pixel rectangle (any corner order) back to frame coordinates. */
export function dragToFrameBox(
  t: ViewTransform,
  x0: number,
  y0: number,
  x1: number,
  y1: number,
): BoxPayload {
  const [fx0, fy0] = canvasToFrame(t, Math.min(x0, x1), Math.min(y0, y1));
  const [fx1, fy1] = canvasToFrame(t, Math.max(x0, x1), Math.max(y0, y1));
  return { x: fx0, y: fy0, w: fx1 - fx0, h: fy1 - fy0 };
}

export function clampBoxToFrame(box: BoxPayload, frameW: number, frameH: number): BoxPayload {
  const x = Math.max(0, Math.min(box.x, frameW - 1));
  const y = Math.max(0, Math.min(box.y, frameH - 1));
  const w = Math.max(1e-3, Math.min(box.w, frameW - x));
  const h = Math.max(1e-3, Math.min(box.h, frameH - y));
  return { x, y, w, h };
}
