/**
 * Annotation editing state: predicted boxes carry accept toggles, drawn
 * boxes need a class before the set becomes submittable.
 */

import type { BoxPayload, PendingRequest, Submission } from "./types.js";

export interface EditorBox {
  box: BoxPayload;
  classId: number | null;
  origin: "predicted" | "drawn";
  accepted: boolean;
}

export function boxesFromRequest(request: PendingRequest): EditorBox[] {
  return request.predicted.map((p) => ({
    box: { ...p.box },
    classId: p.class_id,
    origin: "predicted",
    accepted: true,
  }));
}

export function toggleAccepted(boxes: EditorBox[], index: number): EditorBox[] {
  return boxes.map((b, i) => (i === index ? { ...b, accepted: !b.accepted } : b));
}

export function addDrawnBox(
  boxes: EditorBox[],
  box: BoxPayload,
  classId: number | null = null,
): EditorBox[] {
  return [...boxes, { box, classId, origin: "drawn", accepted: true }];
}

export function assignClass(boxes: EditorBox[], index: number, classId: number): EditorBox[] {
  return boxes.map((b, i) => (i === index ? { ...b, classId } : b));
}

export function removeBox(boxes: EditorBox[], index: number): EditorBox[] {
  return boxes.filter((_, i) => i !== index);
}

/** Human-readable problems that block submission; empty means submittable. */
export function validationErrors(
  boxes: EditorBox[],
  frameW: number,
  frameH: number,
): string[] {
  const errors: string[] = [];
  boxes.forEach((b, i) => {
    if (!b.accepted) return;
    if (b.classId === null) {
      errors.push(`box ${i + 1} has no class assigned`);
    }
    if (b.box.w <= 0 || b.box.h <= 0) {
      errors.push(`box ${i + 1} has no area`);
    }
    if (b.box.x < 0 || b.box.y < 0 || b.box.x + b.box.w > frameW || b.box.y + b.box.h > frameH) {
      errors.push(`box ${i + 1} is outside the frame`);
    }
  });
  return errors;
}

export function toSubmission(requestId: number, boxes: EditorBox[]): Submission {
  const accepted = boxes.filter((b) => b.accepted);
  if (accepted.some((b) => b.classId === null)) {
    throw new Error("cannot submit boxes without a class");
  }
  return {
    request_id: requestId,
    boxes: accepted.map((b) => ({ box: { ...b.box }, class_id: b.classId as number })),
    accepted_predictions: boxes
      .filter((b) => b.origin === "predicted")
      .map((b) => b.accepted),
  };
}
