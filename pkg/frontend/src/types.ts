/** Payload types of the annotation service HTTP API. */

export interface BoxPayload {
  x: number;
  y: number;
  w: number;
  h: number;
}

export interface DrawablePayload {
  box: BoxPayload;
  color: string;
  label: string;
}

export interface PredictionPayload {
  box: BoxPayload;
  class_id: number;
  score: number;
}

export interface ClassEntry {
  class_id: number;
  name: string;
}

export interface PendingRequest {
  request_id: number;
  frame_id: number;
  frame_w: number;
  frame_h: number;
  drawables: DrawablePayload[];
  predicted: PredictionPayload[];
  class_catalog: ClassEntry[];
}

export interface SubmissionBox {
  box: BoxPayload;
  class_id: number;
}

export interface Submission {
  request_id: number;
  boxes: SubmissionBox[];
  accepted_predictions: boolean[];
}

export interface StatusDoc {
  state: string;
  frames_processed: number;
  stats: Record<string, number | null> | null;
}
