/**
 * Single-page annotation client: poll for a pending frame, draw the scene
 * and predictions on a canvas, let the teacher accept/redraw boxes, submit.
 */

import { AnnotationClient } from "./api.js";
import {
  ViewTransform,
  boxToCanvas,
  clampBoxToFrame,
  dragToFrameBox,
  fitTransform,
} from "./coords.js";
import {
  EditorBox,
  addDrawnBox,
  assignClass,
  boxesFromRequest,
  removeBox,
  toSubmission,
  toggleAccepted,
  validationErrors,
} from "./editor.js";
import type { PendingRequest } from "./types.js";

const POLL_INTERVAL_MS = 1000;

interface Elements {
  canvas: HTMLCanvasElement;
  boxList: HTMLElement;
  banner: HTMLElement;
  statusLine: HTMLElement;
  submitButton: HTMLButtonElement;
  classSelect: HTMLSelectElement;
}

export class AnnotationApp {
  private request: PendingRequest | null = null;
  private boxes: EditorBox[] = [];
  private dragStart: [number, number] | null = null;
  private dragNow: [number, number] | null = null;
  private inFlight = false;

  constructor(
    private readonly client: AnnotationClient,
    private readonly el: Elements,
  ) {
    el.canvas.addEventListener("mousedown", (e) => this.onMouseDown(e));
    el.canvas.addEventListener("mousemove", (e) => this.onMouseMove(e));
    el.canvas.addEventListener("mouseup", (e) => this.onMouseUp(e));
    el.submitButton.addEventListener("click", () => void this.submit());
  }

  start() {
    void this.poll();
    setInterval(() => void this.poll(), POLL_INTERVAL_MS);
  }

  private async poll() {
    if (this.inFlight) return;
    try {
      if (this.request === null) {
        const pending = await this.client.fetchPending();
        if (pending !== null) {
          this.request = pending;
          this.boxes = boxesFromRequest(pending);
          this.fillClassSelect();
        } else {
          const status = await this.client.status();
          this.el.statusLine.textContent =
            `state: ${status.state} | frames: ${status.frames_processed}` +
            (status.stats ? ` | queries: ${status.stats.total_al_queries_images}` : "");
        }
      }
      this.el.banner.hidden = true;
    } catch (err) {
      this.el.banner.textContent = `service unreachable, retrying (${String(err)})`;
      this.el.banner.hidden = false;
    }
    this.render();
  }

  private fillClassSelect() {
    const select = this.el.classSelect;
    select.innerHTML = "";
    for (const entry of this.request?.class_catalog ?? []) {
      const option = document.createElement("option");
      option.value = String(entry.class_id);
      option.textContent = entry.name;
      select.appendChild(option);
    }
  }

  private currentTransform(): ViewTransform | null {
    if (this.request === null) return null;
    return fitTransform(
      this.request.frame_w,
      this.request.frame_h,
      this.el.canvas.width,
      this.el.canvas.height,
    );
  }

  private canvasPoint(e: MouseEvent): [number, number] {
    const rect = this.el.canvas.getBoundingClientRect();
    return [
      ((e.clientX - rect.left) / rect.width) * this.el.canvas.width,
      ((e.clientY - rect.top) / rect.height) * this.el.canvas.height,
    ];
  }

  private onMouseDown(e: MouseEvent) {
    if (this.request === null) return;
    this.dragStart = this.canvasPoint(e);
    this.dragNow = this.dragStart;
  }

  private onMouseMove(e: MouseEvent) {
    if (this.dragStart === null) return;
    this.dragNow = this.canvasPoint(e);
    this.render();
  }

  private onMouseUp(e: MouseEvent) {
    if (this.request === null || this.dragStart === null) return;
    const t = this.currentTransform();
    const [x0, y0] = this.dragStart;
    const [x1, y1] = this.canvasPoint(e);
    this.dragStart = null;
    this.dragNow = null;
    if (t === null || (Math.abs(x1 - x0) < 4 && Math.abs(y1 - y0) < 4)) {
      this.render();
      return; // a click, not a drag
    }
    const frameBox = clampBoxToFrame(
      dragToFrameBox(t, x0, y0, x1, y1),
      this.request.frame_w,
      this.request.frame_h,
    );
    const classId = Number(this.el.classSelect.value);
    this.boxes = addDrawnBox(this.boxes, frameBox, Number.isNaN(classId) ? null : classId);
    this.render();
  }

  private async submit() {
    if (this.request === null || this.inFlight) return;
    const errors = validationErrors(this.boxes, this.request.frame_w, this.request.frame_h);
    if (errors.length > 0) {
      this.el.banner.textContent = errors.join("; ");
      this.el.banner.hidden = false;
      return;
    }
    this.inFlight = true;
    try {
      const outcome = await this.client.submit(toSubmission(this.request.request_id, this.boxes));
      if (outcome.kind === "ok") {
        this.request = null;
        this.boxes = [];
      } else if (outcome.kind === "stale") {
        this.request = null; // re-fetch on the next poll
        this.boxes = [];
      } else {
        this.el.banner.textContent = outcome.detail;
        this.el.banner.hidden = false;
      }
    } finally {
      this.inFlight = false;
      this.render();
    }
  }

  private render() {
    const ctx = this.el.canvas.getContext("2d");
    if (ctx === null) return;
    const { width, height } = this.el.canvas;
    ctx.clearRect(0, 0, width, height);
    ctx.fillStyle = "#1c1c24";
    ctx.fillRect(0, 0, width, height);

    if (this.request === null) {
      ctx.fillStyle = "#888";
      ctx.font = "16px sans-serif";
      ctx.fillText("no frame awaiting annotation", 20, 32);
      this.el.boxList.innerHTML = "";
      this.el.submitButton.disabled = true;
      return;
    }
    this.el.submitButton.disabled = false;
    const t = this.currentTransform();
    if (t === null) return;

    for (const drawable of this.request.drawables) {
      const c = boxToCanvas(t, drawable.box);
      ctx.fillStyle = drawable.color;
      ctx.globalAlpha = 0.55;
      ctx.fillRect(c.x, c.y, c.w, c.h);
      ctx.globalAlpha = 1.0;
      ctx.fillStyle = "#fff";
      ctx.font = "12px sans-serif";
      ctx.fillText(drawable.label, c.x + 3, c.y + 13);
    }
    this.boxes.forEach((b, i) => {
      const c = boxToCanvas(t, b.box);
      ctx.strokeStyle = b.origin === "predicted" ? "#39d353" : "#ffcc00";
      ctx.setLineDash(b.accepted ? [] : [5, 4]);
      ctx.lineWidth = 2;
      ctx.strokeRect(c.x, c.y, c.w, c.h);
      ctx.setLineDash([]);
      ctx.fillStyle = ctx.strokeStyle;
      ctx.fillText(`#${i + 1}`, c.x + 3, c.y + c.h - 5);
    });
    if (this.dragStart !== null && this.dragNow !== null) {
      const [x0, y0] = this.dragStart;
      const [x1, y1] = this.dragNow;
      ctx.strokeStyle = "#ffcc00";
      ctx.setLineDash([3, 3]);
      ctx.strokeRect(Math.min(x0, x1), Math.min(y0, y1), Math.abs(x1 - x0), Math.abs(y1 - y0));
      ctx.setLineDash([]);
    }
    this.renderBoxList();
  }

  private renderBoxList() {
    const root = this.el.boxList;
    root.innerHTML = "";
    const catalog = this.request?.class_catalog ?? [];
    this.boxes.forEach((b, i) => {
      const row = document.createElement("div");
      row.className = "box-row";

      const accept = document.createElement("input");
      accept.type = "checkbox";
      accept.checked = b.accepted;
      accept.addEventListener("change", () => {
        this.boxes = toggleAccepted(this.boxes, i);
        this.render();
      });
      row.appendChild(accept);

      const label = document.createElement("span");
      label.textContent = ` #${i + 1} ${b.origin} `;
      row.appendChild(label);

      const select = document.createElement("select");
      const blank = document.createElement("option");
      blank.value = "";
      blank.textContent = "(class)";
      select.appendChild(blank);
      for (const entry of catalog) {
        const option = document.createElement("option");
        option.value = String(entry.class_id);
        option.textContent = entry.name;
        if (b.classId === entry.class_id) option.selected = true;
        select.appendChild(option);
      }
      select.addEventListener("change", () => {
        if (select.value !== "") {
          this.boxes = assignClass(this.boxes, i, Number(select.value));
          this.render();
        }
      });
      row.appendChild(select);

      const remove = document.createElement("button");
      remove.textContent = "remove";
      remove.addEventListener("click", () => {
        this.boxes = removeBox(this.boxes, i);
        this.render();
      });
      row.appendChild(remove);

      root.appendChild(row);
    });
  }
}
