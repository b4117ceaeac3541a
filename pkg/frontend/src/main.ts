import { AnnotationClient } from "./api.js";
import { AnnotationApp } from "./app.js";

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (el === null) throw new Error(`missing element #${id}`);
  return el as T;
}

const app = new AnnotationApp(new AnnotationClient(""), {
  canvas: byId<HTMLCanvasElement>("frame-canvas"),
  boxList: byId("box-list"),
  banner: byId("banner"),
  statusLine: byId("status-line"),
  submitButton: byId<HTMLButtonElement>("submit-button"),
  classSelect: byId<HTMLSelectElement>("class-select"),
});
app.start();
