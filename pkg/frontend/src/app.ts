/**
 * DOM wiring for the interactive editor: load a photo, paint a crack
 * mask or place color scribbles, submit to the service, and compare
 * input/output side by side. At most one edit request is in flight;
 * the controls are disabled while waiting.
 */

import { EditorSession } from "./session.js";
import { submit } from "./api.js";

const baseUrl =
  new URLSearchParams(location.search).get("service") ?? "http://localhost:8787";

let session: EditorSession | null = null;
let sourceBlob: Blob | null = null;
let sourceImage: HTMLImageElement | null = null;
let pending = false;

const fileInput = document.getElementById("file") as HTMLInputElement;
const sourceCanvas = document.getElementById("source") as HTMLCanvasElement;
const resultImg = document.getElementById("result") as HTMLImageElement;
const modeMask = document.getElementById("mode-mask") as HTMLInputElement;
const radiusInput = document.getElementById("radius") as HTMLInputElement;
const colorInput = document.getElementById("color") as HTMLInputElement;
const statusEl = document.getElementById("status") as HTMLSpanElement;
const buttons = {
  submit: document.getElementById("submit") as HTMLButtonElement,
  undo: document.getElementById("undo") as HTMLButtonElement,
  redo: document.getElementById("redo") as HTMLButtonElement,
  export: document.getElementById("export") as HTMLButtonElement,
};

function hexToRgb(hex: string): [number, number, number] {
  const v = parseInt(hex.slice(1), 16);
  return [(v >> 16) & 255, (v >> 8) & 255, v & 255];
}

function redraw(): void {
  if (!session || !sourceImage) return;
  const ctx = sourceCanvas.getContext("2d")!;
  ctx.drawImage(sourceImage, 0, 0);
  // crack overlay in translucent red
  const overlay = ctx.getImageData(0, 0, session.width, session.height);
  for (let i = 0; i < session.mask.length; i++) {
    if (session.mask[i] === 0) {
      overlay.data[i * 4] = 255;
      overlay.data[i * 4 + 1] = 64;
      overlay.data[i * 4 + 2] = 64;
    }
  }
  ctx.putImageData(overlay, 0, 0);
  for (const s of session.strokes) {
    ctx.fillStyle = `rgb(${s.rgb[0]}, ${s.rgb[1]}, ${s.rgb[2]})`;
    ctx.beginPath();
    ctx.arc(s.x, s.y, s.radius, 0, 2 * Math.PI);
    ctx.fill();
  }
}

function setPending(value: boolean): void {
  pending = value;
  for (const b of Object.values(buttons)) b.disabled = value;
  statusEl.textContent = value ? "editing…" : "";
}

fileInput.addEventListener("change", () => {
  const file = fileInput.files?.[0];
  if (!file) return;
  sourceBlob = file;
  const img = new Image();
  img.onload = () => {
    sourceImage = img;
    sourceCanvas.width = img.width;
    sourceCanvas.height = img.height;
    session = new EditorSession(img.width, img.height);
    resultImg.removeAttribute("src");
    redraw();
  };
  img.src = URL.createObjectURL(file);
});

function canvasPos(event: MouseEvent): { x: number; y: number } {
  const rect = sourceCanvas.getBoundingClientRect();
  return {
    x: ((event.clientX - rect.left) * sourceCanvas.width) / rect.width,
    y: ((event.clientY - rect.top) * sourceCanvas.height) / rect.height,
  };
}

let painting = false;
let paintPath: Array<{ x: number; y: number }> = [];

sourceCanvas.addEventListener("mousedown", (e) => {
  if (!session || pending) return;
  const pos = canvasPos(e);
  session.brush.mode = modeMask.checked ? "mask" : "scribble";
  session.brush.radius = parseInt(radiusInput.value, 10);
  session.brush.color = hexToRgb(colorInput.value);
  if (session.brush.mode === "mask") {
    painting = true;
    paintPath = [pos];
  } else {
    session.addScribble(pos.x, pos.y);
    redraw();
  }
});

sourceCanvas.addEventListener("mousemove", (e) => {
  if (!painting) return;
  paintPath.push(canvasPos(e));
});

window.addEventListener("mouseup", () => {
  if (!painting || !session) return;
  painting = false;
  session.paintMask(paintPath, session.brush.radius);
  paintPath = [];
  redraw();
});

buttons.undo.addEventListener("click", () => {
  session?.undo();
  redraw();
});

buttons.redo.addEventListener("click", () => {
  session?.redo();
  redraw();
});

buttons.submit.addEventListener("click", async () => {
  if (!session || !sourceBlob || pending) return;
  setPending(true);
  try {
    const result = await submit(session, sourceBlob, baseUrl);
    resultImg.src = URL.createObjectURL(result.blob);
    statusEl.textContent = result.editMs === null ? "" : `${result.editMs.toFixed(0)} ms`;
  } catch (err) {
    statusEl.textContent = String(err);
  } finally {
    for (const b of Object.values(buttons)) b.disabled = false;
    pending = false;
  }
});

buttons.export.addEventListener("click", () => {
  if (!session?.lastResult) return;
  const a = document.createElement("a");
  a.href = URL.createObjectURL(session.lastResult);
  a.download = "edited.png";
  a.click();
});
