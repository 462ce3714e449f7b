/**
 * Client for the inference service. One request carries the source
 * image, the exported mask PNG (only when touched), and the scribble
 * list; the response body is the edited PNG.
 */

import { EditorSession } from "./session.js";
import { encodeMaskPng } from "./maskpng.js";

export interface SubmitResult {
  blob: Blob;
  editMs: number | null;
}

export async function buildEditForm(
  session: EditorSession,
  imageBlob: Blob
): Promise<FormData> {
  const form = new FormData();
  form.append("image", imageBlob, "image.png");
  if (session.maskTouched()) {
    const png = await encodeMaskPng(session.mask, session.width, session.height);
    form.append("mask", new Blob([png.buffer as ArrayBuffer], { type: "image/png" }), "mask.png");
  }
  if (session.strokes.length > 0) {
    form.append("scribbles", session.serializeStrokes());
  }
  return form;
}

export async function submit(
  session: EditorSession,
  imageBlob: Blob,
  baseUrl: string
): Promise<SubmitResult> {
  const form = await buildEditForm(session, imageBlob);
  const resp = await fetch(`${baseUrl}/v1/edit`, { method: "POST", body: form });
  if (!resp.ok) {
    let detail = `${resp.status}`;
    try {
      const body = await resp.json();
      if (body.error) detail = `${resp.status}: ${body.error}`;
    } catch {
      // non-JSON error body; keep the status code
    }
    throw new Error(`edit request failed (${detail})`);
  }
  const header = resp.headers.get("X-Edit-Ms");
  const blob = await resp.blob();
  session.lastResult = blob;
  return { blob, editMs: header === null ? null : parseFloat(header) };
}

export async function checkHealth(baseUrl: string): Promise<boolean> {
  try {
    const resp = await fetch(`${baseUrl}/v1/health`);
    return resp.ok;
  } catch {
    return false;
  }
}
