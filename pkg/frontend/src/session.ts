/**
 * Editor session state, kept framework-free so it can be unit tested:
 * the mask layer is a binary raster (1 = keep, 0 = crack), scribbles
 * are vector events in the service's wire form, and every mutation
 * goes through the undo stack.
 */

export interface ScribbleStroke {
  x: number;
  y: number;
  radius: number;
  rgb: [number, number, number];
}

export type BrushMode = "mask" | "scribble";

export interface BrushState {
  mode: BrushMode;
  radius: number;
  color: [number, number, number];
}

interface Snapshot {
  mask: Uint8Array;
  strokes: ScribbleStroke[];
}

export class EditorSession {
  readonly width: number;
  readonly height: number;
  /** binary raster, row-major; 1 = keep, 0 = crack */
  mask: Uint8Array;
  strokes: ScribbleStroke[] = [];
  brush: BrushState = { mode: "scribble", radius: 4, color: [255, 0, 0] };
  lastResult: Blob | null = null;

  private undoStack: Snapshot[] = [];
  private redoStack: Snapshot[] = [];

  constructor(width: number, height: number) {
    this.width = width;
    this.height = height;
    this.mask = new Uint8Array(width * height).fill(1);
  }

  private snapshot(): Snapshot {
    return { mask: this.mask.slice(), strokes: this.strokes.slice() };
  }

  private restore(s: Snapshot): void {
    this.mask = s.mask.slice();
    this.strokes = s.strokes.slice();
  }

  private beginMutation(): void {
    this.undoStack.push(this.snapshot());
    this.redoStack = [];
  }

  /** Paint a crack: set mask pixels to 0 under a circular brush along a path. */
  paintMask(path: Array<{ x: number; y: number }>, radius: number): void {
    this.beginMutation();
    for (const p of path) {
      const r2 = radius * radius;
      const x0 = Math.max(0, Math.floor(p.x - radius));
      const x1 = Math.min(this.width - 1, Math.ceil(p.x + radius));
      const y0 = Math.max(0, Math.floor(p.y - radius));
      const y1 = Math.min(this.height - 1, Math.ceil(p.y + radius));
      for (let y = y0; y <= y1; y++) {
        for (let x = x0; x <= x1; x++) {
          const dx = x - p.x;
          const dy = y - p.y;
          if (dx * dx + dy * dy <= r2) {
            this.mask[y * this.width + x] = 0;
          }
        }
      }
    }
  }

  /** Append one color hint at a click position. */
  addScribble(x: number, y: number): void {
    if (x < 0 || y < 0 || x >= this.width || y >= this.height) {
      throw new Error(`scribble (${x}, ${y}) outside ${this.width}x${this.height} image`);
    }
    this.beginMutation();
    this.strokes.push({
      x: Math.round(x),
      y: Math.round(y),
      radius: this.brush.radius,
      rgb: [...this.brush.color],
    });
  }

  undo(): boolean {
    const prev = this.undoStack.pop();
    if (!prev) return false;
    this.redoStack.push(this.snapshot());
    this.restore(prev);
    return true;
  }

  redo(): boolean {
    const next = this.redoStack.pop();
    if (!next) return false;
    this.undoStack.push(this.snapshot());
    this.restore(next);
    return true;
  }

  maskTouched(): boolean {
    return this.mask.some((v) => v === 0);
  }

  /** Exactly the JSON list the /v1/edit endpoint expects. */
  serializeStrokes(): string {
    return JSON.stringify(
      this.strokes.map((s) => ({ x: s.x, y: s.y, radius: s.radius, rgb: s.rgb }))
    );
  }
}
