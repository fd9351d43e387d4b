import type { Projection } from "./api.js";

// Overlay drawing. Coordinates come from the server payload untouched —
// the canvas is sized 1:1 with the frame so no scaling happens here.

const FACE_COLORS: Record<string, string> = {
  "+x": "#e05555",
  "-x": "#e09955",
  "+y": "#55c065",
  "-y": "#55b0d0",
  "+z": "#9070e0",
  "-z": "#d070b0",
};

/** Minimal surface of CanvasRenderingContext2D used here; lets tests record calls. */
export interface OverlayContext {
  clearRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  closePath(): void;
  stroke(): void;
  fill(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  fillText(text: string, x: number, y: number): void;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  fillStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
}

export function renderOverlay(
  ctx: OverlayContext,
  width: number,
  height: number,
  projection: Projection | null,
  error: string | null,
  selectedFace: string | null = null
): void {
  ctx.clearRect(0, 0, width, height);
  if (error !== null) {
    ctx.fillStyle = "rgba(160,32,32,0.85)";
    ctx.fillRect(0, 0, width, 22);
    ctx.fillStyle = "#ffffff";
    ctx.font = "13px ui-monospace";
    ctx.fillText(error, 6, 15);
    return;
  }
  if (projection === null) return;

  for (const face of projection.faces) {
    ctx.strokeStyle = FACE_COLORS[face.face] ?? "#cccccc";
    ctx.lineWidth = face.face === selectedFace ? 3 : 1.5;
    ctx.beginPath();
    ctx.moveTo(face.polygon[0][0], face.polygon[0][1]);
    for (let i = 1; i < face.polygon.length; i++) {
      ctx.lineTo(face.polygon[i][0], face.polygon[i][1]);
    }
    ctx.closePath();
    ctx.stroke();
  }
  ctx.fillStyle = "#ffffff";
  for (const corner of projection.corners) {
    if (corner === null) continue;
    ctx.beginPath();
    ctx.arc(corner[0], corner[1], 2.5, 0, 2 * Math.PI);
    ctx.fill();
  }
}
