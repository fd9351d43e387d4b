import { z } from "zod";

// Response schemas; anything off-shape is rejected before it reaches the UI.

const Pixel = z.tuple([z.number(), z.number()]);

export const SessionInfo = z.object({
  session_id: z.number().int(),
  frames: z.array(z.string()),
  width: z.number().int(),
  height: z.number().int(),
});
export type SessionInfo = z.infer<typeof SessionInfo>;

export const Axes = z.object({
  x_dir: z.array(z.number()).length(3),
  y_dir: z.array(z.number()).length(3),
  gravity: z.array(z.number()).length(3),
});
export type Axes = z.infer<typeof Axes>;

export const BoxState = z.object({
  box_id: z.number().int(),
  category: z.string(),
  origin: z.array(z.number()).length(3),
  extents: z.array(z.number()).length(6),
});
export type BoxState = z.infer<typeof BoxState>;

export const FacePolygon = z.object({
  face: z.string(),
  polygon: z.array(Pixel).length(4),
});
export type FacePolygon = z.infer<typeof FacePolygon>;

export const Projection = z.object({
  visible: z.boolean(),
  corners: z.array(Pixel.nullable()),
  faces: z.array(FacePolygon),
});
export type Projection = z.infer<typeof Projection>;

export const Export = z.object({
  boxes: z.array(
    BoxState.omit({ box_id: true }).extend({
      id: z.number().int(),
      axes: z.array(z.number()).length(9),
      frames: z.record(z.string(), z.array(FacePolygon)),
    })
  ),
});
export type Export = z.infer<typeof Export>;

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
  }
}

/** Thin typed client for the annotation service; no geometry on this side. */
export class AnnotationApi {
  constructor(private root: string) {}

  private async call<T>(
    schema: z.ZodType<T>,
    path: string,
    method: string = "GET",
    body: unknown = undefined
  ): Promise<T> {
    const resp = await fetch(`${this.root}${path}`, {
      method,
      body: body === undefined ? undefined : JSON.stringify(body),
      headers: body === undefined ? {} : { "Content-Type": "application/json" },
    });
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        detail = (await resp.json()).detail ?? detail;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(resp.status, String(detail));
    }
    return schema.parse(await resp.json());
  }

  listSessions() {
    return this.call(z.array(SessionInfo), "/sessions");
  }

  openSession(bundlePath: string) {
    return this.call(SessionInfo, "/session", "POST", { bundle_path: bundlePath });
  }

  frameImageUrl(sid: number, frameId: string): string {
    return `${this.root}/session/${sid}/frame/${frameId}/image`;
  }

  setVanishingPoints(sid: number, frameId: string, vpX: [number, number], vpY: [number, number]) {
    return this.call(Axes, `/session/${sid}/vps`, "POST", {
      frame_id: frameId,
      vp_x: vpX,
      vp_y: vpY,
    });
  }

  setOrigin(
    sid: number,
    frameA: string,
    pxA: [number, number],
    frameB: string,
    pxB: [number, number]
  ) {
    return this.call(z.object({ origin: z.array(z.number()).length(3) }),
      `/session/${sid}/origin`, "POST",
      { frame_a: frameA, px_a: pxA, frame_b: frameB, px_b: pxB });
  }

  createBox(sid: number, category: string) {
    return this.call(BoxState, `/session/${sid}/box`, "POST", { category });
  }

  moveFace(sid: number, boxId: number, face: string, delta: number) {
    return this.call(BoxState, `/session/${sid}/box/${boxId}/move`, "POST", {
      face,
      delta,
    });
  }

  project(sid: number, boxId: number, frameId: string) {
    return this.call(Projection, `/session/${sid}/box/${boxId}/project/${frameId}`);
  }

  exportSession(sid: number) {
    return this.call(Export, `/session/${sid}/export`);
  }
}
