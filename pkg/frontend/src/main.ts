import { AnnotationApi, ApiError, Projection } from "./api.js";
import { renderOverlay } from "./overlay.js";
import {
  Action,
  ViewState,
  applyError,
  applyProjection,
  clickAt,
  escape,
  gotoFrame,
  initialState,
  keyboardFaceMove,
  selectFace,
  setMode,
} from "./state.js";

// Browser entry point. Wires the pure state machine to the DOM: an <img>
// with a same-sized canvas on top, a toolbar of mode buttons, and a keyboard
// handler for face grow/shrink. All geometry happens server-side; the only
// numbers drawn are the ones the service returned.

function must<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (el === null) throw new Error(`missing element #${id}`);
  return el as T;
}

export function boot(root: string = ""): void {
  const api = new AnnotationApi(root);
  const img = must<HTMLImageElement>("frame");
  const canvas = must<HTMLCanvasElement>("overlay");
  const status = must<HTMLDivElement>("status");
  const ctx = canvas.getContext("2d");
  if (ctx === null) throw new Error("no 2d context");

  let state: ViewState = initialState([]);
  let sid = 0;
  let busy = false; // one in-flight mutation at a time

  function redraw(): void {
    renderOverlay(ctx!, canvas.width, canvas.height, state.overlay, state.error,
      state.selectedFace);
    status.textContent =
      `frame ${state.frame} | mode ${state.mode}` +
      (state.selectedBox === null
        ? ""
        : ` | box ${state.selectedBox} face ${state.selectedFace ?? "-"}`);
  }

  function showFrame(): void {
    if (state.frame !== "") {
      img.src = api.frameImageUrl(sid, state.frame);
    }
    redraw();
  }

  async function refreshProjection(): Promise<void> {
    if (state.selectedBox === null) return;
    const proj: Projection = await api.project(sid, state.selectedBox, state.frame);
    state = applyProjection(state, proj);
    redraw();
  }

  async function dispatch(action: Action): Promise<void> {
    if (busy) return;
    busy = true;
    try {
      if (action.kind === "set_vps") {
        await api.setVanishingPoints(sid, action.frame, action.vpX, action.vpY);
      } else if (action.kind === "set_origin") {
        await api.setOrigin(sid, action.frameA, action.pxA, action.frameB, action.pxB);
      } else if (action.kind === "move_face") {
        await api.moveFace(sid, action.box, action.face, action.delta);
      }
      await refreshProjection();
    } catch (err) {
      const msg = err instanceof ApiError ? err.message : String(err);
      state = applyError(state, msg);
      redraw();
    } finally {
      busy = false;
    }
  }

  canvas.addEventListener("click", (ev: MouseEvent) => {
    const rect = canvas.getBoundingClientRect();
    const out = clickAt(state, ev.clientX - rect.left, ev.clientY - rect.top);
    state = out.state;
    redraw();
    if (out.action !== null) void dispatch(out.action);
  });

  document.addEventListener("keydown", (ev: KeyboardEvent) => {
    if (ev.key === "Escape") {
      state = escape(state);
      redraw();
      return;
    }
    if (ev.key === "ArrowLeft" || ev.key === "ArrowRight") {
      const i = state.frames.indexOf(state.frame);
      const next = state.frames[i + (ev.key === "ArrowLeft" ? -1 : 1)];
      if (next !== undefined) {
        state = gotoFrame(state, next);
        showFrame();
        void refreshProjection().catch(() => undefined);
      }
      return;
    }
    const action = keyboardFaceMove(state, ev.key);
    if (action !== null) void dispatch(action);
  });

  for (const mode of ["vp", "correspondence", "select"] as const) {
    must<HTMLButtonElement>(`mode-${mode}`).addEventListener("click", () => {
      state = setMode(state, mode);
      redraw();
    });
  }
  for (const face of ["+x", "-x", "+y", "-y", "+z", "-z"]) {
    must<HTMLButtonElement>(`face-${face}`).addEventListener("click", () => {
      if (state.selectedBox !== null) {
        state = selectFace(state, state.selectedBox, face);
        redraw();
      }
    });
  }
  must<HTMLButtonElement>("new-box").addEventListener("click", () => {
    void (async () => {
      try {
        const box = await api.createBox(sid, "object");
        state = selectFace(state, box.box_id, "+x");
        await refreshProjection();
      } catch (err) {
        const msg = err instanceof ApiError ? err.message : String(err);
        state = applyError(state, msg);
        redraw();
      }
    })();
  });

  void (async () => {
    const sessions = await api.listSessions();
    if (sessions.length === 0) {
      state = applyError(state, "no sessions on server");
      redraw();
      return;
    }
    const info = sessions[0];
    sid = info.session_id;
    canvas.width = info.width;
    canvas.height = info.height;
    state = initialState(info.frames);
    showFrame();
  })();
}
