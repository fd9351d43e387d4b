import type { Projection } from "./api.js";

// UI state machine. Pure: every transition returns a new state plus an
// optional API action for the caller to perform. The client never computes
// geometry — clicks and keystrokes only ever become API payloads.

export type Mode = "idle" | "vp" | "correspondence" | "select";

export interface Click {
  frame: string;
  x: number;
  y: number;
}

export interface ViewState {
  frames: string[];
  frame: string;
  mode: Mode;
  pending: Click[];
  selectedBox: number | null;
  selectedFace: string | null;
  step: number;
  overlay: Projection | null;
  error: string | null;
}

export type Action =
  | { kind: "set_vps"; frame: string; vpX: [number, number]; vpY: [number, number] }
  | { kind: "set_origin"; frameA: string; pxA: [number, number]; frameB: string; pxB: [number, number] }
  | { kind: "move_face"; box: number; face: string; delta: number };

export const DEFAULT_STEP = 0.05;

export function initialState(frames: string[]): ViewState {
  return {
    frames,
    frame: frames[0] ?? "",
    mode: "idle",
    pending: [],
    selectedBox: null,
    selectedFace: null,
    step: DEFAULT_STEP,
    overlay: null,
    error: null,
  };
}

/** Mode toggles always drop pending clicks. */
export function setMode(state: ViewState, mode: Mode): ViewState {
  return { ...state, mode, pending: [], error: null };
}

/** Escape returns to idle browsing from any state. */
export function escape(state: ViewState): ViewState {
  return { ...state, mode: "idle", pending: [], selectedBox: null, selectedFace: null };
}

export function gotoFrame(state: ViewState, frame: string): ViewState {
  if (!state.frames.includes(frame)) return { ...state, error: `no frame ${frame}` };
  return { ...state, frame, overlay: null };
}

export function selectFace(state: ViewState, box: number, face: string): ViewState {
  return { ...state, mode: "select", pending: [], selectedBox: box, selectedFace: face };
}

export function clickAt(
  state: ViewState,
  x: number,
  y: number
): { state: ViewState; action: Action | null } {
  if (state.mode !== "vp" && state.mode !== "correspondence") {
    return { state, action: null };
  }
  const pending = [...state.pending, { frame: state.frame, x, y }];
  if (pending.length < 2) {
    return { state: { ...state, pending }, action: null };
  }
  const [a, b] = pending;
  const cleared = { ...state, pending: [] };
  if (state.mode === "vp") {
    return {
      state: cleared,
      action: { kind: "set_vps", frame: state.frame, vpX: [a.x, a.y], vpY: [b.x, b.y] },
    };
  }
  return {
    state: cleared,
    action: {
      kind: "set_origin",
      frameA: a.frame,
      pxA: [a.x, a.y],
      frameB: b.frame,
      pxB: [b.x, b.y],
    },
  };
}

const GROW_KEYS = ["+", "="];
const SHRINK_KEYS = ["-", "_"];

/** A grow/shrink keystroke becomes one move call; anything else is a no-op. */
export function keyboardFaceMove(state: ViewState, key: string): Action | null {
  if (state.selectedBox === null || state.selectedFace === null) return null;
  if (GROW_KEYS.includes(key)) {
    return { kind: "move_face", box: state.selectedBox, face: state.selectedFace, delta: state.step };
  }
  if (SHRINK_KEYS.includes(key)) {
    return { kind: "move_face", box: state.selectedBox, face: state.selectedFace, delta: -state.step };
  }
  return null;
}

/** The overlay always holds the most recent server response verbatim. */
export function applyProjection(state: ViewState, projection: Projection): ViewState {
  return { ...state, overlay: projection, error: null };
}

export function applyError(state: ViewState, message: string): ViewState {
  return { ...state, error: message };
}
