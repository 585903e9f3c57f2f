// View state for the refinement console. The server is authoritative for
// poses and overlay roles; this module only derives display state (colors,
// pending flag, warnings) and enforces the one-in-flight-request rule that
// mirrors the server's 409 behavior.

import { ROLE_COLORS, scaleCorners } from "./overlay.js";
import type { ChatTurn, Overlay, SessionPayload } from "./types.js";

export interface ViewState {
  imageId: string | null;
  sessionId: string | null;
  imageSize: [number, number];
  displayScale: number;
  overlays: Overlay[];
  transcript: ChatTurn[];
  pending: boolean;
  warning: string | null;
}

export function initialState(): ViewState {
  return {
    imageId: null,
    sessionId: null,
    imageSize: [0, 0],
    displayScale: 1,
    overlays: [],
    transcript: [],
    pending: false,
    warning: null,
  };
}

export function applySessionPayload(state: ViewState, payload: SessionPayload): ViewState {
  const overlays: Overlay[] = payload.overlays.map((o) => ({
    pose: o.pose,
    corners: scaleCorners(o.rect, state.displayScale),
    role: o.role,
    color: ROLE_COLORS[o.role],
  }));
  return {
    ...state,
    imageId: payload.image_id,
    sessionId: payload.session_id,
    imageSize: payload.image_size,
    overlays,
    transcript: payload.history.slice(),
    pending: false,
    warning: payload.pose === null && payload.history.length > 2
      ? "latest reply contained no pose; overlays unchanged"
      : null,
  };
}

export function markPending(state: ViewState): ViewState {
  if (state.pending) {
    throw new Error("a refinement is already in flight for this session");
  }
  return { ...state, pending: true, warning: null };
}

export function markFailure(state: ViewState, message: string | null): ViewState {
  return { ...state, pending: false, warning: message };
}

export function setDisplayScale(state: ViewState, scale: number): ViewState {
  if (scale <= 0 || !Number.isFinite(scale)) {
    throw new Error(`display scale must be positive, got ${scale}`);
  }
  const factor = scale / state.displayScale;
  return {
    ...state,
    displayScale: scale,
    overlays: state.overlays.map((o) => ({ ...o, corners: scaleCorners(o.corners, factor) })),
  };
}

// sanity checks used by tests and debug assertions -------------------------

export function countRole(state: ViewState, role: Overlay["role"]): number {
  return state.overlays.filter((o) => o.role === role).length;
}

export function invariantsOk(state: ViewState): boolean {
  if (state.overlays.length === 0) return true;
  if (countRole(state, "initial") !== 1) return false;
  if (state.overlays.length > 1 && countRole(state, "latest") !== 1) return false;
  return true;
}
