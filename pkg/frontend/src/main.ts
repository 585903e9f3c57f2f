// Bootstraps the refinement console: sample picker, canvas, chat box.
// Session ids persist in localStorage per image, so reloading the page
// rehydrates the transcript from GET /api/session/{id}.

import { ApiError, fetchSamples, fetchSession, imageUrl, openSession, submitRefinement } from "./api.js";
import { drawScene } from "./render.js";
import {
  applySessionPayload,
  initialState,
  invariantsOk,
  markFailure,
  markPending,
  setDisplayScale,
  type ViewState,
} from "./state.js";

const BASE_URL = (window as { TEXTGRASP_BASE_URL?: string }).TEXTGRASP_BASE_URL ??
  "http://127.0.0.1:8008";
const DISPLAY_SIZE = 448;

let state: ViewState = initialState();
let imageEl: HTMLImageElement | null = null;

const canvas = document.getElementById("view") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const picker = document.getElementById("picker") as HTMLSelectElement;
const chatLog = document.getElementById("chat-log") as HTMLDivElement;
const chatInput = document.getElementById("chat-input") as HTMLInputElement;
const chatSend = document.getElementById("chat-send") as HTMLButtonElement;
const toast = document.getElementById("toast") as HTMLDivElement;

function redraw(): void {
  drawScene(ctx, imageEl, state.overlays, state.warning);
  chatLog.replaceChildren(
    ...state.transcript.map((turn) => {
      const div = document.createElement("div");
      div.className = `turn ${turn.role}`;
      div.textContent = `${turn.role === "user" ? "you" : "model"}: ${turn.text}`;
      return div;
    }),
  );
  chatLog.scrollTop = chatLog.scrollHeight;
  chatInput.disabled = state.pending || state.sessionId === null;
  chatSend.disabled = chatInput.disabled;
  if (!invariantsOk(state)) {
    console.warn("overlay role invariant violated", state.overlays);
  }
}

function showToast(message: string): void {
  toast.textContent = message;
  toast.classList.add("visible");
  setTimeout(() => toast.classList.remove("visible"), 2500);
}

async function loadImage(id: string): Promise<void> {
  imageEl = new Image();
  imageEl.src = imageUrl(BASE_URL, id);
  await imageEl.decode();
}

async function selectSample(id: string): Promise<void> {
  state = initialState();
  state = setDisplayScale(state, 1);
  await loadImage(id);
  const stored = localStorage.getItem(`textgrasp-session-${id}`);
  try {
    const payload = stored
      ? await fetchSession(BASE_URL, stored)
      : await openSession(BASE_URL, id);
    localStorage.setItem(`textgrasp-session-${id}`, payload.session_id);
    state = withScaleFor(payload.image_size[0]);
    state = applySessionPayload(state, payload);
  } catch (err) {
    if (stored && err instanceof ApiError && err.status === 404) {
      localStorage.removeItem(`textgrasp-session-${id}`);
      return selectSample(id);
    }
    state = markFailure(state, String(err));
  }
  redraw();
}

function withScaleFor(imageWidth: number): ViewState {
  const scale = imageWidth > 0 ? DISPLAY_SIZE / imageWidth : 1;
  return setDisplayScale({ ...state, overlays: [] }, scale);
}

async function sendRefinement(): Promise<void> {
  const message = chatInput.value.trim();
  const sessionId = state.sessionId;
  if (!message || sessionId === null) return;
  try {
    state = markPending(state);
  } catch {
    showToast("refinement in progress");
    return;
  }
  redraw();
  try {
    const payload = await submitRefinement(BASE_URL, sessionId, message);
    state = applySessionPayload(state, payload);
    chatInput.value = "";
  } catch (err) {
    if (err instanceof ApiError && err.status === 409) {
      state = markFailure(state, null);
      showToast("refinement in progress");
    } else if (err instanceof ApiError && err.status === 502) {
      state = markFailure(state, "endpoint unavailable; try again");
    } else {
      state = markFailure(state, String(err));
    }
  }
  redraw();
}

async function boot(): Promise<void> {
  canvas.width = DISPLAY_SIZE;
  canvas.height = DISPLAY_SIZE;
  const samples = await fetchSamples(BASE_URL);
  picker.replaceChildren(
    ...samples.map((s) => {
      const option = document.createElement("option");
      option.value = s.id;
      option.textContent = `${s.id} (${s.category})`;
      return option;
    }),
  );
  picker.addEventListener("change", () => void selectSample(picker.value));
  chatSend.addEventListener("click", () => void sendRefinement());
  chatInput.addEventListener("keydown", (e) => {
    if (e.key === "Enter") void sendRefinement();
  });
  const first = samples[0];
  if (first) await selectSample(first.id);
  redraw();
}

void boot();
