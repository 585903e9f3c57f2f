export interface GraspPose {
  x: number;
  y: number;
  theta: number;
}

export type Corner = [number, number];

export type OverlayRole = "initial" | "intermediate" | "latest";

export interface Overlay {
  pose: GraspPose;
  corners: Corner[];
  role: OverlayRole;
  color: string;
}

export interface ChatTurn {
  role: "user" | "assistant";
  text: string;
  pose: GraspPose | null;
}

// server payloads --------------------------------------------------------

export interface ServerOverlay {
  pose: GraspPose;
  rect: Corner[];
  role: OverlayRole;
}

export interface PredictionPayload {
  reasoning: string;
  pose: GraspPose | null;
  raw: string;
  overlay: Corner[] | null;
  diagnostics: string[];
  image_size: [number, number];
}

export interface SessionPayload extends PredictionPayload {
  session_id: string;
  image_id: string;
  history: ChatTurn[];
  overlays: ServerOverlay[];
}

export interface SampleSummary {
  id: string;
  image: string;
  category: string;
  fold: number | null;
}
