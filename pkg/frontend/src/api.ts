// Thin typed wrappers over the service endpoints.

import type { SampleSummary, SessionPayload } from "./types.js";

export class ApiError extends Error {
  constructor(
    message: string,
    public status: number,
  ) {
    super(message);
  }
}

async function expectJson<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = await resp.json();
      if (body && typeof body.detail === "string") detail = body.detail;
    } catch {
      // keep statusText
    }
    throw new ApiError(detail, resp.status);
  }
  return (await resp.json()) as T;
}

export async function fetchSamples(baseUrl: string, fold?: number): Promise<SampleSummary[]> {
  const url = new URL(`${baseUrl}/api/samples`);
  if (fold !== undefined) url.searchParams.set("fold", String(fold));
  const body = await expectJson<{ samples: SampleSummary[] }>(await fetch(url));
  return body.samples;
}

export function imageUrl(baseUrl: string, imageId: string): string {
  return `${baseUrl}/api/image/${imageId}`;
}

export async function openSession(
  baseUrl: string,
  imageId: string,
  instruction?: string,
): Promise<SessionPayload> {
  const resp = await fetch(`${baseUrl}/api/session`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({ image_id: imageId, instruction: instruction ?? null }),
  });
  return expectJson<SessionPayload>(resp);
}

export async function submitRefinement(
  baseUrl: string,
  sessionId: string,
  message: string,
): Promise<SessionPayload> {
  const resp = await fetch(`${baseUrl}/api/session/${sessionId}/refine`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({ message }),
  });
  return expectJson<SessionPayload>(resp);
}

export async function fetchSession(baseUrl: string, sessionId: string): Promise<SessionPayload> {
  return expectJson<SessionPayload>(await fetch(`${baseUrl}/api/session/${sessionId}`));
}
