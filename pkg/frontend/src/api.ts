// Thin fetch wrapper around the campaign service. Failures collapse into
// four kinds the state machine can act on; response bodies are parsed but
// never stored beyond the typed fields.

import { ApiError } from "./types.js";
import type { ApiClient, RatingAck, Score, SessionPayload } from "./types.js";

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function request(
  fetchFn: FetchLike,
  url: string,
  token: string,
  init?: RequestInit,
): Promise<Response> {
  let response: Response;
  try {
    response = await fetchFn(url, {
      ...init,
      headers: { ...(init?.headers ?? {}), "X-Annotator-Token": token },
    });
  } catch {
    throw new ApiError("network", "request did not reach the server");
  }
  if (response.status === 401) {
    throw new ApiError("unauthorized", "token rejected");
  }
  if (response.status === 404) {
    throw new ApiError("missing", "not found");
  }
  if (!response.ok) {
    let detail = `server rejected the request (${response.status})`;
    try {
      const body = (await response.json()) as { detail?: string };
      if (body.detail) detail = body.detail;
    } catch {
      // keep the generic message when the body is not JSON
    }
    throw new ApiError("rejected", detail);
  }
  return response;
}

export function httpClient(
  baseUrl: string,
  token: string,
  fetchFn: FetchLike = fetch,
): ApiClient {
  const root = baseUrl.replace(/\/$/, "");
  return {
    async loadSession(annotatorId: string): Promise<SessionPayload> {
      const response = await request(
        fetchFn, `${root}/session/${encodeURIComponent(annotatorId)}`, token);
      return (await response.json()) as SessionPayload;
    },
    async submitRating(taskId: string, score: Score): Promise<RatingAck> {
      const response = await request(fetchFn, `${root}/rating`, token, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ task_id: taskId, score }),
      });
      return (await response.json()) as RatingAck;
    },
  };
}
