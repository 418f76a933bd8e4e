// Thin typed client for the recommendation service's JSON endpoints.

import type {
  CommandEvent,
  EventDelta,
  RecommendationsPayload,
  TimelinePayload,
  VocabularyPayload,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`${status}: ${detail}`);
    this.name = "ApiError";
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

async function readDetail(response: Response): Promise<string> {
  try {
    const body = await response.json();
    if (body && typeof body.detail === "string") return body.detail;
    return JSON.stringify(body);
  } catch {
    return response.statusText || "request failed";
  }
}

export class ApiClient {
  private readonly fetchFn: FetchLike;

  constructor(
    private readonly base: string = "",
    fetchFn?: FetchLike,
  ) {
    this.fetchFn = fetchFn ?? ((url, init) => globalThis.fetch(url, init));
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(this.base + path, init);
    if (!response.ok) {
      throw new ApiError(response.status, await readDetail(response));
    }
    return (await response.json()) as T;
  }

  health(): Promise<{ status: string; sessions: number; backbone: string }> {
    return this.request("/v1/healthz");
  }

  vocabulary(): Promise<VocabularyPayload> {
    return this.request("/v1/vocabulary");
  }

  async createSession(): Promise<string> {
    const body = await this.request<{ session_id: string }>("/v1/sessions", {
      method: "POST",
    });
    return body.session_id;
  }

  timeline(sessionId: string): Promise<TimelinePayload> {
    return this.request(`/v1/sessions/${encodeURIComponent(sessionId)}`);
  }

  submitEvent(sessionId: string, event: CommandEvent): Promise<EventDelta> {
    return this.request(
      `/v1/sessions/${encodeURIComponent(sessionId)}/events`,
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(event),
      },
    );
  }

  recommendations(sessionId: string, k: number): Promise<RecommendationsPayload> {
    return this.request(
      `/v1/sessions/${encodeURIComponent(sessionId)}/recommendations?k=${k}`,
    );
  }

  streamUrl(sessionId: string): string {
    return `${this.base}/v1/sessions/${encodeURIComponent(sessionId)}/stream`;
  }
}
