// Server-sent-events client on top of fetch, with exponential-backoff
// reconnect. Built on a streaming reader rather than EventSource so the
// same code runs in the browser and under node-based tests.

import type { ConnectionState, StreamFrame } from "./types.js";

/** Reconnect delay for the n-th consecutive failure (0-based). */
export function backoffDelay(attempt: number, base = 500, cap = 8000): number {
  return Math.min(cap, base * 2 ** attempt);
}

/**
 * Split an SSE byte-stream buffer into complete frames and the unfinished
 * tail. Each frame is the joined payload of its `data:` lines; comment
 * lines (keep-alives) produce no frame.
 */
export function parseSseBuffer(buffer: string): {
  frames: string[];
  rest: string;
} {
  const parts = buffer.split(/\r?\n\r?\n/);
  const rest = parts.pop() ?? "";
  const frames: string[] = [];
  for (const part of parts) {
    const data = part
      .split(/\r?\n/)
      .filter((line) => line.startsWith("data:"))
      .map((line) => line.slice(5).replace(/^ /, ""))
      .join("\n");
    if (data) frames.push(data);
  }
  return { frames, rest };
}

export interface StreamHandlers {
  onFrame(frame: StreamFrame): void;
  onState(state: ConnectionState): void;
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;
type SleepFn = (ms: number) => Promise<void>;

const defaultSleep: SleepFn = (ms) =>
  new Promise((resolve) => setTimeout(resolve, ms));

export class StreamClient {
  private stopped = false;
  private controller: AbortController | null = null;
  private readonly fetchFn: FetchLike;
  private readonly sleep: SleepFn;

  constructor(
    private readonly url: string,
    private readonly handlers: StreamHandlers,
    fetchFn?: FetchLike,
    sleep?: SleepFn,
  ) {
    this.fetchFn = fetchFn ?? ((u, init) => globalThis.fetch(u, init));
    this.sleep = sleep ?? defaultSleep;
  }

  /** Run the connect/read/reconnect loop until stop() is called. */
  async run(): Promise<void> {
    let attempt = 0;
    this.handlers.onState("connecting");
    while (!this.stopped) {
      this.controller = new AbortController();
      try {
        const response = await this.fetchFn(this.url, {
          headers: { accept: "text/event-stream" },
          signal: this.controller.signal,
        });
        if (!response.ok || !response.body) {
          throw new Error(`stream failed with status ${response.status}`);
        }
        const reader = response.body.getReader();
        const decoder = new TextDecoder();
        let buffer = "";
        let announced = false;
        for (;;) {
          const { done, value } = await reader.read();
          if (done) break;
          buffer += decoder.decode(value, { stream: true });
          const { frames, rest } = parseSseBuffer(buffer);
          buffer = rest;
          for (const data of frames) {
            if (!announced) {
              announced = true;
              attempt = 0;
              this.handlers.onState("live");
            }
            this.handlers.onFrame(JSON.parse(data) as StreamFrame);
          }
        }
        // Server closed the stream cleanly; reconnect unless stopped.
        throw new Error("stream ended");
      } catch (error) {
        if (this.stopped) break;
        this.handlers.onState("retrying");
        await this.sleep(backoffDelay(attempt));
        attempt += 1;
      }
    }
    this.handlers.onState("closed");
  }

  start(): void {
    void this.run();
  }

  stop(): void {
    this.stopped = true;
    this.controller?.abort();
  }
}
