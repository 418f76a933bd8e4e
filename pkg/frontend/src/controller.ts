// Orchestration: wires the API client, the event stream, and the store
// together. The stream is the single source of timeline truth — POST
// responses only confirm validation, and every applied frame triggers a
// recommendation refresh stamped with the revision it was fetched for.

import { ApiClient, ApiError } from "./api.js";
import { SessionStore } from "./store.js";
import { StreamClient } from "./sse.js";
import type { CommandEvent, ConnectionState, StreamFrame } from "./types.js";

export interface StreamHandle {
  start(): void;
  stop(): void;
}

export type StreamFactory = (
  url: string,
  handlers: {
    onFrame: (frame: StreamFrame) => void;
    onState: (state: ConnectionState) => void;
  },
) => StreamHandle;

const defaultStreamFactory: StreamFactory = (url, handlers) =>
  new StreamClient(url, handlers);

export class Console {
  private stream: StreamHandle | null = null;
  private recommendationCount = 5;

  constructor(
    private readonly api: ApiClient,
    readonly store: SessionStore,
    private readonly streamFactory: StreamFactory = defaultStreamFactory,
  ) {}

  async start(): Promise<void> {
    const vocabulary = await this.api.vocabulary();
    this.store.setVocabulary(vocabulary.items);
    await this.openSession();
  }

  private async openSession(): Promise<void> {
    this.stream?.stop();
    const sessionId = await this.api.createSession();
    this.store.setSession(sessionId);
    this.stream = this.streamFactory(this.api.streamUrl(sessionId), {
      onFrame: (frame) => void this.onFrame(frame),
      onState: (state) => this.onState(state),
    });
    this.stream.start();
  }

  stop(): void {
    this.stream?.stop();
    this.stream = null;
  }

  private async onFrame(frame: StreamFrame): Promise<void> {
    if (frame.type === "snapshot") {
      this.store.applySnapshot(frame.steps);
    } else {
      this.store.applyDelta(frame);
    }
    if (this.store.recommendationsStale()) {
      await this.refreshRecommendations();
    }
  }

  private onState(state: ConnectionState): void {
    this.store.setConnection(state);
    if (state === "live") void this.drainPending();
  }

  async refreshRecommendations(): Promise<void> {
    const sessionId = this.store.getView().sessionId;
    if (!sessionId) return;
    const revision = this.store.getView().revision;
    try {
      const payload = await this.api.recommendations(
        sessionId,
        this.recommendationCount,
      );
      this.store.setRecommendations(payload, revision);
    } catch {
      // The next applied frame retries; stale lists are never shown as fresh.
    }
  }

  /** Submit one command event, queueing it whenever the stream is down. */
  async submitCommand(event: CommandEvent): Promise<void> {
    this.store.setFieldError(null);
    const view = this.store.getView();
    if (!view.sessionId || view.connection !== "live") {
      this.store.enqueue(event);
      return;
    }
    await this.postEvent(view.sessionId, event);
  }

  private async postEvent(sessionId: string, event: CommandEvent): Promise<void> {
    try {
      await this.api.submitEvent(sessionId, event);
    } catch (err) {
      if (err instanceof ApiError && err.status === 422) {
        this.store.setFieldError(err.detail);
        return;
      }
      if (err instanceof ApiError && err.status === 404) {
        this.store.setBanner("session expired — started a new one");
        this.store.enqueue(event);
        await this.openSession();
        return;
      }
      this.store.setBanner("connection lost — command queued");
      this.store.enqueue(event);
    }
  }

  private async drainPending(): Promise<void> {
    const sessionId = this.store.getView().sessionId;
    if (!sessionId) return;
    for (const event of this.store.takePending()) {
      await this.postEvent(sessionId, event);
      if (this.store.getView().connection !== "live") return;
    }
  }

  async submitPalette(name: string): Promise<void> {
    await this.submitCommand({ prefix: "Tool", message: name, category: "Tool" });
  }

  async undo(): Promise<void> {
    await this.submitCommand({
      prefix: "Undo Event",
      message: "Undo",
      category: "UNDO",
    });
  }

  /**
   * Accept the recommendation at `index`. A list fetched for an older
   * timeline is refreshed instead of applied; a workflow expands into its
   * constituent commands, submitted in order.
   */
  async acceptRecommendation(index: number): Promise<void> {
    if (this.store.recommendationsStale()) {
      await this.refreshRecommendations();
      return;
    }
    const row = this.store.rowAt(index);
    if (!row) return;
    const names = row.is_workflow ? row.constituents : [row.name];
    for (const name of names) {
      await this.submitCommand({ prefix: "Tool", message: name, category: "Tool" });
    }
  }

  toggleWorkflow(denseId: number): void {
    this.store.toggleExpanded(denseId);
  }
}
