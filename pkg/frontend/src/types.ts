// Wire types for the recommendation service plus the console's view state.

/** One step of a session's processed timeline, as the server renders it. */
export interface TimelineStep {
  name: string;
  dt: number;
  occ: number;
  vocabulary_id: number | null;
  is_workflow: boolean;
  constituents: string[];
}

/** A timeline step tagged with its position in an edit script. */
export interface DeltaEntry extends TimelineStep {
  index: number;
}

/**
 * Minimal edit script returned by POST /events and streamed as SSE deltas.
 * `removed` indices refer to the timeline before the edit, `added` indices
 * to the timeline after it.
 */
export interface EventDelta {
  session_id: string;
  length: number;
  added: DeltaEntry[];
  removed: DeltaEntry[];
}

export type StreamFrame =
  | { type: "snapshot"; session_id: string; steps: TimelineStep[] }
  | ({ type: "delta" } & EventDelta);

export interface RecommendationRow {
  name: string;
  dense_id: number;
  probability: number;
  is_workflow: boolean;
  constituents: string[];
}

export interface RecommendationsPayload {
  session_id: string;
  k: number;
  recommendations: RecommendationRow[];
  message?: string;
}

export interface VocabularyItem {
  name: string;
  dense_id: number;
  type: string | null;
  target: string | null;
  is_workflow: boolean;
  constituents: string[];
}

export interface VocabularyPayload {
  size: number;
  hash: string;
  items: VocabularyItem[];
}

export interface TimelinePayload {
  session_id: string;
  events: number;
  steps: TimelineStep[];
}

/** Body of POST /v1/sessions/{id}/events. */
export interface CommandEvent {
  prefix: string;
  message: string;
  category?: string;
  command_id?: number;
  lang?: string;
  ts?: string;
}

export type ConnectionState = "connecting" | "live" | "retrying" | "closed";

/** Everything the console renders for one live session. */
export interface SessionView {
  sessionId: string | null;
  timeline: TimelineStep[];
  /** Bumps on every applied timeline change; stamps recommendation lists. */
  revision: number;
  recommendations: RecommendationRow[];
  recommendationsRevision: number;
  recommendationsMessage: string | null;
  vocabulary: VocabularyItem[];
  connection: ConnectionState;
  /** Commands queued while the transport is down, oldest first. */
  pending: CommandEvent[];
  /** Transport trouble, shown as a retry banner. */
  banner: string | null;
  /** Server-side validation message, shown inline at the composer. */
  fieldError: string | null;
  /** Workflow rows currently expanded to their constituents. */
  expanded: ReadonlySet<number>;
}
