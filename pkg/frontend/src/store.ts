// The console's single state container. Pure state transitions live here;
// network orchestration lives in the controller.

import type {
  CommandEvent,
  ConnectionState,
  EventDelta,
  RecommendationRow,
  RecommendationsPayload,
  SessionView,
  TimelineStep,
  VocabularyItem,
} from "./types.js";

export type Listener = (view: SessionView) => void;

function sameTimeline(a: TimelineStep[], b: TimelineStep[]): boolean {
  return (
    a.length === b.length &&
    a.every((step, i) => JSON.stringify(step) === JSON.stringify(b[i]))
  );
}

function stripIndex(entry: TimelineStep & { index: number }): TimelineStep {
  const { index: _index, ...step } = entry;
  return step;
}

export class SessionStore {
  private view: SessionView = {
    sessionId: null,
    timeline: [],
    revision: 0,
    recommendations: [],
    recommendationsRevision: -1,
    recommendationsMessage: null,
    vocabulary: [],
    connection: "connecting",
    pending: [],
    banner: null,
    fieldError: null,
    expanded: new Set(),
  };
  private listeners: Listener[] = [];

  getView(): SessionView {
    return this.view;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private commit(patch: Partial<SessionView>): void {
    this.view = { ...this.view, ...patch };
    for (const listener of this.listeners) listener(this.view);
  }

  setSession(sessionId: string): void {
    this.commit({
      sessionId,
      timeline: [],
      revision: 0,
      recommendations: [],
      recommendationsRevision: -1,
      recommendationsMessage: null,
      fieldError: null,
    });
  }

  setVocabulary(items: VocabularyItem[]): void {
    this.commit({ vocabulary: items });
  }

  /** Replace the timeline wholesale (stream snapshot). */
  applySnapshot(steps: TimelineStep[]): void {
    if (sameTimeline(this.view.timeline, steps)) return;
    this.commit({ timeline: steps, revision: this.view.revision + 1 });
  }

  /**
   * Apply a minimal edit script: removals index the old timeline and are
   * applied in descending order, additions index the new timeline and are
   * applied in ascending order.
   */
  applyDelta(delta: EventDelta): void {
    if (delta.added.length === 0 && delta.removed.length === 0) return;
    const next = [...this.view.timeline];
    const removals = [...delta.removed].sort((a, b) => b.index - a.index);
    for (const entry of removals) next.splice(entry.index, 1);
    const additions = [...delta.added].sort((a, b) => a.index - b.index);
    for (const entry of additions) next.splice(entry.index, 0, stripIndex(entry));
    this.commit({ timeline: next, revision: this.view.revision + 1 });
  }

  setRecommendations(payload: RecommendationsPayload, revision: number): void {
    this.commit({
      recommendations: payload.recommendations,
      recommendationsRevision: revision,
      recommendationsMessage: payload.message ?? null,
    });
  }

  /** True when the timeline changed after the current list was fetched. */
  recommendationsStale(): boolean {
    return this.view.recommendationsRevision !== this.view.revision;
  }

  setConnection(state: ConnectionState): void {
    if (state === this.view.connection) return;
    const patch: Partial<SessionView> = { connection: state };
    if (state === "live") patch.banner = null;
    this.commit(patch);
  }

  enqueue(event: CommandEvent): void {
    this.commit({ pending: [...this.view.pending, event] });
  }

  takePending(): CommandEvent[] {
    const pending = this.view.pending;
    if (pending.length > 0) this.commit({ pending: [] });
    return pending;
  }

  setBanner(banner: string | null): void {
    this.commit({ banner });
  }

  setFieldError(message: string | null): void {
    this.commit({ fieldError: message });
  }

  toggleExpanded(denseId: number): void {
    const expanded = new Set(this.view.expanded);
    if (expanded.has(denseId)) expanded.delete(denseId);
    else expanded.add(denseId);
    this.commit({ expanded });
  }

  rowAt(index: number): RecommendationRow | undefined {
    return this.view.recommendations[index];
  }
}
