import { describe, expect, it } from "vitest";

import { SessionStore } from "../src/store.js";
import type { DeltaEntry, TimelineStep } from "../src/types.js";

function step(name: string, over: Partial<TimelineStep> = {}): TimelineStep {
  return {
    name,
    dt: 1.0,
    occ: 1,
    vocabulary_id: 0,
    is_workflow: false,
    constituents: [],
    ...over,
  };
}

function entry(index: number, name: string, over: Partial<TimelineStep> = {}): DeltaEntry {
  return { index, ...step(name, over) };
}

function delta(added: DeltaEntry[], removed: DeltaEntry[], length = 0) {
  return { session_id: "s", length, added, removed };
}

describe("SessionStore deltas", () => {
  it("appends added entries at their post-edit index", () => {
    const store = new SessionStore();
    store.applyDelta(delta([entry(0, "Wall")], []));
    store.applyDelta(delta([entry(1, "Door")], []));
    expect(store.getView().timeline.map((s) => s.name)).toEqual(["Wall", "Door"]);
    expect(store.getView().revision).toBe(2);
  });

  it("replaces a folded step in place (removed is pre-edit, added post-edit)", () => {
    const store = new SessionStore();
    store.applySnapshot([step("Save"), step("Wall")]);
    store.applyDelta(
      delta(
        [entry(1, "Wall; Door", { is_workflow: true, constituents: ["Wall", "Door"] })],
        [entry(1, "Wall")],
      ),
    );
    expect(store.getView().timeline.map((s) => s.name)).toEqual([
      "Save",
      "Wall; Door",
    ]);
  });

  it("applies multi-step folds: two removals, one workflow added", () => {
    const store = new SessionStore();
    store.applySnapshot([step("Save"), step("Wall; Door"), step("Roof")]);
    store.applyDelta(
      delta(
        [
          entry(1, "Wall; Door; Roof", {
            is_workflow: true,
            constituents: ["Wall", "Door", "Roof"],
          }),
        ],
        [entry(1, "Wall; Door"), entry(2, "Roof")],
      ),
    );
    expect(store.getView().timeline.map((s) => s.name)).toEqual([
      "Save",
      "Wall; Door; Roof",
    ]);
  });

  it("sorts removal indices itself rather than trusting payload order", () => {
    const store = new SessionStore();
    store.applySnapshot([step("A"), step("B"), step("C")]);
    store.applyDelta(delta([], [entry(0, "A"), entry(2, "C")]));
    expect(store.getView().timeline.map((s) => s.name)).toEqual(["B"]);
  });

  it("bumps an occurrence-folded step", () => {
    const store = new SessionStore();
    store.applySnapshot([step("Save")]);
    store.applyDelta(delta([entry(0, "Save", { occ: 2 })], [entry(0, "Save")]));
    const view = store.getView();
    expect(view.timeline).toHaveLength(1);
    expect(view.timeline[0]?.occ).toBe(2);
  });

  it("ignores empty deltas", () => {
    const store = new SessionStore();
    store.applySnapshot([step("A")]);
    const before = store.getView().revision;
    store.applyDelta(delta([], []));
    expect(store.getView().revision).toBe(before);
  });
});

describe("SessionStore snapshots and staleness", () => {
  it("does not bump the revision for an identical snapshot", () => {
    const store = new SessionStore();
    store.applySnapshot([step("Wall")]);
    const before = store.getView().revision;
    store.applySnapshot([step("Wall")]);
    expect(store.getView().revision).toBe(before);
  });

  it("marks recommendations stale only when the timeline moved on", () => {
    const store = new SessionStore();
    store.applySnapshot([step("Wall")]);
    store.setRecommendations(
      { session_id: "s", k: 5, recommendations: [] },
      store.getView().revision,
    );
    expect(store.recommendationsStale()).toBe(false);
    store.applyDelta(delta([entry(1, "Door")], []));
    expect(store.recommendationsStale()).toBe(true);
  });

  it("starts stale so the first fetch always happens", () => {
    expect(new SessionStore().recommendationsStale()).toBe(true);
  });
});

describe("SessionStore queue and UI state", () => {
  it("queues pending events and hands them back once", () => {
    const store = new SessionStore();
    store.enqueue({ prefix: "Tool", message: "Wall" });
    store.enqueue({ prefix: "Tool", message: "Door" });
    expect(store.getView().pending).toHaveLength(2);
    const drained = store.takePending();
    expect(drained.map((e) => e.message)).toEqual(["Wall", "Door"]);
    expect(store.getView().pending).toEqual([]);
  });

  it("clears the banner when the stream goes live", () => {
    const store = new SessionStore();
    store.setBanner("connection lost");
    store.setConnection("live");
    expect(store.getView().banner).toBeNull();
  });

  it("toggles workflow expansion per dense id", () => {
    const store = new SessionStore();
    store.toggleExpanded(3);
    expect(store.getView().expanded.has(3)).toBe(true);
    store.toggleExpanded(3);
    expect(store.getView().expanded.has(3)).toBe(false);
  });

  it("notifies subscribers and honours unsubscribe", () => {
    const store = new SessionStore();
    let calls = 0;
    const off = store.subscribe(() => {
      calls += 1;
    });
    store.setBanner("x");
    off();
    store.setBanner("y");
    expect(calls).toBe(1);
  });

  it("resets per-session state when a new session starts", () => {
    const store = new SessionStore();
    store.applySnapshot([step("Wall")]);
    store.setRecommendations(
      { session_id: "s", k: 5, recommendations: [] },
      store.getView().revision,
    );
    store.setSession("next");
    const view = store.getView();
    expect(view.sessionId).toBe("next");
    expect(view.timeline).toEqual([]);
    expect(view.revision).toBe(0);
    expect(store.recommendationsStale()).toBe(true);
  });
});
