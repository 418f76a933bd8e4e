// Pure HTML-string renderers. Every function maps state to markup with no
// side effects, so the views are unit-testable without a DOM.

import type {
  ConnectionState,
  RecommendationRow,
  SessionView,
  TimelineStep,
  VocabularyItem,
} from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

function formatDt(dt: number): string {
  return dt >= 10 ? `${Math.round(dt)}s` : `${dt.toFixed(1)}s`;
}

function constituentChips(constituents: string[]): string {
  return constituents
    .map((name) => `<span class="chip">${escapeHtml(name)}</span>`)
    .join("");
}

export function renderStep(step: TimelineStep, position: number): string {
  const classes = ["step"];
  if (step.is_workflow) classes.push("step-workflow");
  if (step.vocabulary_id === null) classes.push("step-unknown");
  const occ = step.occ > 1 ? `<span class="occ">&times;${step.occ}</span>` : "";
  const unknown =
    step.vocabulary_id === null ? `<span class="unknown-tag">unmodeled</span>` : "";
  const chips = step.is_workflow
    ? `<div class="step-chips">${constituentChips(step.constituents)}</div>`
    : "";
  return `
    <li class="${classes.join(" ")}" data-position="${position}">
      <div class="step-head">
        <span class="step-name">${escapeHtml(step.name)}</span>${occ}${unknown}
        <span class="step-dt">${formatDt(step.dt)}</span>
      </div>
      ${chips}
    </li>
  `;
}

export function renderTimeline(steps: TimelineStep[]): string {
  if (steps.length === 0) {
    return `<p class="placeholder">no commands yet</p>`;
  }
  return `<ol class="timeline">${steps
    .map((step, i) => renderStep(step, i))
    .join("")}</ol>`;
}

export function renderRecommendationRow(
  row: RecommendationRow,
  index: number,
  expanded: ReadonlySet<number>,
): string {
  const pct = Math.round(row.probability * 100);
  const width = Math.max(2, pct);
  const isOpen = expanded.has(row.dense_id);
  const toggle = row.is_workflow
    ? `<button class="toggle" data-action="toggle" data-dense-id="${row.dense_id}">` +
      `${isOpen ? "hide" : "show"} ${row.constituents.length} steps</button>`
    : "";
  const details =
    row.is_workflow && isOpen
      ? `<div class="row-chips">${constituentChips(row.constituents)}</div>`
      : "";
  return `
    <li class="rec${row.is_workflow ? " rec-workflow" : ""}">
      <button class="rec-accept" data-action="accept" data-index="${index}">
        <span class="rec-name">${escapeHtml(row.name)}</span>
        <span class="rec-bar"><span class="rec-fill" style="width:${width}%"></span></span>
        <span class="rec-pct">${pct}%</span>
      </button>
      ${toggle}
      ${details}
    </li>
  `;
}

export function renderRecommendations(view: SessionView): string {
  if (view.recommendations.length === 0) {
    const note = view.recommendationsMessage
      ? `<p class="service-note">${escapeHtml(view.recommendationsMessage)}</p>`
      : "";
    return `<p class="placeholder">perform an action to get suggestions</p>${note}`;
  }
  const note = view.recommendationsMessage
    ? `<p class="service-note">${escapeHtml(view.recommendationsMessage)}</p>`
    : "";
  return `${note}<ol class="recs">${view.recommendations
    .map((row, i) => renderRecommendationRow(row, i, view.expanded))
    .join("")}</ol>`;
}

export function renderPalette(vocabulary: VocabularyItem[]): string {
  const commands = vocabulary.filter((item) => !item.is_workflow);
  if (commands.length === 0) {
    return `<p class="placeholder">vocabulary unavailable</p>`;
  }
  return `<div class="palette">${commands
    .map(
      (item) =>
        `<button class="palette-btn" data-action="palette" ` +
        `data-name="${escapeHtml(item.name)}">${escapeHtml(item.name)}</button>`,
    )
    .join("")}</div>`;
}

const CONNECTION_LABEL: Record<ConnectionState, string> = {
  connecting: "connecting…",
  live: "live",
  retrying: "reconnecting…",
  closed: "offline",
};

export function renderStatus(view: SessionView): string {
  const pending =
    view.pending.length > 0
      ? `<span class="pending">${view.pending.length} queued</span>`
      : "";
  const session = view.sessionId
    ? `<span class="session-id">${escapeHtml(view.sessionId.slice(0, 8))}</span>`
    : "";
  return `
    <span class="conn conn-${view.connection}">${CONNECTION_LABEL[view.connection]}</span>
    ${pending}${session}
  `;
}

export function renderBanner(view: SessionView): string {
  if (!view.banner) return "";
  return `<div class="banner">${escapeHtml(view.banner)}</div>`;
}

export function renderFieldError(view: SessionView): string {
  if (!view.fieldError) return "";
  return `<p class="field-error">${escapeHtml(view.fieldError)}</p>`;
}
