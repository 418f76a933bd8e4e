// Browser entry point: mounts the console onto the static page served by the
// recommendation service and re-renders on every store change.

import { ApiClient } from "./api.js";
import { Console } from "./controller.js";
import {
  renderBanner,
  renderFieldError,
  renderPalette,
  renderRecommendations,
  renderStatus,
  renderTimeline,
} from "./render.js";
import { SessionStore } from "./store.js";

function mount(): void {
  const timelineEl = document.getElementById("timeline")!;
  const recsEl = document.getElementById("recommendations")!;
  const paletteEl = document.getElementById("palette")!;
  const statusEl = document.getElementById("status")!;
  const bannerEl = document.getElementById("banner")!;
  const errorEl = document.getElementById("field-error")!;
  const form = document.getElementById("command-form") as HTMLFormElement;
  const input = document.getElementById("command-input") as HTMLInputElement;
  const undoBtn = document.getElementById("undo-btn")!;

  const store = new SessionStore();
  const api = new ApiClient("");
  const console_ = new Console(api, store);

  store.subscribe((view) => {
    timelineEl.innerHTML = renderTimeline(view.timeline);
    recsEl.innerHTML = renderRecommendations(view);
    paletteEl.innerHTML = renderPalette(view.vocabulary);
    statusEl.innerHTML = renderStatus(view);
    bannerEl.innerHTML = renderBanner(view);
    errorEl.innerHTML = renderFieldError(view);
    const last = timelineEl.querySelector(".timeline li:last-child");
    last?.scrollIntoView({ block: "nearest" });
  });

  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    const name = input.value.trim();
    if (!name) return;
    input.value = "";
    void console_.submitPalette(name);
  });

  undoBtn.addEventListener("click", () => void console_.undo());

  document.addEventListener("click", (ev) => {
    const target = (ev.target as HTMLElement).closest<HTMLElement>("[data-action]");
    if (!target) return;
    const action = target.dataset.action;
    if (action === "accept") {
      void console_.acceptRecommendation(Number(target.dataset.index));
    } else if (action === "toggle") {
      console_.toggleWorkflow(Number(target.dataset.denseId));
    } else if (action === "palette") {
      void console_.submitPalette(target.dataset.name ?? "");
    }
  });

  void console_.start().catch((err) => {
    store.setBanner(`failed to start: ${String(err)}`);
  });
}

mount();
