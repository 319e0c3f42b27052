// DOM rendering for the two screens.  Pure render-from-state: each call
// rebuilds its container; handlers mutate state and ask main.ts to re-render.

import { ApiClient } from "./api";
import {
  AnnotationDraft,
  newAnnotationDraft,
  LEVEL_MAX,
  LEVEL_MIN,
} from "./decisions";
import {
  ReviewViewState,
  currentAsset,
  overlayCells,
  stepCarousel,
  submitProblems,
  taskAssets,
} from "./review";
import { SLIDER_MAX, SLIDER_MIN, SearchViewState, flaggedItems } from "./search";
import { TAXONOMY, TOP_LEVEL_CATEGORIES, displayName } from "./taxonomy";
import type { ReviewCase, SearchItem } from "./types";

export const IMAGE_SCALE = 4;

type Handler = () => void;

export interface ReviewHandlers {
  refresh: Handler;
  rerender: Handler;
  submit: Handler;
}

export interface SearchHandlers {
  rerender: Handler;
  search: Handler;
  slider: (value: number) => void;
  openThing: (thingId: string) => void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") node.className = value;
    else node.setAttribute(key, value);
  }
  for (const child of children) {
    node.append(child);
  }
  return node;
}

function pct(p: number): string {
  return `${(p * 100).toFixed(1)}%`;
}

// ---------------------------------------------------------------- review --

export function renderReview(
  container: HTMLElement,
  state: ReviewViewState,
  api: ApiClient,
  handlers: ReviewHandlers,
): void {
  container.replaceChildren();

  const toolbar = el("div", { class: "toolbar" });
  const nextBtn = el("button", {}, state.task ? "Skip / fetch next" : "Fetch next task");
  nextBtn.onclick = handlers.refresh;
  toolbar.append(nextBtn);
  container.append(toolbar);

  if (state.queueEmpty) {
    container.append(el("p", { class: "muted" }, "Queue is empty — nothing to review right now."));
  }
  if (state.serverError) {
    container.append(el("div", { class: "error" }, state.serverError));
  }
  if (state.lastSubmit) {
    container.append(
      el(
        "p",
        { class: "muted" },
        `Submitted ${state.lastSubmit.task_id}: now ${state.lastSubmit.state}, ` +
          `${state.lastSubmit.examples_applied} example(s) applied at model v${state.lastSubmit.model_version}.`,
      ),
    );
  }
  if (!state.task) return;

  const task = state.task;
  container.append(
    el(
      "div",
      { class: "task-head" },
      el("strong", {}, task.task_id),
      ` on ${task.thing_id} — lease until ${task.lease.expiry}`,
    ),
  );

  // Image carousel with prediction overlays.
  const assetId = currentAsset(state);
  if (assetId) {
    const assets = taskAssets(task);
    const nav = el("div", { class: "carousel-nav" });
    const prev = el("button", {}, "<");
    prev.onclick = () => {
      stepCarousel(state, -1);
      handlers.rerender();
    };
    const next = el("button", {}, ">");
    next.onclick = () => {
      stepCarousel(state, 1);
      handlers.rerender();
    };
    nav.append(prev, ` ${state.carouselIndex + 1} / ${assets.length} `, next);
    container.append(nav);
    container.append(renderImagePane(state, assetId, api, handlers));
  }

  const toggles = el("div", { class: "toggles" });
  toggles.append(
    checkbox("Localization overlay", state.showLocalization, (v) => {
      state.showLocalization = v;
      handlers.rerender();
    }),
    checkbox("Probabilities", state.showProbabilities, (v) => {
      state.showProbabilities = v;
      handlers.rerender();
    }),
  );
  container.append(toggles);

  if (state.showProbabilities) {
    const list = el("ul", { class: "probs" });
    for (const [cat, p] of Object.entries(task.prediction.probabilities).sort()) {
      list.append(el("li", {}, `${displayName(cat)}: ${pct(p)}`));
    }
    container.append(list);
  }

  container.append(renderCasePicker(state, handlers));
  container.append(renderCaseEditor(state, assetId, handlers));

  const problems = submitProblems(state);
  if (problems.length > 0 && state.draft.case !== null) {
    const list = el("ul", { class: "problems" });
    for (const p of problems) list.append(el("li", {}, p));
    container.append(list);
  }

  const submit = el("button", { class: "submit" }, "Submit decision");
  submit.disabled = state.submitting || problems.length > 0;
  submit.onclick = handlers.submit;
  container.append(submit);
}

function renderImagePane(
  state: ReviewViewState,
  assetId: string,
  api: ApiClient,
  handlers: ReviewHandlers,
): HTMLElement {
  const task = state.task!;
  const grid = task.prediction.regions[assetId] ?? [];
  const rows = grid.length;
  const wrap = el("div", { class: "imgwrap" });
  const img = el("img", { src: api.assetUrl(assetId), alt: assetId });
  img.draggable = false;
  wrap.append(img);

  if (state.showLocalization && rows > 0) {
    const hot = overlayCells(task.prediction, assetId, state.overlayTheta);
    const overlay = el("div", { class: "cellgrid" });
    for (let r = 0; r < rows; r++) {
      for (let c = 0; c < grid[r].length; c++) {
        const cell = el("div", { class: "cell", title: `cell (${r}, ${c}): ${pct(grid[r][c])}` });
        if (hot[r][c]) cell.classList.add("hot");
        const rejected = state.draft.rejectedCells.some(
          (x) => x.assetId === assetId && x.row === r && x.col === c,
        );
        if (rejected) cell.classList.add("rejected");
        if (state.draft.case === "reject_detection") {
          cell.classList.add("clickable");
          cell.onclick = () => {
            toggleRejectedCell(state, assetId, r, c);
            handlers.rerender();
          };
        }
        overlay.append(cell);
      }
    }
    wrap.append(overlay);
  }

  if (state.draft.case === "missed_part") {
    wrap.append(renderBboxCanvas(state, assetId, handlers));
  }
  return wrap;
}

function toggleRejectedCell(state: ReviewViewState, assetId: string, row: number, col: number): void {
  const cells = state.draft.rejectedCells;
  const at = cells.findIndex((x) => x.assetId === assetId && x.row === row && x.col === col);
  if (at >= 0) cells.splice(at, 1);
  else cells.push({ assetId, row, col });
}

function activeAnnotation(state: ReviewViewState, assetId: string): AnnotationDraft {
  let ann = state.draft.annotations.find((a) => a.assetId === assetId);
  if (!ann) {
    ann = newAnnotationDraft(assetId);
    state.draft.annotations.push(ann);
  }
  return ann;
}

function renderBboxCanvas(state: ReviewViewState, assetId: string, handlers: ReviewHandlers): HTMLCanvasElement {
  const canvas = el("canvas", { class: "bbox-layer" });
  // Sized by CSS to cover the scaled image; drawing coords are scaled back
  // to asset pixels on commit.
  const sizeTo = () => {
    const rect = canvas.getBoundingClientRect();
    canvas.width = rect.width;
    canvas.height = rect.height;
    redraw();
  };
  const ctx = canvas.getContext("2d");
  let dragStart: { x: number; y: number } | null = null;
  let dragNow: { x: number; y: number } | null = null;

  const redraw = () => {
    if (!ctx) return;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    ctx.strokeStyle = "#ff5252";
    ctx.lineWidth = 2;
    const existing = state.draft.annotations.find((a) => a.assetId === assetId)?.bbox;
    if (existing) {
      ctx.strokeRect(
        existing.x * IMAGE_SCALE,
        existing.y * IMAGE_SCALE,
        existing.w * IMAGE_SCALE,
        existing.h * IMAGE_SCALE,
      );
    }
    if (dragStart && dragNow) {
      ctx.setLineDash([4, 3]);
      ctx.strokeRect(
        Math.min(dragStart.x, dragNow.x),
        Math.min(dragStart.y, dragNow.y),
        Math.abs(dragNow.x - dragStart.x),
        Math.abs(dragNow.y - dragStart.y),
      );
      ctx.setLineDash([]);
    }
  };

  canvas.onpointerdown = (ev) => {
    canvas.setPointerCapture(ev.pointerId);
    dragStart = { x: ev.offsetX, y: ev.offsetY };
    dragNow = dragStart;
  };
  canvas.onpointermove = (ev) => {
    if (!dragStart) return;
    dragNow = { x: ev.offsetX, y: ev.offsetY };
    redraw();
  };
  canvas.onpointerup = () => {
    if (dragStart && dragNow) {
      const x = Math.floor(Math.min(dragStart.x, dragNow.x) / IMAGE_SCALE);
      const y = Math.floor(Math.min(dragStart.y, dragNow.y) / IMAGE_SCALE);
      const w = Math.max(1, Math.round(Math.abs(dragNow.x - dragStart.x) / IMAGE_SCALE));
      const h = Math.max(1, Math.round(Math.abs(dragNow.y - dragStart.y) / IMAGE_SCALE));
      activeAnnotation(state, assetId).bbox = { x, y, w, h };
    }
    dragStart = null;
    dragNow = null;
    handlers.rerender();
  };
  requestAnimationFrame(sizeTo);
  return canvas;
}

function renderCasePicker(state: ReviewViewState, handlers: ReviewHandlers): HTMLElement {
  const cases: [ReviewCase, string][] = [
    ["agree_finalize", "Agree / finalize"],
    ["missed_part", "Flag missed part"],
    ["reject_detection", "Reject detection"],
  ];
  const box = el("div", { class: "case-picker" });
  for (const [value, label] of cases) {
    const radio = el("input", { type: "radio", name: "case" }) as HTMLInputElement;
    radio.checked = state.draft.case === value;
    radio.onchange = () => {
      state.draft.case = value;
      handlers.rerender();
    };
    box.append(el("label", {}, radio, ` ${label}`));
  }
  return box;
}

function renderCaseEditor(
  state: ReviewViewState,
  assetId: string | null,
  handlers: ReviewHandlers,
): HTMLElement {
  const box = el("div", { class: "case-editor" });
  switch (state.draft.case) {
    case "agree_finalize": {
      for (const top of TOP_LEVEL_CATEGORIES) {
        const hint = TAXONOMY[top].map((c) => c.replace(/_/g, " ")).join(", ");
        box.append(
          checkbox(`${displayName(top)} (${hint})`, state.draft.selectedCategories.includes(top), (v) => {
            const set = new Set(state.draft.selectedCategories);
            if (v) set.add(top);
            else set.delete(top);
            state.draft.selectedCategories = TOP_LEVEL_CATEGORIES.filter((c) => set.has(c));
            handlers.rerender();
          }),
        );
      }
      break;
    }
    case "missed_part": {
      if (!assetId) {
        box.append(el("p", { class: "muted" }, "No image to annotate."));
        break;
      }
      const ann = activeAnnotation(state, assetId);
      box.append(
        el(
          "p",
          { class: "muted" },
          ann.bbox
            ? `bbox [${ann.bbox.x}, ${ann.bbox.y}, ${ann.bbox.w}, ${ann.bbox.h}] on ${assetId}`
            : "Drag on the image to draw the missed part.",
        ),
      );
      box.append(renderCategoryPathPicker(ann, handlers));
      const level = el("input", {
        type: "range",
        min: String(LEVEL_MIN),
        max: String(LEVEL_MAX),
        step: "1",
        value: String(ann.level),
      }) as HTMLInputElement;
      level.oninput = () => {
        ann.level = Number(level.value);
        handlers.rerender();
      };
      box.append(el("label", {}, `Sensitivity level ${ann.level} `, level));
      const rationale = el("textarea", {
        placeholder: "Why is this part sensitive?",
        rows: "2",
      }) as HTMLTextAreaElement;
      rationale.value = ann.rationale;
      rationale.oninput = () => {
        ann.rationale = rationale.value;
        handlers.rerender();
      };
      box.append(rationale);
      break;
    }
    case "reject_detection":
      box.append(
        el("p", { class: "muted" }, "Click localization cells on the image to mark them not sensitive."),
      );
      break;
    case null:
      box.append(el("p", { class: "muted" }, "Pick a case to start the decision."));
      break;
  }
  return box;
}

function renderCategoryPathPicker(ann: AnnotationDraft, handlers: ReviewHandlers): HTMLElement {
  const wrap = el("span", { class: "path-picker" });
  const top = el("select", {}) as HTMLSelectElement;
  top.append(el("option", { value: "" }, "category..."));
  for (const cat of TOP_LEVEL_CATEGORIES) {
    const opt = el("option", { value: cat }, displayName(cat));
    if (ann.topCategory === cat) opt.selected = true;
    top.append(opt);
  }
  top.onchange = () => {
    ann.topCategory = top.value || null;
    ann.subCategory = null;
    handlers.rerender();
  };
  wrap.append(top);

  if (ann.topCategory) {
    const sub = el("select", {}) as HTMLSelectElement;
    sub.append(el("option", { value: "" }, "(whole category)"));
    for (const child of TAXONOMY[ann.topCategory]) {
      const opt = el("option", { value: child }, child.replace(/_/g, " "));
      if (ann.subCategory === child) opt.selected = true;
      sub.append(opt);
    }
    sub.onchange = () => {
      ann.subCategory = sub.value || null;
      handlers.rerender();
    };
    wrap.append(" ", sub);
  }
  return wrap;
}

// ---------------------------------------------------------------- search --

export function renderSearch(
  container: HTMLElement,
  state: SearchViewState,
  handlers: SearchHandlers,
): void {
  container.replaceChildren();

  const bar = el("div", { class: "toolbar" });
  const query = el("input", { type: "search", placeholder: "search things..." }) as HTMLInputElement;
  query.value = state.query;
  query.oninput = () => {
    state.query = query.value;
  };
  query.onkeydown = (ev) => {
    if (ev.key === "Enter") handlers.search();
  };
  const go = el("button", {}, "Search");
  go.onclick = handlers.search;
  bar.append(query, go);
  container.append(bar);

  const slider = el("input", {
    type: "range",
    min: String(SLIDER_MIN),
    max: String(SLIDER_MAX),
    step: "0.01",
    value: String(state.slider),
  }) as HTMLInputElement;
  slider.oninput = () => handlers.slider(Number(slider.value));
  container.append(
    el("label", { class: "slider-row" }, `Sensitivity cutoff ${state.slider.toFixed(2)} `, slider),
  );

  if (state.error) {
    container.append(el("div", { class: "error" }, state.error));
  }

  if (state.examples) {
    const strip = el("div", { class: "example-strip" });
    strip.append(el("span", { class: "muted" }, `At ${state.examples.threshold.toFixed(2)} you would see flags on: `));
    if (state.examples.examples.length === 0) {
      strip.append(el("span", { class: "muted" }, "nothing in the catalog"));
    }
    for (const ex of state.examples.examples) {
      strip.append(
        el("span", { class: "chip", title: `max p ${pct(ex.max_probability)}` }, ex.title),
      );
    }
    container.append(strip);
  }

  if (state.results) {
    const grid = el("div", { class: "result-grid" });
    for (const item of state.results.items) {
      grid.append(renderResultCard(item, handlers));
    }
    container.append(grid);
    container.append(
      el("p", { class: "muted" }, `${state.results.total} result(s), page ${state.results.page}`),
    );
    // Belt-and-braces: the flagged badges we just rendered must agree with
    // the payload's thresholds (see flaggedSatisfyThreshold in search.ts).
    void flaggedItems(state);
  }

  if (state.popover) {
    container.append(renderPopover(state, handlers));
  }
}

function renderResultCard(item: SearchItem, handlers: SearchHandlers): HTMLElement {
  const card = el("div", { class: "card" });
  const title = el("a", { href: "#" }, item.title || item.thing_id);
  title.onclick = (ev) => {
    ev.preventDefault();
    handlers.openThing(item.thing_id);
  };
  card.append(el("h3", {}, title));
  if (item.tags.length > 0) {
    card.append(el("p", { class: "muted" }, item.tags.join(", ")));
  }
  for (const cat of item.flags) {
    card.append(
      el("span", { class: "badge flag" }, `${displayName(cat)} ${pct(item.probabilities[cat])}`),
    );
  }
  if (item.gate.status === "blocked") {
    card.append(el("span", { class: "badge gate", title: item.gate.explanation }, item.gate.reason ?? "blocked"));
  }
  return card;
}

function renderPopover(state: SearchViewState, handlers: SearchHandlers): HTMLElement {
  const payload = state.popover!.payload;
  const pop = el("div", { class: "popover" });
  pop.append(el("h3", {}, `Why: ${payload.title || payload.thing_id}`));

  for (const [cat, pairs] of Object.entries(payload.prediction.attributions)) {
    if (pairs.length === 0) continue;
    const list = el("ul", {});
    for (const [feature, value] of pairs) {
      list.append(el("li", {}, `${feature}: ${value >= 0 ? "+" : ""}${value.toFixed(4)}`));
    }
    pop.append(el("h4", {}, `${displayName(cat)} ${pct(payload.prediction.probabilities[cat])}`), list);
  }

  if (payload.annotations.length > 0) {
    pop.append(el("h4", {}, "Moderator notes"));
    const list = el("ul", {});
    for (const ann of payload.annotations) {
      list.append(el("li", {}, `${ann.moderator_id}: "${ann.rationale}"`));
    }
    pop.append(list);
  }

  if (payload.gate.status === "blocked") {
    pop.append(el("p", { class: "error" }, `${payload.gate.reason}: ${payload.gate.explanation}`));
  }
  if (payload.needs_discussion) {
    pop.append(el("p", { class: "muted" }, "This thing is frozen pending moderator discussion."));
  }

  const close = el("button", {}, "Close");
  close.onclick = () => {
    state.popover = null;
    handlers.rerender();
  };
  pop.append(close);
  return pop;
}

function checkbox(label: string, checked: boolean, onChange: (value: boolean) => void): HTMLElement {
  const input = el("input", { type: "checkbox" }) as HTMLInputElement;
  input.checked = checked;
  input.onchange = () => onChange(input.checked);
  return el("label", { class: "check" }, input, ` ${label}`);
}
