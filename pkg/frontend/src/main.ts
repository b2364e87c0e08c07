/** Application bootstrap: session controls, three orthogonal views,
 * editing tools, stage runs, history with undo, and export links.
 *
 * All segmentation state lives on the service; this file only moves
 * view state around and turns pointer gestures into single edit events.
 * Mutations are queued so at most one is in flight; slice refreshes are
 * concurrent and cancellable.
 */

import { ApiError, Client } from "./api.js";
import type { ViewTransform } from "./geometry.js";
import { assertViewableGrid, fitScale, viewToWorld, worldToView } from "./geometry.js";
import { cssColor, TARGET_COLORS } from "./palette.js";
import { drawView } from "./render.js";
import type { ViewState } from "./state.js";
import {
  beginStroke,
  canEditTarget,
  extendStroke,
  initialViewState,
  requiredStage,
  setCrosshair,
  setSliceIndex,
  setWindowLevel,
  stageRank,
  takeStroke,
  toggleOverlay,
} from "./state.js";
import type { ToolParams } from "./tools.js";
import { DEFAULT_TOOL_PARAMS, GestureError, gestureToEvent, minimumPoints } from "./tools.js";
import type {
  Axis,
  GridInfo,
  Overrides,
  SessionState,
  SliceResponse,
  Target,
  ToolId,
  Vec3,
} from "./types.js";
import { TARGETS } from "./types.js";

const VIEW_AXES: readonly { axis: Axis; label: string }[] = [
  { axis: 2, label: "axial" },
  { axis: 1, label: "coronal" },
  { axis: 0, label: "sagittal" },
];

const CANVAS_SIZE = 384;

interface ViewPanel {
  axis: Axis;
  canvas: HTMLCanvasElement;
  slider: HTMLInputElement;
  indexLabel: HTMLSpanElement;
  slice: SliceResponse | null;
  abort: AbortController | null;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  node.append(...children);
  return node;
}

class App {
  private readonly client: Client;
  private session: SessionState | null = null;
  private grid: GridInfo | null = null;
  private vs: ViewState | null = null;
  private readonly panels: ViewPanel[] = [];
  /** Serializes mutations: gestures, stage runs, undo. */
  private mutations: Promise<void> = Promise.resolve();

  private readonly banner: HTMLDivElement;
  private readonly sessionInput: HTMLInputElement;
  private readonly fileInput: HTMLInputElement;
  private readonly stageLabel: HTMLSpanElement;
  private readonly historyList: HTMLOListElement;
  private readonly volumesList: HTMLUListElement;
  private readonly exportLinks: HTMLDivElement;
  private readonly toolSelect: HTMLSelectElement;
  private readonly targetSelect: HTMLSelectElement;
  private readonly modeSelect: HTMLSelectElement;
  private readonly mergeSelect: HTMLSelectElement;
  private readonly compareSelect: HTMLSelectElement;
  private readonly paramInputs: Record<"radius" | "sigma" | "tubeRadius" | "kSigma" | "roiMargin", HTMLInputElement>;
  private readonly windowInput: HTMLInputElement;
  private readonly levelInput: HTMLInputElement;
  private readonly overlayChecks = new Map<Target, HTMLInputElement>();
  private readonly stageInputs: Record<"lung" | "lesion", { tLow: HTMLInputElement; tHigh: HTMLInputElement; curvature: HTMLInputElement }>;

  constructor(root: HTMLElement, baseUrl: string) {
    this.client = new Client(baseUrl);

    this.banner = el("div", { class: "banner hidden" });
    this.sessionInput = el("input", { type: "text", placeholder: "session id" });
    this.fileInput = el("input", { type: "file", accept: ".nii,.nii.gz,.gz" });
    this.stageLabel = el("span", { class: "stage" }, "no session");
    this.historyList = el("ol", { class: "history" });
    this.volumesList = el("ul", { class: "volumes" });
    this.exportLinks = el("div", { class: "exports" });

    this.toolSelect = el("select", {});
    for (const tool of ["brush", "magnet", "tps-polyline", "poly-spline", "smart-paint"]) {
      this.toolSelect.append(el("option", { value: tool }, tool));
    }
    this.targetSelect = el("select", {});
    for (const target of TARGETS) this.targetSelect.append(el("option", { value: target }, target));
    this.modeSelect = el("select", {});
    for (const mode of ["add", "remove"]) this.modeSelect.append(el("option", { value: mode }, mode));
    this.mergeSelect = el("select", {});
    for (const mode of ["union", "replace"]) this.mergeSelect.append(el("option", { value: mode }, mode));
    this.compareSelect = el("select", {});
    this.compareSelect.append(el("option", { value: "" }, "overlay: plain colors"));
    for (const a of TARGETS) {
      for (const b of TARGETS) {
        if (a >= b) continue;
        this.compareSelect.append(el("option", { value: `${a}|${b}` }, `compare ${a} vs ${b}`));
      }
    }

    const numeric = (value: number, step: string) =>
      el("input", { type: "number", value: String(value), step });
    this.paramInputs = {
      radius: numeric(DEFAULT_TOOL_PARAMS.radius, "0.5"),
      sigma: numeric(DEFAULT_TOOL_PARAMS.sigma, "0.5"),
      tubeRadius: numeric(DEFAULT_TOOL_PARAMS.tubeRadius, "0.5"),
      kSigma: numeric(DEFAULT_TOOL_PARAMS.kSigma, "0.1"),
      roiMargin: numeric(DEFAULT_TOOL_PARAMS.roiMargin, "1"),
    };
    this.windowInput = numeric(1500, "50");
    this.levelInput = numeric(-600, "50");
    this.stageInputs = {
      lung: { tLow: numeric(-860, "10"), tHigh: numeric(-200, "10"), curvature: numeric(0.6, "0.05") },
      lesion: { tLow: numeric(-700, "10"), tHigh: numeric(200, "10"), curvature: numeric(0.6, "0.05") },
    };

    root.append(this.buildLayout());
    this.wireEvents();
  }

  private buildLayout(): HTMLElement {
    const views = el("div", { class: "views" });
    for (const { axis, label } of VIEW_AXES) {
      const canvas = el("canvas", { width: String(CANVAS_SIZE), height: String(CANVAS_SIZE) });
      const slider = el("input", { type: "range", min: "0", max: "0", value: "0" });
      const indexLabel = el("span", {}, "-");
      const panel: ViewPanel = { axis, canvas, slider, indexLabel, slice: null, abort: null };
      this.panels.push(panel);
      views.append(
        el(
          "figure",
          { class: "view" },
          el("figcaption", {}, `${label} `, indexLabel),
          canvas,
          slider,
        ),
      );
    }

    const legend = el("div", { class: "legend" });
    for (const target of TARGETS) {
      const checkbox = el("input", { type: "checkbox", checked: "" });
      this.overlayChecks.set(target, checkbox);
      const chip = el("span", { class: "chip" });
      chip.style.background = cssColor(TARGET_COLORS[target]);
      legend.append(el("label", {}, checkbox, chip, target));
    }

    const stageSection = (name: "lung" | "lesion", title: string, run: () => void) => {
      const inputs = this.stageInputs[name];
      const button = el("button", {}, title);
      button.addEventListener("click", run);
      return el(
        "fieldset",
        {},
        el("legend", {}, title),
        el("label", {}, "low HU ", inputs.tLow),
        el("label", {}, "high HU ", inputs.tHigh),
        el("label", {}, "curvature ", inputs.curvature),
        button,
      );
    };

    return el(
      "div",
      { class: "app" },
      this.banner,
      el(
        "header",
        {},
        el("label", {}, "volume ", this.fileInput),
        this.sessionInput,
        this.button("create session", () => this.createSession()),
        this.button("load session", () => this.loadSession()),
        this.stageLabel,
      ),
      el(
        "main",
        {},
        el(
          "aside",
          {},
          stageSection("lung", "run lungs", () => this.runStage("lungs")),
          stageSection("lesion", "run lesions", () => this.runStage("lesions")),
          el(
            "fieldset",
            {},
            el("legend", {}, "tool"),
            this.toolSelect,
            this.targetSelect,
            this.modeSelect,
            this.mergeSelect,
            el("label", {}, "radius mm ", this.paramInputs.radius),
            el("label", {}, "sigma mm ", this.paramInputs.sigma),
            el("label", {}, "tube mm ", this.paramInputs.tubeRadius),
            el("label", {}, "k sigma ", this.paramInputs.kSigma),
            el("label", {}, "roi mm ", this.paramInputs.roiMargin),
          ),
          el(
            "fieldset",
            {},
            el("legend", {}, "display"),
            el("label", {}, "window ", this.windowInput),
            el("label", {}, "level ", this.levelInput),
            legend,
            this.compareSelect,
          ),
          el(
            "fieldset",
            {},
            el("legend", {}, "history"),
            this.button("undo last edit", () => this.undo()),
            this.historyList,
          ),
          el("fieldset", {}, el("legend", {}, "volumes"), this.volumesList),
          el("fieldset", {}, el("legend", {}, "export"), this.exportLinks),
        ),
        views,
      ),
    );
  }

  private button(label: string, onClick: () => void): HTMLButtonElement {
    const b = el("button", {}, label);
    b.addEventListener("click", onClick);
    return b;
  }

  private wireEvents(): void {
    for (const panel of this.panels) {
      panel.slider.addEventListener("input", () => {
        this.setIndex(panel.axis, Number(panel.slider.value));
      });
      panel.canvas.addEventListener("wheel", (ev) => {
        ev.preventDefault();
        if (!this.vs) return;
        this.setIndex(panel.axis, this.vs.indices[panel.axis] + Math.sign(ev.deltaY));
      });
      panel.canvas.addEventListener("pointerdown", (ev) => this.pointerDown(panel, ev));
      panel.canvas.addEventListener("pointermove", (ev) => this.pointerMove(panel, ev));
      panel.canvas.addEventListener("pointerup", (ev) => this.pointerUp(panel, ev));
    }
    const redrawAll = () => {
      if (!this.vs) return;
      void this.refreshSlices([0, 1, 2]);
    };
    this.windowInput.addEventListener("change", () => {
      if (!this.vs) return;
      try {
        this.vs = setWindowLevel(this.vs, Number(this.windowInput.value), Number(this.levelInput.value));
      } catch (err) {
        this.showError(err);
        return;
      }
      redrawAll();
    });
    this.levelInput.addEventListener("change", () => this.windowInput.dispatchEvent(new Event("change")));
    for (const [target, checkbox] of this.overlayChecks) {
      checkbox.addEventListener("change", () => {
        if (!this.vs) return;
        this.vs = toggleOverlay(this.vs, target);
        void this.redrawAll();
      });
    }
    this.compareSelect.addEventListener("change", () => {
      if (!this.vs) return;
      const value = this.compareSelect.value;
      this.vs = {
        ...this.vs,
        comparePair: value ? (value.split("|") as [Target, Target]) : null,
      };
      void this.redrawAll();
    });
  }

  private transform(panel: ViewPanel): ViewTransform {
    if (!this.grid) throw new Error("no session grid");
    const scale = fitScale(this.grid, panel.axis, panel.canvas.width, panel.canvas.height);
    return { axis: panel.axis, grid: this.grid, scale, panX: 0, panY: 0 };
  }

  private toolParams(): ToolParams {
    return {
      radius: Number(this.paramInputs.radius.value),
      sigma: Number(this.paramInputs.sigma.value),
      tubeRadius: Number(this.paramInputs.tubeRadius.value),
      kSigma: Number(this.paramInputs.kSigma.value),
      roiMargin: Number(this.paramInputs.roiMargin.value),
      mode: this.modeSelect.value as ToolParams["mode"],
      mergeMode: this.mergeSelect.value as ToolParams["mergeMode"],
    };
  }

  private pointerWorld(panel: ViewPanel, ev: PointerEvent): Vec3 {
    if (!this.vs) throw new Error("no session");
    const rect = panel.canvas.getBoundingClientRect();
    const t = this.transform(panel);
    return viewToWorld(t, {
      index: this.vs.indices[panel.axis],
      x: ((ev.clientX - rect.left) * panel.canvas.width) / rect.width,
      y: ((ev.clientY - rect.top) * panel.canvas.height) / rect.height,
    });
  }

  private pointerDown(panel: ViewPanel, ev: PointerEvent): void {
    if (!this.vs || !this.grid) return;
    ev.preventDefault();
    panel.canvas.setPointerCapture(ev.pointerId);
    const world = this.pointerWorld(panel, ev);
    if (ev.shiftKey) {
      this.vs = setCrosshair(this.vs, this.grid, world);
      this.syncSliders();
      void this.refreshSlices([0, 1, 2]);
      return;
    }
    const target = this.targetSelect.value as Target;
    if (!canEditTarget(this.vs.stage, target)) {
      this.showError(
        new Error(`${target} is not editable yet: run the ${requiredStage(target)} stage first`),
      );
      return;
    }
    this.vs = beginStroke(this.vs, world);
    void this.redraw(panel);
  }

  private pointerMove(panel: ViewPanel, ev: PointerEvent): void {
    if (!this.vs || this.vs.pendingStroke.length === 0) return;
    this.vs = extendStroke(this.vs, this.pointerWorld(panel, ev));
    void this.redraw(panel);
  }

  private pointerUp(panel: ViewPanel, ev: PointerEvent): void {
    if (!this.vs || this.vs.pendingStroke.length === 0) return;
    this.vs = extendStroke(this.vs, this.pointerWorld(panel, ev));
    const [stroke, next] = takeStroke(this.vs);
    this.vs = next;
    const tool = this.toolSelect.value as ToolId;
    const target = this.targetSelect.value as Target;
    // single clicks produce one point; tools needing a trail keep waiting
    if (stroke.length < minimumPoints(tool) && tool !== "brush") {
      void this.redraw(panel);
      return;
    }
    try {
      const event = gestureToEvent(tool, target, stroke, this.toolParams());
      this.enqueue(async () => {
        if (!this.vs) return;
        const response = await this.client.postEdit(this.vs.sessionId, event);
        this.applyState(response);
        await this.refreshSlices([0, 1, 2]);
      });
    } catch (err) {
      if (err instanceof GestureError) this.showError(err);
      else throw err;
    }
  }

  private setIndex(axis: Axis, index: number): void {
    if (!this.vs || !this.grid) return;
    this.vs = setSliceIndex(this.vs, this.grid, axis, index);
    this.syncSliders();
    void this.refreshSlices([axis]);
  }

  private syncSliders(): void {
    if (!this.vs || !this.grid) return;
    for (const panel of this.panels) {
      panel.slider.max = String(this.grid.dims[panel.axis] - 1);
      panel.slider.value = String(this.vs.indices[panel.axis]);
      panel.indexLabel.textContent = `${this.vs.indices[panel.axis]} / ${this.grid.dims[panel.axis] - 1}`;
    }
  }

  /** Append one mutation to the queue; failures surface in the banner. */
  private enqueue(run: () => Promise<void>): void {
    this.mutations = this.mutations.then(run).catch((err) => this.showError(err));
  }

  private async createSession(): Promise<void> {
    const file = this.fileInput.files?.[0];
    if (!file) {
      this.showError(new Error("choose a NIfTI volume first"));
      return;
    }
    const bytes = await file.arrayBuffer();
    this.enqueue(async () => {
      const created = await this.client.createSession(bytes, this.sessionInput.value || undefined);
      this.sessionInput.value = created.session_id;
      await this.adoptSession(created.session_id);
    });
  }

  private async loadSession(): Promise<void> {
    const id = this.sessionInput.value.trim();
    if (!id) {
      this.showError(new Error("enter a session id to load"));
      return;
    }
    this.enqueue(() => this.adoptSession(id));
  }

  private async adoptSession(id: string): Promise<void> {
    const state = await this.client.state(id);
    const grid = state.grid.working ?? state.grid.native;
    assertViewableGrid(grid);
    this.grid = grid;
    this.vs = initialViewState(state, grid);
    this.applyState(state);
    this.syncSliders();
    this.prefillStageInputs(state);
    await this.refreshSlices([0, 1, 2]);
  }

  private prefillStageInputs(state: SessionState): void {
    const params = state.parameters as {
      lung?: { t_low: number; t_high: number; curvature_weight: number };
      lesion?: { t_low: number; t_high: number; curvature_weight: number };
    };
    for (const name of ["lung", "lesion"] as const) {
      const section = params[name];
      if (!section) continue;
      this.stageInputs[name].tLow.value = String(section.t_low);
      this.stageInputs[name].tHigh.value = String(section.t_high);
      this.stageInputs[name].curvature.value = String(section.curvature_weight);
    }
  }

  private runStage(stage: "lungs" | "lesions"): void {
    if (!this.vs) {
      this.showError(new Error("create or load a session first"));
      return;
    }
    const name = stage === "lungs" ? "lung" : "lesion";
    const inputs = this.stageInputs[name];
    const overrides: Overrides = {
      [name]: {
        t_low: Number(inputs.tLow.value),
        t_high: Number(inputs.tHigh.value),
        curvature_weight: Number(inputs.curvature.value),
      },
    };
    const already = stage === "lungs" ? "lungs-auto" : "lesions-auto";
    let force = false;
    if (stageRank(this.vs.stage) >= stageRank(already)) {
      if (!confirm(`Re-running ${stage} replaces the automatic result and drops its edits. Continue?`)) {
        return;
      }
      force = true;
    }
    this.enqueue(async () => {
      if (!this.vs) return;
      const run = stage === "lungs" ? this.client.runLungs : this.client.runLesions;
      const state = await run.call(this.client, this.vs.sessionId, overrides, force);
      this.applyState(state);
      if (stage === "lungs") await this.adoptSession(state.session_id);
      else await this.refreshSlices([0, 1, 2]);
    });
  }

  private undo(): void {
    if (!this.vs) return;
    this.enqueue(async () => {
      if (!this.vs) return;
      const state = await this.client.undo(this.vs.sessionId);
      this.applyState(state);
      await this.refreshSlices([0, 1, 2]);
    });
  }

  private applyState(state: SessionState): void {
    this.session = state;
    if (this.vs) this.vs = { ...this.vs, stage: state.stage, sessionId: state.session_id };
    this.stageLabel.textContent = `session ${state.session_id} at ${state.stage}`;
    this.historyList.replaceChildren(
      ...state.history.map((entry) => el("li", {}, `${entry.tool} on ${entry.target}`)),
    );
    this.volumesList.replaceChildren(
      ...Object.entries(state.targets).map(([target, stats]) =>
        el("li", {}, `${target}: ${stats.volume_ml.toFixed(1)} mL`),
      ),
    );
    const links: HTMLElement[] = [];
    for (const target of Object.keys(state.targets) as Target[]) {
      links.push(
        el(
          "a",
          { href: this.client.exportUrl(state.session_id, target), download: `${target}.nii.gz` },
          `${target}.nii.gz`,
        ),
        el("a", { href: this.client.meshUrl(state.session_id, target), download: `${target}.obj` }, `${target}.obj`),
      );
    }
    if (Object.keys(state.targets).length > 0) {
      links.push(
        el(
          "a",
          { href: this.client.exportUrl(state.session_id), download: `${state.session_id}.zip` },
          "all masks (zip)",
        ),
      );
    }
    this.exportLinks.replaceChildren(...links);
    this.clearError();
  }

  private async refreshSlices(axes: Axis[]): Promise<void> {
    if (!this.vs) return;
    await Promise.all(
      this.panels
        .filter((panel) => axes.includes(panel.axis))
        .map(async (panel) => {
          if (!this.vs) return;
          panel.abort?.abort();
          panel.abort = new AbortController();
          try {
            panel.slice = await this.client.slice(this.vs.sessionId, panel.axis, this.vs.indices[panel.axis], {
              window: this.vs.windowHu,
              level: this.vs.levelHu,
              signal: panel.abort.signal,
            });
          } catch (err) {
            if (err instanceof DOMException && err.name === "AbortError") return;
            this.showError(err);
            return;
          }
          await this.redraw(panel);
        }),
    );
  }

  private redrawAll(): Promise<void> {
    return Promise.all(this.panels.map((panel) => this.redraw(panel))).then(() => undefined);
  }

  private async redraw(panel: ViewPanel): Promise<void> {
    if (!this.vs || !panel.slice) return;
    await drawView(panel.canvas, panel.slice, this.transform(panel), {
      visible: this.vs.overlayVisible,
      comparePair: this.vs.comparePair,
      stroke: this.vs.pendingStroke,
      crosshair: this.vs.crosshair,
    });
  }

  private showError(err: unknown): void {
    const text =
      err instanceof ApiError
        ? `service rejected the request (${err.status}): ${err.detail}`
        : err instanceof Error
          ? err.message
          : String(err);
    this.banner.textContent = text;
    this.banner.classList.remove("hidden");
  }

  private clearError(): void {
    this.banner.classList.add("hidden");
    this.banner.textContent = "";
  }
}

export function mount(root: HTMLElement, baseUrl: string): App {
  return new App(root, baseUrl);
}

const rootElement = typeof document !== "undefined" ? document.getElementById("app") : null;
if (rootElement) {
  const base = rootElement.dataset.service ?? `${location.protocol}//${location.hostname}:8000`;
  mount(rootElement, base);
}
