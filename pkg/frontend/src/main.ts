import { ApiError, ExplorerApi } from "./api";
import {
  columnAt,
  divergingColor,
  matrixAbsMax,
  matrixMax,
  populationColor,
  renderSeriesChart,
} from "./charts";
import { ScenarioDraft } from "./draft";
import { NetworkMap } from "./map";
import { pollRun } from "./poll";
import type { DiffPayload, NetworkGeoJSON, PopulationPayload } from "./types";

type ViewMode = "baseline" | "variant" | "diff";

/** The scenario explorer: edit an intervention on the map, launch paired
 *  baseline/variant runs, and compare per-area population outcomes.
 *  Every rendered value comes from a serve endpoint payload. */
export class ExplorerApp {
  readonly ready: Promise<void>;
  api: ExplorerApi;
  draft = new ScenarioDraft();
  network!: NetworkGeoJSON;
  map!: NetworkMap;
  baseline: PopulationPayload | null = null;
  variant: PopulationPayload | null = null;
  diff: DiffPayload | null = null;
  baseRunId = "";
  variantRunId = "";
  mode: ViewMode = "baseline";
  slot = 0;
  running = false;
  selectedPoi = "";

  private root: HTMLElement;

  constructor(root: HTMLElement, api: ExplorerApi) {
    this.root = root;
    this.api = api;
    this.ready = this.init();
  }

  private async init(): Promise<void> {
    this.network = await this.api.network();
    this.buildLayout();
    this.map = new NetworkMap(
      this.root.querySelector("#map-panel") as HTMLElement,
      this.network,
      this.draft,
      {
        onToggleLink: (from, to) => {
          this.draft.toggleLink(from, to);
          this.map.refreshLinks();
          this.refreshEditor();
        },
        onSelectPoi: (poi) => {
          this.selectedPoi = poi;
          this.refreshEditor();
        },
      },
    );
    this.refreshEditor();
  }

  private buildLayout(): void {
    this.root.innerHTML = `
      <div id="editor-panel">
        <h2>Scenario</h2>
        <label>Label <input id="label-input" value="scenario"></label>
        <label>Seed <input id="seed-input" type="number" value="7"></label>
        <label>Mobility speed (km/h)
          <input id="speed-input" type="number" step="0.5" value="20"></label>
        <div id="selected-poi"></div>
        <label>Override score
          <input id="override-input" type="number" step="0.001" disabled></label>
        <ul id="link-list"></ul>
        <div id="draft-errors"></div>
        <button id="run-btn">Run &amp; compare</button>
        <div id="status">idle</div>
      </div>
      <div id="map-panel"></div>
      <div id="view-panel">
        <div>
          <select id="mode-select">
            <option value="baseline">baseline population</option>
            <option value="variant">scenario population</option>
            <option value="diff">change (variant - baseline)</option>
          </select>
          <input id="slot-slider" type="range" min="0" max="0" value="0">
          <span id="slot-readout"></span>
        </div>
        <div id="series-panel"></div>
      </div>`;
    (this.root.querySelector("#run-btn") as HTMLButtonElement).addEventListener(
      "click", () => void this.runAndCompare());
    (this.root.querySelector("#label-input") as HTMLInputElement).addEventListener(
      "input", (e) => {
        this.draft.label = (e.target as HTMLInputElement).value || "scenario";
        this.refreshEditor();
      });
    (this.root.querySelector("#speed-input") as HTMLInputElement).addEventListener(
      "input", (e) => {
        this.draft.mobilitySpeedKmh = Number((e.target as HTMLInputElement).value);
        this.refreshEditor();
      });
    (this.root.querySelector("#override-input") as HTMLInputElement).addEventListener(
      "input", (e) => {
        const raw = (e.target as HTMLInputElement).value;
        this.draft.setOverride(this.selectedPoi, raw === "" ? null : Number(raw));
        this.refreshEditor();
      });
    (this.root.querySelector("#mode-select") as HTMLSelectElement).addEventListener(
      "change", (e) => {
        this.mode = (e.target as HTMLSelectElement).value as ViewMode;
        this.renderViews();
      });
    (this.root.querySelector("#slot-slider") as HTMLInputElement).addEventListener(
      "input", (e) => {
        this.slot = Number((e.target as HTMLInputElement).value);
        this.renderViews();
      });
  }

  refreshEditor(): void {
    const errors = this.draft.validate();
    const errorBox = this.root.querySelector("#draft-errors") as HTMLElement;
    errorBox.replaceChildren();
    for (const err of errors) {
      const div = document.createElement("div");
      div.className = "draft-error";
      div.setAttribute("data-error-path", err.path);
      div.textContent = `${err.path}: ${err.message}`;
      errorBox.appendChild(div);
    }
    const runBtn = this.root.querySelector("#run-btn") as HTMLButtonElement;
    runBtn.disabled = this.running || errors.length > 0;

    const linkList = this.root.querySelector("#link-list") as HTMLElement;
    linkList.replaceChildren();
    for (const [key, link] of this.draft.links) {
      const li = document.createElement("li");
      li.setAttribute("data-draft-link", key);
      li.textContent = `${link.from} ↔ ${link.to}`;
      linkList.appendChild(li);
    }

    const poiBox = this.root.querySelector("#selected-poi") as HTMLElement;
    const overrideInput = this.root.querySelector("#override-input") as HTMLInputElement;
    if (this.selectedPoi) {
      poiBox.textContent = `PoI ${this.selectedPoi}`;
      overrideInput.disabled = false;
      const current = this.draft.overrides.get(this.selectedPoi);
      overrideInput.value = current === undefined ? "" : String(current);
    } else {
      poiBox.textContent = "click a PoI to override its attraction";
      overrideInput.disabled = true;
      overrideInput.value = "";
    }
  }

  setStatus(text: string): void {
    (this.root.querySelector("#status") as HTMLElement).textContent = text;
  }

  async runAndCompare(): Promise<void> {
    if (this.running || !this.draft.canSubmit()) return;
    this.running = true;
    this.refreshEditor();
    const seed = Number((this.root.querySelector("#seed-input") as HTMLInputElement).value);
    try {
      const baselineDraft = new ScenarioDraft();
      baselineDraft.label = "baseline";
      this.setStatus("posting scenarios");
      const base = await this.api.createScenario(baselineDraft.serialize());
      const variant = await this.api.createScenario(this.draft.serialize());
      // one run at a time, mirroring the server's single worker
      this.setStatus("baseline run queued");
      const baseRun = await this.api.submitRun(base.id, seed);
      this.baseRunId = baseRun.run_id;
      await pollRun(this.api, baseRun.run_id, 1000, 600000,
        (r) => this.setStatus(`baseline run ${r.status}`));
      this.setStatus("scenario run queued");
      const variantRun = await this.api.submitRun(variant.id, seed);
      this.variantRunId = variantRun.run_id;
      await pollRun(this.api, variantRun.run_id, 1000, 600000,
        (r) => this.setStatus(`scenario run ${r.status}`));
      this.setStatus("fetching results");
      this.baseline = await this.api.population(baseRun.run_id);
      this.variant = await this.api.population(variantRun.run_id);
      this.diff = await this.api.diff(variantRun.run_id, baseRun.run_id);
      this.setStatus("done");
    } catch (err) {
      if (err instanceof ApiError) {
        this.setStatus(`error ${err.status}`);
        this.surfaceFieldErrors(err);
      } else {
        this.setStatus(`error: ${(err as Error).message}`);
      }
    } finally {
      this.running = false;
      this.refreshEditor();
      this.renderViews();
    }
  }

  private surfaceFieldErrors(err: ApiError): void {
    const errorBox = this.root.querySelector("#draft-errors") as HTMLElement;
    for (const fieldErr of err.body?.errors ?? []) {
      const div = document.createElement("div");
      div.className = "draft-error server-error";
      div.setAttribute("data-error-path", fieldErr.path);
      div.textContent = `${fieldErr.path}: ${fieldErr.message}`;
      errorBox.appendChild(div);
    }
  }

  activePayload(): PopulationPayload | DiffPayload | null {
    if (this.mode === "baseline") return this.baseline;
    if (this.mode === "variant") return this.variant;
    return this.diff;
  }

  renderViews(): void {
    const payload = this.activePayload();
    const slider = this.root.querySelector("#slot-slider") as HTMLInputElement;
    const readout = this.root.querySelector("#slot-readout") as HTMLElement;
    if (!payload) {
      readout.textContent = "no runs yet";
      return;
    }
    const slots = payload.values[0]?.length ?? 0;
    slider.max = String(Math.max(0, slots - 1));
    if (this.slot > slots - 1) this.slot = Math.max(0, slots - 1);
    slider.value = String(this.slot);
    const column = columnAt(payload, this.slot);
    const colors: Record<string, string> = {};
    const labels: Record<string, string> = {};
    if (this.mode === "diff") {
      const absMax = matrixAbsMax(payload.values);
      for (const [area, v] of Object.entries(column)) {
        colors[area] = divergingColor(v, absMax);
        labels[area] = `${area}: ${v > 0 ? "+" : ""}${v}`;
      }
    } else {
      const max = matrixMax(payload.values);
      for (const [area, v] of Object.entries(column)) {
        colors[area] = populationColor(v, max);
        labels[area] = `${area}: ${v}`;
      }
    }
    this.map.setAreaFill(colors);
    this.map.setAreaLabels(labels);
    const hours = ((this.slot + 1) * payload.slot_seconds) / 3600;
    readout.textContent = `slot ${this.slot} (ends ${hours.toFixed(2)} h)`;
    renderSeriesChart(
      this.root.querySelector("#series-panel") as HTMLElement,
      payload,
      this.mode === "diff"
        ? `change in population (${this.variantRunId} - ${this.baseRunId})`
        : `${this.mode} population by area`,
    );
  }
}

export function mount(root: HTMLElement, apiBase = ""): ExplorerApp {
  return new ExplorerApp(root, new ExplorerApi(apiBase));
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  mount(document.getElementById("app") as HTMLElement);
}
