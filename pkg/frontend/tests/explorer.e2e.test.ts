// End-to-end explorer test against a real `flowtwin serve` process: build a
// tiny project, drive the app DOM (edit -> run -> compare), and check that
// every rendered number traces back to an endpoint payload.

import { execFileSync, spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { createServer } from "node:net";
import { tmpdir } from "node:os";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ExplorerApi } from "../src/api";
import { ScenarioDraft } from "../src/draft";
import { columnAt } from "../src/charts";
import { ExplorerApp } from "../src/main";
import type { InterventionSpec } from "../src/types";

const HERE = dirname(fileURLToPath(import.meta.url));

let proc: ChildProcess | null = null;
let workDir = "";
let base = "";
let api: ExplorerApi;

// every JSON payload fetched from the server, for trace-to-payload checks
const fetchedPayloads: any[] = [];

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const srv = createServer();
    srv.listen(0, "127.0.0.1", () => {
      const port = (srv.address() as any).port;
      srv.close(() => resolve(port));
    });
    srv.on("error", reject);
  });
}

async function waitForServer(url: string, timeoutMs = 60000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    try {
      const resp = await fetch(url);
      if (resp.ok) return;
    } catch {
      // not up yet
    }
    if (Date.now() > deadline) throw new Error(`server at ${url} never came up`);
    await new Promise((r) => setTimeout(r, 300));
  }
}

async function waitFor(cond: () => boolean, timeoutMs = 120000, what = "condition") {
  const deadline = Date.now() + timeoutMs;
  while (!cond()) {
    if (Date.now() > deadline) throw new Error(`timed out waiting for ${what}`);
    await new Promise((r) => setTimeout(r, 150));
  }
}

beforeAll(async () => {
  workDir = mkdtempSync(join(tmpdir(), "flowtwin-e2e-"));
  execFileSync("python3", [join(HERE, "setup_project.py"), workDir], {
    stdio: ["ignore", "pipe", "inherit"],
  });
  const port = await freePort();
  base = `http://127.0.0.1:${port}`;
  proc = spawn("python3", [
    "-m", "flowtwin.cli", "serve",
    "--config", join(workDir, "config.json"),
    "--port", String(port),
  ], { stdio: ["ignore", "pipe", "inherit"] });
  await waitForServer(`${base}/network`);
  const realFetch = globalThis.fetch.bind(globalThis);
  globalThis.fetch = (async (input: any, init?: any) => {
    const url = typeof input === "string" && input.startsWith("/") ? base + input : input;
    const resp = await realFetch(url, init);
    try {
      fetchedPayloads.push(await resp.clone().json());
    } catch {
      // non-JSON responses are not traced
    }
    return resp;
  }) as typeof fetch;
  api = new ExplorerApi(base);
}, 180000);

afterAll(() => {
  proc?.kill();
  if (workDir) rmSync(workDir, { recursive: true, force: true });
});

describe("scenario round trip", () => {
  it("POST then GET returns a spec deep-equal to the draft's serialization", async () => {
    const draft = new ScenarioDraft();
    draft.label = "round-trip";
    draft.toggleLink("A", "C");
    draft.setOverride("B", 0.4);
    const spec = draft.serialize();
    const { id } = await api.createScenario(spec);
    const listing = await api.scenarios();
    const stored = listing.scenarios.find((s) => s.id === id)!.spec;
    const again = ScenarioDraft.parse(stored as InterventionSpec).serialize();
    expect(again).toEqual(spec);
  });

  it("server rejects invalid specs with field-level errors", async () => {
    const resp = await fetch(`${base}/scenarios`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ walk_speed_kmh: -1 }),
    });
    expect(resp.status).toBe(422);
    const body = await resp.json();
    expect(body.errors[0].path).toBe("walk_speed_kmh");
  });
});

describe("explorer app end to end", () => {
  it("edit -> run -> compare completes and renders traced values", async () => {
    const root = document.createElement("div");
    document.body.appendChild(root);
    const app = new ExplorerApp(root, api);
    await app.ready;

    // the map rendered areas, PoIs, and the candidate corridor
    expect(root.querySelectorAll(".area-cell").length).toBe(2);
    expect(root.querySelectorAll(".poi").length).toBe(3);
    const link = root.querySelector('[data-link="A--C"]') as SVGElement;
    expect(link).toBeTruthy();

    // toggle the corridor on via the map and confirm the highlight
    link.dispatchEvent(new Event("click"));
    expect(link.getAttribute("data-active")).toBe("true");
    expect(root.querySelector('[data-draft-link="A--C"]')).toBeTruthy();

    (root.querySelector("#run-btn") as HTMLButtonElement).dispatchEvent(new Event("click"));
    await waitFor(
      () => (root.querySelector("#status") as HTMLElement).textContent === "done",
      120000, "runs to finish",
    );
    expect(app.baseline && app.variant && app.diff).toBeTruthy();
    expect(app.diff!.base).toBe(app.baseRunId);
    expect(app.diff!.variant).toBe(app.variantRunId);

    // population view: area labels show exactly the payload column
    const slider = root.querySelector("#slot-slider") as HTMLInputElement;
    expect(Number(slider.max)).toBe(app.baseline!.values[0].length - 1);
    const slot = Math.min(20, Number(slider.max));
    slider.value = String(slot);
    slider.dispatchEvent(new Event("input"));
    const column = columnAt(app.baseline!, slot);
    for (const [area, value] of Object.entries(column)) {
      const label = root.querySelector(`[data-area-label="${area}"]`) as SVGElement;
      expect(label.textContent).toBe(`${area}: ${value}`);
    }

    // diff view renders the /diff payload, not a client-side recomputation
    const select = root.querySelector("#mode-select") as HTMLSelectElement;
    select.value = "diff";
    select.dispatchEvent(new Event("change"));
    const diffColumn = columnAt(app.diff!, slot);
    for (const [area, value] of Object.entries(diffColumn)) {
      const label = root.querySelector(`[data-area-label="${area}"]`) as SVGElement;
      const sign = value > 0 ? "+" : "";
      expect(label.textContent).toBe(`${area}: ${sign}${value}`);
    }

    // trace-to-payload: the rendered diff matrix appears verbatim in a fetch
    const fetched = fetchedPayloads.find(
      (p) => p && p.base === app.baseRunId && p.variant === app.variantRunId,
    );
    expect(fetched).toBeTruthy();
    expect(fetched.values).toEqual(app.diff!.values);

    document.body.removeChild(root);
  }, 180000);

  it("diff of a run against itself renders all-zero", async () => {
    const root = document.createElement("div");
    document.body.appendChild(root);
    const app = new ExplorerApp(root, api);
    await app.ready;

    const baseline = new ScenarioDraft();
    baseline.label = "baseline";
    const { id } = await api.createScenario(baseline.serialize());
    const { run_id } = await api.submitRun(id, 7);
    const deadline = Date.now() + 120000;
    for (;;) {
      const run = await api.run(run_id);
      if (run.status === "done") break;
      if (run.status === "failed" || Date.now() > deadline) {
        throw new Error(`baseline run ${run.status}`);
      }
      await new Promise((r) => setTimeout(r, 250));
    }

    app.diff = await api.diff(run_id, run_id);
    app.baseRunId = run_id;
    app.variantRunId = run_id;
    app.mode = "diff";
    app.renderViews();
    expect(app.diff.values.flat().every((v) => v === 0)).toBe(true);
    for (const area of app.diff.areas) {
      const label = root.querySelector(`[data-area-label="${area}"]`) as SVGElement;
      expect(label.textContent).toBe(`${area}: 0`);
    }
    document.body.removeChild(root);
  }, 180000);

  it("negative override disables submission with an inline error", async () => {
    const root = document.createElement("div");
    document.body.appendChild(root);
    const app = new ExplorerApp(root, api);
    await app.ready;

    (root.querySelector('[data-poi="B"]') as SVGElement).dispatchEvent(new Event("click"));
    const override = root.querySelector("#override-input") as HTMLInputElement;
    expect(override.disabled).toBe(false);
    override.value = "-0.5";
    override.dispatchEvent(new Event("input"));

    const runBtn = root.querySelector("#run-btn") as HTMLButtonElement;
    expect(runBtn.disabled).toBe(true);
    const err = root.querySelector('[data-error-path="attraction_overrides.B"]');
    expect(err).toBeTruthy();

    override.value = "0.4";
    override.dispatchEvent(new Event("input"));
    expect(runBtn.disabled).toBe(false);
    document.body.removeChild(root);
  });
});
