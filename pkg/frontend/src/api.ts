import type {
  DiffPayload,
  InterventionSpec,
  NetworkGeoJSON,
  PopulationPayload,
  RunInfo,
  ScenarioListing,
} from "./types";

export class ApiError extends Error {
  constructor(
    public status: number,
    public body: any,
  ) {
    super(`HTTP ${status}: ${JSON.stringify(body)}`);
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(url, init);
  const body = await resp.json();
  if (!resp.ok) throw new ApiError(resp.status, body);
  return body as T;
}

/** Thin typed client for the serve endpoints; every number the UI shows
 *  comes out of one of these calls. */
export class ExplorerApi {
  constructor(private base: string = "") {}

  network(): Promise<NetworkGeoJSON> {
    return request(`${this.base}/network`);
  }

  scenarios(): Promise<ScenarioListing> {
    return request(`${this.base}/scenarios`);
  }

  createScenario(spec: InterventionSpec): Promise<{ id: string }> {
    return request(`${this.base}/scenarios`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(spec),
    });
  }

  submitRun(scenarioId: string, seed: number): Promise<{ run_id: string }> {
    return request(`${this.base}/runs`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ scenario_id: scenarioId, seed }),
    });
  }

  run(runId: string): Promise<RunInfo> {
    return request(`${this.base}/runs/${runId}`);
  }

  population(runId: string): Promise<PopulationPayload> {
    return request(`${this.base}/runs/${runId}/population`);
  }

  diff(runId: string, baseId: string): Promise<DiffPayload> {
    return request(`${this.base}/runs/${runId}/diff?base=${baseId}`);
  }
}
