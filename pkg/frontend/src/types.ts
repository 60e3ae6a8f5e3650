// Wire types for the flowtwin serve API.

export interface MobilityLinkSpec {
  from: string;
  to: string;
  path?: string[];
  speed_kmh?: number;
}

export interface InterventionSpec {
  label: string;
  walk_speed_kmh: number;
  mobility_speed_kmh: number;
  mobility_links: MobilityLinkSpec[];
  attraction_overrides: Record<string, number>;
  seed?: number;
}

export interface GeoFeature {
  type: "Feature";
  geometry:
    | { type: "Polygon"; coordinates: number[][][] }
    | { type: "LineString"; coordinates: number[][] }
    | { type: "Point"; coordinates: number[] };
  properties: Record<string, any>;
}

export interface NetworkGeoJSON {
  type: "FeatureCollection";
  properties?: Record<string, any>;
  features: GeoFeature[];
}

export type RunStatus = "queued" | "running" | "done" | "failed";

export interface RunInfo {
  run_id: string;
  scenario_id: string;
  seed: number;
  status: RunStatus;
  error?: string;
}

export interface PopulationPayload {
  slot_seconds: number;
  areas: string[];
  values: number[][]; // [area][slot]
}

export interface DiffPayload extends PopulationPayload {
  base: string;
  variant: string;
}

export interface ScenarioListing {
  scenarios: { id: string; spec: InterventionSpec }[];
}
