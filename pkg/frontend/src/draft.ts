import type { InterventionSpec, MobilityLinkSpec } from "./types";

export interface DraftError {
  path: string;
  message: string;
}

/** Editable scenario state: link toggles plus pending attraction overrides.
 *  A draft only serializes once it validates, so invalid drafts can never
 *  be submitted. */
export class ScenarioDraft {
  label = "scenario";
  walkSpeedKmh = 5.0;
  mobilitySpeedKmh = 20.0;
  links = new Map<string, MobilityLinkSpec>();
  overrides = new Map<string, number>();
  dirty = false;

  static linkKey(from: string, to: string): string {
    return [from, to].sort().join("--");
  }

  toggleLink(from: string, to: string, speedKmh?: number): boolean {
    const key = ScenarioDraft.linkKey(from, to);
    if (this.links.has(key)) {
      this.links.delete(key);
      this.dirty = true;
      return false;
    }
    const link: MobilityLinkSpec = { from, to };
    if (speedKmh !== undefined) link.speed_kmh = speedKmh;
    this.links.set(key, link);
    this.dirty = true;
    return true;
  }

  hasLink(from: string, to: string): boolean {
    return this.links.has(ScenarioDraft.linkKey(from, to));
  }

  setOverride(poi: string, raw: number | null): void {
    if (raw === null || Number.isNaN(raw)) {
      this.overrides.delete(poi);
    } else {
      this.overrides.set(poi, raw);
    }
    this.dirty = true;
  }

  isEmpty(): boolean {
    return this.links.size === 0 && this.overrides.size === 0;
  }

  validate(): DraftError[] {
    const errors: DraftError[] = [];
    if (!(this.walkSpeedKmh > 0)) {
      errors.push({ path: "walk_speed_kmh", message: "must be a positive number" });
    }
    if (!(this.mobilitySpeedKmh > 0)) {
      errors.push({ path: "mobility_speed_kmh", message: "must be a positive number" });
    }
    let i = 0;
    for (const link of this.links.values()) {
      if (!link.from || !link.to || link.from === link.to) {
        errors.push({ path: `mobility_links[${i}]`, message: "needs two distinct endpoints" });
      }
      if (link.speed_kmh !== undefined && !(link.speed_kmh > 0)) {
        errors.push({ path: `mobility_links[${i}].speed_kmh`, message: "must be positive" });
      }
      i += 1;
    }
    for (const [poi, raw] of this.overrides) {
      if (!(raw >= 0)) {
        errors.push({ path: `attraction_overrides.${poi}`, message: "must be >= 0" });
      }
    }
    return errors;
  }

  canSubmit(): boolean {
    return this.validate().length === 0;
  }

  serialize(): InterventionSpec {
    const errors = this.validate();
    if (errors.length) {
      throw new Error(`invalid draft: ${errors.map((e) => e.path).join(", ")}`);
    }
    const links = [...this.links.keys()].sort().map((k) => ({ ...this.links.get(k)! }));
    const overrides: Record<string, number> = {};
    for (const poi of [...this.overrides.keys()].sort()) {
      overrides[poi] = this.overrides.get(poi)!;
    }
    return {
      label: this.label,
      walk_speed_kmh: this.walkSpeedKmh,
      mobility_speed_kmh: this.mobilitySpeedKmh,
      mobility_links: links,
      attraction_overrides: overrides,
    };
  }

  static parse(spec: InterventionSpec): ScenarioDraft {
    const draft = new ScenarioDraft();
    draft.label = spec.label;
    draft.walkSpeedKmh = spec.walk_speed_kmh;
    draft.mobilitySpeedKmh = spec.mobility_speed_kmh;
    for (const link of spec.mobility_links ?? []) {
      draft.links.set(ScenarioDraft.linkKey(link.from, link.to), { ...link });
    }
    for (const [poi, raw] of Object.entries(spec.attraction_overrides ?? {})) {
      draft.overrides.set(poi, raw);
    }
    draft.dirty = false;
    return draft;
  }
}
