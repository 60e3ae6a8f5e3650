import { ScenarioDraft } from "./draft";
import type { GeoFeature, NetworkGeoJSON } from "./types";

const SVG_NS = "http://www.w3.org/2000/svg";

export interface MapCallbacks {
  onToggleLink?: (from: string, to: string) => void;
  onSelectPoi?: (poi: string) => void;
}

/** SVG map of areas, PoIs, walk edges, and toggleable mobility corridors.
 *  Area fills are controlled externally (population or diff colouring). */
export class NetworkMap {
  readonly svg: SVGSVGElement;
  private areaEls = new Map<string, SVGPolygonElement>();
  private areaLabelEls = new Map<string, SVGTextElement>();
  private linkEls = new Map<string, SVGPolylineElement>();
  private flipY: (y: number) => number;

  constructor(
    container: HTMLElement,
    private network: NetworkGeoJSON,
    private draft: ScenarioDraft,
    private callbacks: MapCallbacks = {},
  ) {
    const areas = network.features.filter((f) => f.properties.kind === "area");
    const xs: number[] = [];
    const ys: number[] = [];
    for (const a of areas) {
      const ring = (a.geometry as any).coordinates[0] as number[][];
      for (const [x, y] of ring) {
        xs.push(x);
        ys.push(y);
      }
    }
    const minX = Math.min(...xs);
    const maxX = Math.max(...xs);
    const minY = Math.min(...ys);
    const maxY = Math.max(...ys);
    this.flipY = (y) => maxY + minY - y; // planar y-up to SVG y-down
    this.svg = document.createElementNS(SVG_NS, "svg");
    const pad = 30;
    this.svg.setAttribute(
      "viewBox",
      `${minX - pad} ${minY - pad} ${maxX - minX + 2 * pad} ${maxY - minY + 2 * pad}`,
    );
    this.svg.setAttribute("id", "network-map");
    container.appendChild(this.svg);
    this.render();
  }

  private el<K extends keyof SVGElementTagNameMap>(tag: K): SVGElementTagNameMap[K] {
    return document.createElementNS(SVG_NS, tag);
  }

  private render(): void {
    for (const f of this.network.features.filter((f) => f.properties.kind === "area")) {
      this.renderArea(f);
    }
    for (const f of this.network.features.filter((f) => f.properties.kind === "edge")) {
      this.renderEdge(f);
    }
    for (const f of this.network.features.filter(
      (f) => f.properties.kind === "mobility_link",
    )) {
      this.renderLink(f);
    }
    for (const f of this.network.features.filter((f) => f.properties.kind === "poi")) {
      this.renderPoi(f);
    }
  }

  private renderArea(f: GeoFeature): void {
    const ring = (f.geometry as any).coordinates[0] as number[][];
    const poly = this.el("polygon");
    poly.setAttribute(
      "points",
      ring.map(([x, y]) => `${x},${this.flipY(y)}`).join(" "),
    );
    poly.setAttribute("class", "area-cell");
    poly.setAttribute("data-area", f.properties.id);
    poly.setAttribute("fill", "#f4f6f8");
    poly.setAttribute("stroke", "#8899aa");
    poly.setAttribute("stroke-width", "2");
    this.svg.appendChild(poly);
    this.areaEls.set(f.properties.id, poly);

    const cx = ring.reduce((s, p) => s + p[0], 0) / ring.length;
    const cy = ring.reduce((s, p) => s + p[1], 0) / ring.length;
    const label = this.el("text");
    label.setAttribute("x", String(cx));
    label.setAttribute("y", String(this.flipY(cy)));
    label.setAttribute("class", "area-label");
    label.setAttribute("data-area-label", f.properties.id);
    label.setAttribute("text-anchor", "middle");
    label.setAttribute("font-size", "26");
    label.textContent = f.properties.id;
    this.svg.appendChild(label);
    this.areaLabelEls.set(f.properties.id, label);
  }

  private renderEdge(f: GeoFeature): void {
    const [[x1, y1], [x2, y2]] = (f.geometry as any).coordinates as number[][];
    const line = this.el("line");
    line.setAttribute("x1", String(x1));
    line.setAttribute("y1", String(this.flipY(y1)));
    line.setAttribute("x2", String(x2));
    line.setAttribute("y2", String(this.flipY(y2)));
    line.setAttribute("stroke", "#cfd8e0");
    line.setAttribute("stroke-width", "1");
    this.svg.appendChild(line);
  }

  private renderLink(f: GeoFeature): void {
    const coords = (f.geometry as any).coordinates as number[][];
    const from = f.properties.from as string;
    const to = f.properties.to as string;
    const key = ScenarioDraft.linkKey(from, to);
    const line = this.el("polyline");
    line.setAttribute("points", coords.map(([x, y]) => `${x},${this.flipY(y)}`).join(" "));
    line.setAttribute("fill", "none");
    line.setAttribute("class", "mobility-link");
    line.setAttribute("data-link", key);
    line.setAttribute("data-from", from);
    line.setAttribute("data-to", to);
    line.setAttribute("stroke-width", "6");
    line.setAttribute("stroke-dasharray", "10 6");
    line.setAttribute("cursor", "pointer");
    line.addEventListener("click", () => this.callbacks.onToggleLink?.(from, to));
    this.svg.appendChild(line);
    this.linkEls.set(key, line);
    this.refreshLinks();
  }

  private renderPoi(f: GeoFeature): void {
    const [x, y] = (f.geometry as any).coordinates as number[];
    const circle = this.el("circle");
    circle.setAttribute("cx", String(x));
    circle.setAttribute("cy", String(this.flipY(y)));
    circle.setAttribute("r", String(f.properties.radius ?? 12));
    circle.setAttribute("class", "poi");
    circle.setAttribute("data-poi", f.properties.id);
    circle.setAttribute("fill", "#2b6cb0");
    circle.setAttribute("fill-opacity", "0.85");
    circle.setAttribute("cursor", "pointer");
    circle.addEventListener("click", () => this.callbacks.onSelectPoi?.(f.properties.id));
    this.svg.appendChild(circle);
    const label = this.el("text");
    label.setAttribute("x", String(x));
    label.setAttribute("y", String(this.flipY(y) - 18));
    label.setAttribute("text-anchor", "middle");
    label.setAttribute("font-size", "18");
    label.textContent = f.properties.id;
    this.svg.appendChild(label);
  }

  /** Highlight toggled corridors and the PoI pairs they affect. */
  refreshLinks(): void {
    for (const [key, el] of this.linkEls) {
      const active = this.draft.links.has(key);
      el.setAttribute("stroke", active ? "#2f855a" : "#b7c3cc");
      el.setAttribute("data-active", active ? "true" : "false");
    }
  }

  setAreaFill(colors: Record<string, string>): void {
    for (const [area, el] of this.areaEls) {
      el.setAttribute("fill", colors[area] ?? "#f4f6f8");
    }
  }

  setAreaLabels(text: Record<string, string>): void {
    for (const [area, el] of this.areaLabelEls) {
      el.textContent = text[area] ?? area;
    }
  }
}
