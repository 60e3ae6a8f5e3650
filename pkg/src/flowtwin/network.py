"""Spatial structure: areas, PoIs, the walkable graph, and mobility links.

A ``Network`` is immutable after construction and safe to share across
concurrent readers; mutation means rebuilding from a new description.
Distances are metres in a local planar frame, speeds m/s, times seconds.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NoPathError, UnknownLinkError, UnknownPoIError, ValidationError
from .geometry import (
    point_in_polygon,
    points_in_polygon,
    polygon_is_simple,
    polygons_overlap,
    polyline_intersects_polygon,
    polyline_length,
)

DEFAULT_VICINITY_RADIUS_M = 15.0
KMH = 1000.0 / 3600.0  # km/h expressed in m/s


@dataclass(frozen=True)
class PoI:
    id: str
    x: float
    y: float
    radius: float = DEFAULT_VICINITY_RADIUS_M
    attraction: float = 0.0
    area: str = ""

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class Area:
    id: str
    polygon: tuple
    observed: bool = False
    poi_ids: tuple = ()

    def contains(self, x: float, y: float) -> bool:
        return point_in_polygon(x, y, self.polygon)

    def bounding_box(self) -> tuple:
        xs = [p[0] for p in self.polygon]
        ys = [p[1] for p in self.polygon]
        return min(xs), max(xs), min(ys), max(ys)

    def is_rectangle(self) -> bool:
        """Axis-aligned rectangle: containment reduces to the bounding box."""
        if len(self.polygon) != 4:
            return False
        x0, x1, y0, y1 = self.bounding_box()
        corners = {(x0, y0), (x0, y1), (x1, y0), (x1, y1)}
        return {tuple(p) for p in self.polygon} == corners


@dataclass(frozen=True)
class MobilityLink:
    """A service corridor between two endpoint PoIs.

    Riders board and alight only at the endpoints; the path is a walkable
    node route and the service speed applies along it in both directions.
    """

    from_poi: str
    to_poi: str
    path: tuple
    speed: float  # m/s

    @property
    def pair(self) -> tuple:
        return (self.from_poi, self.to_poi)


@dataclass
class Network:
    nodes: dict                      # node id -> (x, y)
    edges: list                      # (u, v, length_m, walkable)
    pois: dict                       # poi id -> PoI
    areas: dict                      # area id -> Area
    links: list = field(default_factory=list)   # candidate MobilityLinks
    poi_anchors: dict = field(default_factory=dict)  # poi id -> node id

    def __post_init__(self):
        self._adj = {}
        for u, v, length, walkable in self.edges:
            if not walkable:
                continue
            self._adj.setdefault(u, []).append((v, float(length)))
            self._adj.setdefault(v, []).append((u, float(length)))
        for nid in self.nodes:
            self._adj.setdefault(nid, [])
        for nid in self._adj:
            self._adj[nid].sort()
        if not self.poi_anchors:
            self.poi_anchors = {pid: self._nearest_node(p.x, p.y) for pid, p in self.pois.items()}
        self._dist_cache = {}
        self._path_cache = {}
        self._area_order = sorted(self.areas)
        self._poi_order = sorted(self.pois)
        self._area_rect = {
            aid: (a.bounding_box() if a.is_rectangle() else None)
            for aid, a in self.areas.items()
        }
        self._area_rect = {aid: r for aid, r in self._area_rect.items() if r is not None}

    # -- basic lookups ------------------------------------------------

    @property
    def poi_ids(self) -> list:
        return list(self._poi_order)

    @property
    def area_ids(self) -> list:
        return list(self._area_order)

    def observed_area_ids(self) -> list:
        return [a for a in self._area_order if self.areas[a].observed]

    def node_xy(self, node_id: str) -> tuple:
        return self.nodes[node_id]

    def _nearest_node(self, x: float, y: float) -> str:
        best, best_d = None, math.inf
        for nid in sorted(self.nodes):
            nx, ny = self.nodes[nid]
            d = math.hypot(nx - x, ny - y)
            if d < best_d - 1e-12:
                best, best_d = nid, d
        if best is None:
            raise ValidationError("network has no nodes", path="nodes")
        return best

    def area_anchor_poi(self, area_id: str) -> str:
        """Representative PoI of an area (lowest id), used for area-level trips."""
        area = self.areas[area_id]
        if not area.poi_ids:
            raise ValidationError(f"area {area_id} has no PoI", path=f"areas.{area_id}")
        return min(area.poi_ids)

    # -- routing -------------------------------------------------------

    def _dijkstra(self, source: str):
        dist = {source: 0.0}
        prev = {}
        heap = [(0.0, source)]
        while heap:
            d, u = heapq.heappop(heap)
            if d > dist.get(u, math.inf):
                continue
            for v, w in self._adj.get(u, []):
                nd = d + w
                if nd < dist.get(v, math.inf) - 1e-12:
                    dist[v] = nd
                    prev[v] = u
                    heapq.heappush(heap, (nd, v))
        return dist, prev

    def _node_route(self, src: str, dst: str):
        key = (src, dst)
        if key in self._path_cache:
            return self._path_cache[key]
        dist, prev = self._dijkstra(src)
        if dst not in dist:
            self._path_cache[key] = None
            return None
        path = [dst]
        while path[-1] != src:
            path.append(prev[path[-1]])
        path.reverse()
        self._path_cache[key] = (dist[dst], tuple(path))
        return self._path_cache[key]

    def shortest_path_distance(self, p: str, q: str) -> float:
        """Minimum walkable path length between the anchors of PoIs p and q."""
        if p not in self.pois or q not in self.pois:
            raise UnknownPoIError(f"unknown PoI in pair ({p}, {q})")
        if p == q:
            return 0.0
        key = (p, q)
        if key not in self._dist_cache:
            route = self._node_route(self.poi_anchors[p], self.poi_anchors[q])
            self._dist_cache[key] = None if route is None else route[0]
            self._dist_cache[(q, p)] = self._dist_cache[key]
        if self._dist_cache[key] is None:
            raise NoPathError(f"no walkable path between PoIs {p} and {q}")
        return self._dist_cache[key]

    def shortest_path_nodes(self, p: str, q: str) -> tuple:
        """Node sequence of the minimum-length walkable route between PoI anchors."""
        if p not in self.pois or q not in self.pois:
            raise UnknownPoIError(f"unknown PoI in pair ({p}, {q})")
        src, dst = self.poi_anchors[p], self.poi_anchors[q]
        if src == dst:
            return (src,)
        route = self._node_route(src, dst)
        if route is None:
            raise NoPathError(f"no walkable path between PoIs {p} and {q}")
        return route[1]

    def area_distance(self, m: str, n: str) -> float:
        """dist(m, n): walkable path length between the areas' anchor PoIs."""
        return self.shortest_path_distance(self.area_anchor_poi(m), self.area_anchor_poi(n))

    def route_polyline(self, node_ids) -> np.ndarray:
        return np.array([self.nodes[n] for n in node_ids], dtype=float)

    # -- geometry ------------------------------------------------------

    def detect_visit(self, x: float, y: float):
        """PoI whose vicinity disc contains (x, y); boundary inclusive.

        With overlapping vicinities the nearest centre wins and exact ties
        go to the lowest PoI id, so replay stays deterministic.
        """
        best = None
        best_d = math.inf
        for pid in self._poi_order:
            p = self.pois[pid]
            d = math.hypot(p.x - x, p.y - y)
            if d <= p.radius and d < best_d - 1e-12:
                best, best_d = pid, d
        return best

    def area_of_point(self, x: float, y: float):
        for aid in self._area_order:
            if self.areas[aid].contains(x, y):
                return aid
        return None

    def areas_of_points(self, xy: np.ndarray) -> list:
        """Area id (or None) per row of an (n, 2) position array."""
        out = [None] * len(xy)
        unresolved = np.ones(len(xy), dtype=bool)
        x = xy[:, 0]
        y = xy[:, 1]
        for aid in self._area_order:
            if not unresolved.any():
                break
            rect = self._area_rect.get(aid)
            if rect is not None:
                x0, x1, y0, y1 = rect
                hit = (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1) & unresolved
            else:
                hit = points_in_polygon(xy, self.areas[aid].polygon) & unresolved
            for i in np.nonzero(hit)[0]:
                out[i] = aid
            unresolved &= ~hit
        return out

    # -- validation ----------------------------------------------------

    def validate(self) -> None:
        for aid, area in self.areas.items():
            if not polygon_is_simple(area.polygon):
                raise ValidationError(f"area {aid} polygon self-intersects", path=f"areas.{aid}.polygon")
            if not area.poi_ids:
                raise ValidationError(f"area {aid} contains no PoI", path=f"areas.{aid}")
        order = self._area_order
        for i, a in enumerate(order):
            for b in order[i + 1:]:
                if polygons_overlap(self.areas[a].polygon, self.areas[b].polygon):
                    raise ValidationError(f"areas {a} and {b} overlap", path=f"areas.{b}.polygon")
        for u, v, length, _ in self.edges:
            (x1, y1), (x2, y2) = self.nodes[u], self.nodes[v]
            if length < math.hypot(x2 - x1, y2 - y1) - 1e-6:
                raise ValidationError(f"edge ({u},{v}) shorter than straight line", path="edges")
        for pid, p in self.pois.items():
            if p.radius <= 0:
                raise ValidationError(f"PoI {pid} radius must be > 0", path=f"pois.{pid}.radius")
            if p.area and p.area in self.areas and not self.areas[p.area].contains(p.x, p.y):
                raise ValidationError(f"PoI {pid} lies outside its area {p.area}", path=f"pois.{pid}")
        total = sum(p.attraction for p in self.pois.values())
        if self.pois and abs(total - 1.0) > 1e-9:
            raise ValidationError(f"PoI attractions sum to {total}, expected 1", path="pois")
        anchors = sorted(set(self.poi_anchors.values()))
        if anchors:
            dist, _ = self._dijkstra(anchors[0])
            missing = [n for n in anchors if n not in dist]
            if missing:
                raise ValidationError(f"PoI anchors disconnected: {missing}", path="edges")
        for k, link in enumerate(self.links):
            self._validate_link(link, path=f"mobility_links[{k}]")

    def _validate_link(self, link: MobilityLink, path: str = "mobility_link") -> None:
        for pid in link.pair:
            if pid not in self.pois:
                raise ValidationError(f"mobility link endpoint {pid} is not a PoI", path=f"{path}.{pid}")
        if link.speed <= 0:
            raise ValidationError("mobility link speed must be > 0", path=f"{path}.speed_kmh")
        walk = {}
        for u, v, _, walkable in self.edges:
            if walkable:
                walk.setdefault(u, set()).add(v)
                walk.setdefault(v, set()).add(u)
        for a, b in zip(link.path[:-1], link.path[1:]):
            if b not in walk.get(a, ()):
                raise ValidationError(f"link path hop ({a},{b}) is not a walkable edge", path=f"{path}.path")

    # -- mobility link resolution ---------------------------------------

    def resolve_link(self, from_poi: str, to_poi: str, speed: float, path=None) -> MobilityLink:
        """Build a validated MobilityLink, routing the path when not given."""
        if from_poi not in self.pois or to_poi not in self.pois:
            raise UnknownPoIError(f"unknown PoI in mobility link ({from_poi}, {to_poi})")
        if path is None:
            for cand in self.links:
                if cand.path and {cand.from_poi, cand.to_poi} == {from_poi, to_poi}:
                    path = cand.path if cand.from_poi == from_poi else tuple(reversed(cand.path))
                    break
        if path is None:
            try:
                path = self.shortest_path_nodes(from_poi, to_poi)
            except NoPathError as exc:
                raise UnknownLinkError(
                    f"no walkable route between link endpoints ({from_poi}, {to_poi})"
                ) from exc
        link = MobilityLink(from_poi, to_poi, tuple(path), float(speed))
        self._validate_link(link)
        return link

    # -- contribution map (which OD pairs pass an observed counter) -----

    def contribution_map(self) -> dict:
        """Observed area id -> set of ordered (origin, destination) area pairs.

        A pair contributes to the counter in area ``a`` when the shortest
        walkable path between the two areas' anchor PoIs intersects ``a``'s
        polygon.
        """
        out = {}
        area_ids = self._area_order
        polylines = {}
        for m in area_ids:
            for n in area_ids:
                try:
                    nodes = self.shortest_path_nodes(self.area_anchor_poi(m), self.area_anchor_poi(n))
                except NoPathError:
                    continue
                polylines[(m, n)] = self.route_polyline(nodes)
        for a in self.observed_area_ids():
            hits = set()
            poly = self.areas[a].polygon
            for pair, line in polylines.items():
                if polyline_intersects_polygon(line, poly):
                    hits.add(pair)
            out[a] = hits
        return out

    # -- serialization ---------------------------------------------------

    @classmethod
    def from_json(cls, payload: dict) -> "Network":
        try:
            nodes = {str(n["id"]): (float(n["x"]), float(n["y"])) for n in payload["nodes"]}
            edges = [
                (str(e["u"]), str(e["v"]), float(e["length"]), bool(e.get("walkable", True)))
                for e in payload["edges"]
            ]
            areas = {}
            for a in payload["areas"]:
                areas[str(a["id"])] = Area(
                    id=str(a["id"]),
                    polygon=tuple((float(x), float(y)) for x, y in a["polygon"]),
                    observed=bool(a.get("observed", False)),
                )
            pois = {}
            by_area = {}
            for p in payload["pois"]:
                poi = PoI(
                    id=str(p["id"]),
                    x=float(p["x"]),
                    y=float(p["y"]),
                    radius=float(p.get("radius", DEFAULT_VICINITY_RADIUS_M)),
                    attraction=float(p.get("attraction", 0.0)),
                    area=str(p.get("area", "")),
                )
                pois[poi.id] = poi
                by_area.setdefault(poi.area, []).append(poi.id)
            areas = {
                aid: Area(a.id, a.polygon, a.observed, tuple(sorted(by_area.get(aid, ()))))
                for aid, a in areas.items()
            }
            links = [
                MobilityLink(
                    from_poi=str(l["from"]),
                    to_poi=str(l["to"]),
                    path=tuple(str(n) for n in l.get("path", ())),
                    speed=float(l["speed_kmh"]) * KMH,
                )
                for l in payload.get("mobility_links", [])
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed network file: {exc}", path="network") from exc
        net = cls(nodes=nodes, edges=edges, pois=pois, areas=areas, links=links)
        for k, link in enumerate(net.links):
            if not link.path:
                net.links[k] = net.resolve_link(link.from_poi, link.to_poi, link.speed)
        net.validate()
        return net

    @classmethod
    def load(cls, path) -> "Network":
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    def to_json(self) -> dict:
        return {
            "nodes": [{"id": n, "x": x, "y": y} for n, (x, y) in sorted(self.nodes.items())],
            "edges": [
                {"u": u, "v": v, "length": length, "walkable": w} for u, v, length, w in self.edges
            ],
            "pois": [
                {
                    "id": p.id, "x": p.x, "y": p.y, "radius": p.radius,
                    "attraction": p.attraction, "area": p.area,
                }
                for p in (self.pois[i] for i in self._poi_order)
            ],
            "areas": [
                {"id": a.id, "polygon": [list(pt) for pt in a.polygon], "observed": a.observed}
                for a in (self.areas[i] for i in self._area_order)
            ],
            "mobility_links": [
                {"from": l.from_poi, "to": l.to_poi, "path": list(l.path), "speed_kmh": l.speed / KMH}
                for l in self.links
            ],
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)

    def to_geojson(self) -> dict:
        """Same content as the JSON form, as a FeatureCollection.

        Coordinates stay in the local planar frame (metres); the explorer
        renders them directly.
        """
        features = []
        for aid in self._area_order:
            a = self.areas[aid]
            ring = [list(pt) for pt in a.polygon] + [list(a.polygon[0])]
            features.append({
                "type": "Feature",
                "geometry": {"type": "Polygon", "coordinates": [ring]},
                "properties": {"kind": "area", "id": a.id, "observed": a.observed,
                               "pois": list(a.poi_ids)},
            })
        for u, v, length, w in self.edges:
            features.append({
                "type": "Feature",
                "geometry": {"type": "LineString",
                             "coordinates": [list(self.nodes[u]), list(self.nodes[v])]},
                "properties": {"kind": "edge", "u": u, "v": v, "length": length, "walkable": w},
            })
        for pid in self._poi_order:
            p = self.pois[pid]
            features.append({
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [p.x, p.y]},
                "properties": {"kind": "poi", "id": p.id, "radius": p.radius,
                               "attraction": p.attraction, "area": p.area,
                               "anchor": self.poi_anchors[p.id]},
            })
        for l in self.links:
            coords = [list(self.nodes[n]) for n in l.path]
            features.append({
                "type": "Feature",
                "geometry": {"type": "LineString", "coordinates": coords},
                "properties": {"kind": "mobility_link", "from": l.from_poi, "to": l.to_poi,
                               "speed_kmh": l.speed / KMH},
            })
        return {"type": "FeatureCollection",
                "properties": {"crs": "local planar metres"},
                "features": features}


def poi_distance_matrix(network: Network) -> dict:
    """(p, q) -> metres for every PoI pair; unreachable pairs map to None."""
    out = {}
    for p in network.poi_ids:
        for q in network.poi_ids:
            try:
                out[(p, q)] = network.shortest_path_distance(p, q)
            except NoPathError:
                out[(p, q)] = None
    return out


def total_route_length(network: Network, node_ids) -> float:
    return polyline_length(network.route_polyline(node_ids))
