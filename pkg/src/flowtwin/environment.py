"""Environmental features seen by the decision model, and how interventions modify them.

A mobility introduction never touches the trained model: it only swaps the
environment the model reads.  Pairs served by a mobility link get the
service speed as their speed cap; every other pair keeps the walk speed.
Effective travel time between PoIs p and q is path_length(p, q) divided by
that cap, so the link changes speed, never distance.  Attraction overrides
are raw scores substituted into the table and renormalized globally.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import AllZeroError, NoPathError, UnknownPoIError, ValidationError
from .network import KMH, MobilityLink, Network

DEFAULT_WALK_SPEED_KMH = 5.0
DEFAULT_MOBILITY_SPEED_KMH = 20.0


@dataclass(frozen=True)
class InterventionSpec:
    """A mobility-introduction scenario.

    ``mobility_links`` holds (from_poi, to_poi, optional path, optional
    speed m/s) tuples; a None speed falls back to ``mobility_speed``.
    ``attraction_overrides`` maps PoI id to a raw (unnormalized) score.
    """

    mobility_links: tuple = ()
    attraction_overrides: dict = field(default_factory=dict)
    walk_speed: float = DEFAULT_WALK_SPEED_KMH * KMH
    mobility_speed: float = DEFAULT_MOBILITY_SPEED_KMH * KMH
    label: str = "baseline"
    seed: int | None = None

    def is_empty(self) -> bool:
        return not self.mobility_links and not self.attraction_overrides

    @classmethod
    def from_json(cls, payload: dict) -> "InterventionSpec":
        if not isinstance(payload, dict):
            raise ValidationError("scenario must be a JSON object", path="")
        allowed = {"walk_speed_kmh", "mobility_speed_kmh", "mobility_links",
                   "attraction_overrides", "seed", "label"}
        for key in payload:
            if key not in allowed:
                raise ValidationError(f"unknown scenario key {key!r}", path=key)
        walk = payload.get("walk_speed_kmh", DEFAULT_WALK_SPEED_KMH)
        mob = payload.get("mobility_speed_kmh", DEFAULT_MOBILITY_SPEED_KMH)
        for key, val in (("walk_speed_kmh", walk), ("mobility_speed_kmh", mob)):
            if not isinstance(val, (int, float)) or val <= 0:
                raise ValidationError(f"{key} must be a positive number", path=key)
        links = []
        raw_links = payload.get("mobility_links", [])
        if not isinstance(raw_links, list):
            raise ValidationError("mobility_links must be a list", path="mobility_links")
        for i, l in enumerate(raw_links):
            if not isinstance(l, dict) or "from" not in l or "to" not in l:
                raise ValidationError("mobility link needs 'from' and 'to'",
                                      path=f"mobility_links[{i}]")
            speed = l.get("speed_kmh")
            if speed is not None and (not isinstance(speed, (int, float)) or speed <= 0):
                raise ValidationError("speed_kmh must be a positive number",
                                      path=f"mobility_links[{i}].speed_kmh")
            path = l.get("path")
            if path is not None and not isinstance(path, list):
                raise ValidationError("path must be a list of node ids",
                                      path=f"mobility_links[{i}].path")
            links.append((str(l["from"]), str(l["to"]),
                          tuple(path) if path else None,
                          speed * KMH if speed is not None else None))
        overrides = payload.get("attraction_overrides", {})
        if not isinstance(overrides, dict):
            raise ValidationError("attraction_overrides must be an object",
                                  path="attraction_overrides")
        clean = {}
        for pid, score in overrides.items():
            if not isinstance(score, (int, float)) or score < 0:
                raise ValidationError("override scores must be >= 0",
                                      path=f"attraction_overrides.{pid}")
            clean[str(pid)] = float(score)
        return cls(
            mobility_links=tuple(links),
            attraction_overrides=clean,
            walk_speed=float(walk) * KMH,
            mobility_speed=float(mob) * KMH,
            label=str(payload.get("label", "scenario")),
            seed=payload.get("seed"),
        )

    @classmethod
    def load(cls, path) -> "InterventionSpec":
        with open(path) as fh:
            try:
                payload = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"invalid JSON: {exc}", path=str(path)) from exc
        return cls.from_json(payload)

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "walk_speed_kmh": self.walk_speed / KMH,
            "mobility_speed_kmh": self.mobility_speed / KMH,
            "mobility_links": [
                {"from": f, "to": t,
                 **({"path": list(p)} if p else {}),
                 **({"speed_kmh": s / KMH} if s is not None else {})}
                for f, t, p, s in self.mobility_links
            ],
            "attraction_overrides": dict(self.attraction_overrides),
            **({"seed": self.seed} if self.seed is not None else {}),
        }


EMPTY_INTERVENTION = InterventionSpec()


def normalize_attractions(area_shares: dict, poi_to_area: dict) -> dict:
    """Turn per-area visit proportions into a PoI attraction table.

    Each area's share is split equally among its PoIs, then the whole
    table is renormalized to sum to exactly 1.
    """
    total = sum(area_shares.values())
    if total <= 0:
        raise AllZeroError("at least one area share must be positive")
    for aid, share in area_shares.items():
        if share < 0:
            raise ValidationError(f"negative share for area {aid}", path=f"shares.{aid}")
    counts = {}
    for pid, aid in poi_to_area.items():
        counts[aid] = counts.get(aid, 0) + 1
    raw = {}
    for pid, aid in poi_to_area.items():
        share = area_shares.get(aid, 0.0)
        raw[pid] = share / counts[aid]
    s = sum(raw.values())
    if s <= 0:
        raise AllZeroError("no PoI received a positive share")
    return {pid: v / s for pid, v in sorted(raw.items())}


@dataclass
class EnvironmentView:
    """Immutable snapshot of the features the decision model reads.

    ``pair_speed`` resolves the speed cap for an ordered PoI pair and
    ``travel_time`` divides the walkable shortest-path distance by it.
    """

    network: Network
    attractions: dict                 # poi id -> normalized score
    walk_speed: float
    mobility_speed: float
    covered_pairs: frozenset = frozenset()   # unordered frozensets of endpoints
    active_links: tuple = ()                 # resolved MobilityLinks
    label: str = "baseline"

    def __post_init__(self):
        total = sum(self.attractions.values())
        if self.attractions and abs(total - 1.0) > 1e-9:
            raise ValidationError(f"attraction table sums to {total}", path="attractions")
        self._tt_cache = {}
        self._link_by_pair = {}
        for link in self.active_links:
            self._link_by_pair[frozenset(link.pair)] = link

    def pair_speed(self, p: str, q: str) -> float:
        if frozenset((p, q)) in self.covered_pairs:
            return self.mobility_speed
        return self.walk_speed

    def link_for(self, p: str, q: str):
        return self._link_by_pair.get(frozenset((p, q)))

    def travel_time(self, p: str, q: str) -> float:
        """Effective travel time in seconds between PoIs p and q."""
        key = (p, q)
        if key not in self._tt_cache:
            dist = self.network.shortest_path_distance(p, q)
            self._tt_cache[key] = dist / self.pair_speed(p, q)
        return self._tt_cache[key]

    def travel_time_row(self, p: str) -> dict:
        """q -> seconds from p; unreachable PoIs map to inf."""
        row = {}
        for q in self.network.poi_ids:
            try:
                row[q] = self.travel_time(p, q)
            except NoPathError:
                row[q] = float("inf")
        return row

    def attraction_of(self, pid: str) -> float:
        return self.attractions.get(pid, 0.0)


def effective_travel_time(p: str, q: str, env: EnvironmentView) -> float:
    return env.travel_time(p, q)


def baseline_environment(network: Network,
                         walk_speed: float = DEFAULT_WALK_SPEED_KMH * KMH) -> EnvironmentView:
    """The pre-intervention environment: walk speed everywhere, file attractions."""
    attractions = {pid: network.pois[pid].attraction for pid in network.poi_ids}
    return EnvironmentView(
        network=network,
        attractions=attractions,
        walk_speed=walk_speed,
        mobility_speed=walk_speed,
        covered_pairs=frozenset(),
        active_links=(),
        label="baseline",
    )


def apply_intervention(base: EnvironmentView, spec: InterventionSpec) -> EnvironmentView:
    """A new view with the intervention applied; ``base`` is never touched.

    Only pairs listed as mobility link endpoints get the mobility speed;
    chains across several links are not inferred.
    """
    network = base.network
    links = []
    covered = set()
    for from_poi, to_poi, path, speed in spec.mobility_links:
        link = network.resolve_link(from_poi, to_poi, speed if speed is not None else spec.mobility_speed, path)
        links.append(link)
        covered.add(frozenset(link.pair))
    attractions = dict(base.attractions)
    if spec.attraction_overrides:
        for pid, score in spec.attraction_overrides.items():
            if pid not in network.pois:
                raise UnknownPoIError(f"attraction override for unknown PoI {pid}")
            attractions[pid] = float(score)
        total = sum(attractions.values())
        if total <= 0:
            raise AllZeroError("attraction overrides zero out the whole table")
        attractions = {pid: v / total for pid, v in attractions.items()}
    return EnvironmentView(
        network=network,
        attractions=attractions,
        walk_speed=spec.walk_speed,
        mobility_speed=spec.mobility_speed,
        covered_pairs=frozenset(covered),
        active_links=tuple(links),
        label=spec.label,
    )
