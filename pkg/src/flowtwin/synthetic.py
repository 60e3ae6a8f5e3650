"""Bundled synthetic reference scenario: 8 areas, 9 PoIs, park-scale geometry.

This is a synthetic analog of a ~1 km^2 visitor park, not survey data: a
4 x 2 grid of 250 m areas (A..H) over a 125 m lattice walk network, one
counter in each of four observed areas, two mobility corridors, and the
reference per-area visit shares wired through the attraction normalizer.
It exists so the whole pipeline can run end to end at desk scale and so
the closed-loop acceptance suite has a controlled ground truth.
"""

from __future__ import annotations

import numpy as np

from .choice import ChoiceModelParams, FeatureLayout, init_params
from .demand import (
    ODSample,
    SpeedBins,
    SpotCountSeries,
    aggregate_od,
    od_totals,
    sample_demand,
)
from .environment import InterventionSpec, baseline_environment, normalize_attractions
from .network import KMH, Network
from .seeding import substream

# Per-area visit shares and per-PoI override scores of the reference layout.
AREA_SHARES = {
    "A": 0.136, "B": 0.0962, "C": 0.0095, "D": 0.157,
    "E": 0.0679, "F": 0.140, "G": 0.138, "H": 0.165,
}
POI_AREA = {
    "00": "A", "01": "A", "02": "D", "03": "G", "04": "F",
    "05": "C", "06": "B", "07": "E", "08": "H",
}
MOBILITY_OVERRIDES = {
    "00": 0.0545, "01": 0.0545, "02": 0.151, "03": 0.153, "04": 0.152,
    "05": 0.0990, "06": 0.0978, "07": 0.0628, "08": 0.176,
}
OBSERVED_AREAS = ("A", "D", "G", "H")

_AREA_CELL = {
    "A": (0, 0), "B": (1, 0), "C": (2, 0), "D": (3, 0),
    "E": (0, 1), "F": (1, 1), "G": (2, 1), "H": (3, 1),
}
_CELL_M = 250.0
_GRID_M = 125.0


def _node_id(x: float, y: float) -> str:
    return f"n{int(x)}_{int(y)}"


def build_network() -> Network:
    """The synthetic park: lattice walk graph, PoIs on area centres."""
    nodes = {}
    for xi in range(9):
        for yi in range(5):
            x, y = xi * _GRID_M, yi * _GRID_M
            nodes[_node_id(x, y)] = (float(x), float(y))
    # PoI 01 sits off-lattice inside area A
    nodes["n60_125"] = (60.0, 125.0)
    edges = []
    for xi in range(9):
        for yi in range(5):
            x, y = xi * _GRID_M, yi * _GRID_M
            if xi < 8:
                edges.append((_node_id(x, y), _node_id(x + _GRID_M, y), _GRID_M, True))
            if yi < 4:
                edges.append((_node_id(x, y), _node_id(x, y + _GRID_M), _GRID_M, True))
    edges.append(("n0_125", "n60_125", 60.0, True))
    edges.append(("n60_125", "n125_125", 65.0, True))

    attractions = normalize_attractions(AREA_SHARES, POI_AREA)
    poi_xy = {
        "00": (125.0, 125.0), "01": (60.0, 125.0), "02": (875.0, 125.0),
        "03": (625.0, 375.0), "04": (375.0, 375.0), "05": (625.0, 125.0),
        "06": (375.0, 125.0), "07": (125.0, 375.0), "08": (875.0, 375.0),
    }
    pois = [
        {"id": pid, "x": poi_xy[pid][0], "y": poi_xy[pid][1], "radius": 15.0,
         "attraction": attractions[pid], "area": POI_AREA[pid]}
        for pid in sorted(poi_xy)
    ]
    areas = []
    for aid, (cx, cy) in _AREA_CELL.items():
        x0, y0 = cx * _CELL_M, cy * _CELL_M
        areas.append({
            "id": aid,
            "polygon": [[x0, y0], [x0 + _CELL_M, y0], [x0 + _CELL_M, y0 + _CELL_M], [x0, y0 + _CELL_M]],
            "observed": aid in OBSERVED_AREAS,
        })
    links = [
        {"from": "00", "to": "03", "speed_kmh": 20.0},
        {"from": "01", "to": "04", "speed_kmh": 20.0},
    ]
    return Network.from_json({
        "nodes": [{"id": n, "x": x, "y": y} for n, (x, y) in sorted(nodes.items())],
        "edges": [{"u": u, "v": v, "length": L, "walkable": w} for u, v, L, w in edges],
        "pois": pois,
        "areas": areas,
        "mobility_links": links,
    })


def mobility_scenario(seed: int = 7) -> InterventionSpec:
    """The reference intervention: both corridors active plus score overrides."""
    return InterventionSpec.from_json({
        "label": "mobility",
        "walk_speed_kmh": 5.0,
        "mobility_speed_kmh": 20.0,
        "mobility_links": [
            {"from": "00", "to": "03"},
            {"from": "01", "to": "04"},
        ],
        "attraction_overrides": dict(MOBILITY_OVERRIDES),
        "seed": seed,
    })


def twin_intervention() -> InterventionSpec:
    """Links-only intervention over the baseline's busiest PoI pairs.

    Used by the closed-loop evaluation: attraction overrides are left out
    because a model trained under a single attraction table cannot identify
    an attraction response (the feature is constant across the training
    data), whereas link speed-ups act through travel times and the riding
    dynamics themselves.
    """
    return InterventionSpec.from_json({
        "label": "twin-mobility",
        "walk_speed_kmh": 5.0,
        "mobility_speed_kmh": 20.0,
        "mobility_links": [
            {"from": "02", "to": "08"},
            {"from": "00", "to": "04"},
        ],
    })


# -- synthetic observations ---------------------------------------------------

# entrances dominate origins; destination mass follows the visit shares,
# sharpened so the big pairs stay dense enough to survive the calibration floor
_ORIGIN_WEIGHTS = {
    "A": 0.52, "B": 0.03, "C": 0.02, "D": 0.16, "E": 0.03, "F": 0.04, "G": 0.04, "H": 0.16,
}
DAY_START_S = 9.0 * 3600
DAY_END_S = 17.0 * 3600


def synth_od_samples(network: Network, n_samples: int = 3000, seed: int = 11) -> list:
    """Wide-area style OD samples with a two-peak departure profile."""
    rng = substream(seed, "od-samples")
    areas = sorted(_ORIGIN_WEIGHTS)
    origin_p = np.array([_ORIGIN_WEIGHTS[a] for a in areas])
    origin_p = origin_p / origin_p.sum()
    dest_p = np.array([AREA_SHARES[a] for a in areas]) ** 1.6
    dest_p = dest_p / dest_p.sum()
    out = []
    while len(out) < n_samples:
        m = areas[int(rng.choice(len(areas), p=origin_p))]
        n = areas[int(rng.choice(len(areas), p=dest_p))]
        if m == n:
            continue
        if rng.random() < 0.55:
            t_dep = rng.normal(10.5 * 3600, 2100.0)
        else:
            t_dep = rng.normal(14.5 * 3600, 2700.0)
        if not (DAY_START_S <= t_dep < DAY_END_S):
            continue
        speed = min(max(rng.normal(1.35, 0.15), 0.7), 2.2)
        dist = network.area_distance(m, n)
        duration_min = dist / (speed * 60.0)
        out.append(ODSample(m, n, float(t_dep), float(duration_min)))
    return out


def synth_counts(network: Network, demand, target_ratio: float = 0.165,
                 seed: int = 13) -> SpotCountSeries:
    """Counter volumes consistent with a scaled-down version of the prior demand."""
    rng = substream(seed, "counts")
    contrib = network.contribution_map()
    counts = {}
    slots = sorted({t for (_, _, t, _) in demand.counts})
    for a, pairs in sorted(contrib.items()):
        for t in slots:
            vol = sum(c for (m, n, tt, v), c in demand.counts.items()
                      if tt == t and (m, n) in pairs)
            lam = target_ratio * vol
            if lam > 0:
                counts[(a, t)] = int(rng.poisson(lam))
    return SpotCountSeries(slot_s=demand.slot_s, counts=counts)


def build_demo_inputs(out_dir, n_samples: int = 5000, seed: int = 11,
                      slot_s: float = 600.0, target_ratio: float = 0.22) -> dict:
    """Write the full synthetic input set; returns the path map."""
    import os

    from .demand import save_counts_csv, save_od_samples_csv

    os.makedirs(out_dir, exist_ok=True)
    network = build_network()
    samples = synth_od_samples(network, n_samples=n_samples, seed=seed)
    bins = SpeedBins()
    tensor = aggregate_od(samples, slot_s, bins, network.area_distance)
    totals = od_totals(tensor)
    from .gmm import fit_departure_priors
    by_pair = {}
    for s in samples:
        by_pair.setdefault((s.origin, s.destination), []).append((s.depart_s, s.duration_min))
    priors = fit_departure_priors(by_pair, n_components=3, seed=seed)
    demand = sample_demand(priors, totals, slot_s, bins, network.area_distance, seed)
    counts = synth_counts(network, demand, target_ratio=target_ratio, seed=seed)

    paths = {
        "network": os.path.join(out_dir, "network.json"),
        "od_samples": os.path.join(out_dir, "od_samples.csv"),
        "counts": os.path.join(out_dir, "counts.csv"),
        "scenario": os.path.join(out_dir, "scenario_mobility.json"),
    }
    network.save(paths["network"])
    save_od_samples_csv(samples, paths["od_samples"])
    save_counts_csv(counts, paths["counts"])
    import json
    with open(paths["scenario"], "w") as fh:
        json.dump(mobility_scenario().to_json(), fh, indent=1)
    return paths


# -- planted ground-truth model -------------------------------------------------

def build_planted_model(network: Network,
                        attraction_weight: float = 14.0,
                        travel_time_weight: float = 3.0,
                        revisit_penalty: float = 6.0,
                        exit_bias: float = -4.0,
                        exit_distance_weight: float = 12.0,
                        exit_evening_weight: float = 1.2) -> ChoiceModelParams:
    """An exact linear-utility model expressed in the MLP parameter format.

    Candidate j scores attraction_weight * attraction_j
    - travel_time_weight * tt_j - revisit_penalty * visited_j; the exit
    class scores exit_bias + exit_distance_weight * cumdist_norm
    + exit_evening_weight * (-sin of day phase), which rises through the
    afternoon.  The two hidden ReLU layers pass the needed features through
    unchanged (signed features travel as positive/negative parts), so this
    is a genuine instance of the trained architecture.
    """
    poi_ids = tuple(network.poi_ids)
    params = init_params(poi_ids, hidden_sizes=(64, 64), head="plain",
                         exit_policy="exit_class", seed=0)
    layout = FeatureLayout(poi_ids)
    p = layout.n_pois
    L = layout.length
    h = 64
    W0 = np.zeros((h, L))
    b0 = np.zeros(h)
    # unit blocks: [0:p) attraction, [p:2p) travel time, [2p:3p) visited,
    # [3p] cumdist, [3p+1 / 3p+2] +sin / -sin
    for j in range(p):
        W0[j, 3 * p + 3 + j] = 1.0          # attraction block
        W0[p + j, 2 * p + 3 + j] = 1.0      # travel-time block
        W0[2 * p + j, p + j] = 1.0          # visited block
    W0[3 * p, 2 * p + 2] = 1.0              # cumulative distance
    W0[3 * p + 1, 2 * p] = 1.0              # ReLU(sin)
    W0[3 * p + 2, 2 * p] = -1.0             # ReLU(-sin)
    used = 3 * p + 3
    W1 = np.zeros((h, h))
    b1 = np.zeros(h)
    W1[:used, :used] = np.eye(used)
    Wo = np.zeros((p + 1, h))
    bo = np.zeros(p + 1)
    for j in range(p):
        Wo[j, j] = attraction_weight
        Wo[j, p + j] = -travel_time_weight
        Wo[j, 2 * p + j] = -revisit_penalty
    Wo[p, 3 * p] = exit_distance_weight
    Wo[p, 3 * p + 1] = -exit_evening_weight   # -sin = ReLU(-sin) - ReLU(sin)
    Wo[p, 3 * p + 2] = exit_evening_weight
    bo[p] = exit_bias
    params.arrays = {"W0": W0, "b0": b0, "W1": W1, "b1": b1, "Wo": Wo, "bo": bo}
    params.training_meta = {"planted": True}
    return params


def demo_environment(network: Network | None = None):
    network = network or build_network()
    return baseline_environment(network, walk_speed=5.0 * KMH)
