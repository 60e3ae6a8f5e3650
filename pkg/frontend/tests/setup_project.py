"""Build a tiny flowtwin project for the explorer end-to-end tests.

Writes a triangle-network project into the directory given as argv[1],
runs the offline pipeline (priors, reconstruction, replay, training set,
model), and prints the resulting serve config path as JSON.
"""

import json
import os
import sys

from flowtwin import choice, demand, gmm, microsim
from flowtwin.environment import baseline_environment
from flowtwin.network import KMH, Network
from flowtwin.seeding import substream

PAYLOAD = {
    "nodes": [
        {"id": "a", "x": 0.0, "y": 0.0},
        {"id": "b", "x": 300.0, "y": 0.0},
        {"id": "c", "x": 300.0, "y": 400.0},
    ],
    "edges": [
        {"u": "a", "v": "b", "length": 300.0, "walkable": True},
        {"u": "b", "v": "c", "length": 400.0, "walkable": True},
        {"u": "a", "v": "c", "length": 800.0, "walkable": True},
    ],
    "pois": [
        {"id": "A", "x": 0.0, "y": 0.0, "radius": 15.0, "attraction": 0.25, "area": "Z1"},
        {"id": "B", "x": 300.0, "y": 0.0, "radius": 15.0, "attraction": 0.25, "area": "Z1"},
        {"id": "C", "x": 300.0, "y": 400.0, "radius": 15.0, "attraction": 0.5, "area": "Z2"},
    ],
    "areas": [
        {"id": "Z1", "polygon": [[-50, -50], [350, -50], [350, 200], [-50, 200]],
         "observed": True},
        {"id": "Z2", "polygon": [[-50, 200], [350, 200], [350, 450], [-50, 450]],
         "observed": False},
    ],
    "mobility_links": [{"from": "A", "to": "C", "speed_kmh": 20.0}],
}


def main(root: str) -> None:
    os.makedirs(root, exist_ok=True)
    net = Network.from_json(PAYLOAD)
    net.save(os.path.join(root, "network.json"))
    env = baseline_environment(net, walk_speed=5.0 * KMH)

    rng = substream(3, "e2e-od")
    samples = []
    for _ in range(120):
        m, n = ("Z1", "Z2") if rng.random() < 0.7 else ("Z2", "Z1")
        t = float(rng.uniform(9 * 3600, 11 * 3600))
        speed = float(rng.uniform(1.1, 1.6))
        samples.append(demand.ODSample(m, n, t, net.area_distance(m, n) / (speed * 60.0)))
    bins = demand.SpeedBins()
    tensor = demand.aggregate_od(samples, 600.0, bins, net.area_distance)
    by_pair = {}
    for s in samples:
        by_pair.setdefault((s.origin, s.destination), []).append((s.depart_s, s.duration_min))
    priors = gmm.fit_departure_priors(by_pair, n_components=2, seed=3)
    prior_demand = demand.sample_demand(priors, demand.od_totals(tensor), 600.0, bins,
                                        net.area_distance, 3)
    counts = demand.SpotCountSeries(600.0, {
        ("Z1", t): max(1, c // 2)
        for (m, n, t, v), c in prior_demand.counts.items() if m == "Z1"
    })
    calibrated, _ = demand.calibrate_scale(prior_demand, counts, net.contribution_map())
    events = demand.instantiate_departures(calibrated, 3)
    demand.save_departures_csv(events, os.path.join(root, "departures.csv"))

    records, series = microsim.run_simulation(env, events, microsim.DirectTripPolicy(),
                                              seed=3, slot_s=600.0, max_time=43200.0)
    train_records = choice.build_training_set(records, env, exit_policy="exit_class")
    model = choice.train(train_records, choice.TrainingConfig(epochs=40), seed=3,
                         poi_ids=net.poi_ids)
    model.save(os.path.join(root, "model.json"))
    series.save_csv(os.path.join(root, "truth_population.csv"))

    config = {
        "paths": {
            "network": os.path.join(root, "network.json"),
            "model": os.path.join(root, "model.json"),
            "departures": os.path.join(root, "departures.csv"),
            "truth_population": os.path.join(root, "truth_population.csv"),
            "out_dir": os.path.join(root, "runs"),
        },
        "max_time": 43200.0,
    }
    cfg_path = os.path.join(root, "config.json")
    with open(cfg_path, "w") as fh:
        json.dump(config, fh, indent=1)
    print(json.dumps({"config": cfg_path, "events": len(events)}))


if __name__ == "__main__":
    main(sys.argv[1])
