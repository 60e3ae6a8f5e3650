"""Command-line pipeline: fit-prior, reconstruct, build-trainset, train,
simulate, evaluate, report, serve, plus init-demo for the bundled scenario.

Every stochastic stage requires --seed and writes a RunManifest next to its
outputs.  Exit codes: 0 success, 2 input/validation failure (including
stage-order violations such as train before build-trainset), 3 runtime
failure.  Validation failures print a machine-readable JSON error to
stderr with the offending path.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import choice, demand, gmm, metrics, microsim, scenario, synthetic
from .config import ProjectConfig
from .environment import InterventionSpec, apply_intervention, baseline_environment
from .errors import FlowTwinError, ValidationError
from .manifest import RunManifest
from .network import KMH, Network

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

# which stage produces which input, for stage-order error messages
_STAGE_HINTS = {
    "priors": "fit-prior",
    "departures": "reconstruct",
    "demand": "reconstruct",
    "trajectories": "simulate",
    "events": "simulate",
    "trainset": "build-trainset",
    "model": "train",
    "population": "simulate",
}


def _require_file(path, kind: str):
    if path is None:
        raise ValidationError(f"missing required {kind} file", path=kind)
    if not os.path.exists(path):
        hint = _STAGE_HINTS.get(kind)
        msg = f"{kind} file not found: {path}"
        if hint:
            msg += f" (run `flowtwin {hint}` first)"
        raise ValidationError(msg, path=str(path))
    return path


def _load_config(args) -> ProjectConfig:
    if getattr(args, "config", None):
        _require_file(args.config, "config")
        return ProjectConfig.load(args.config)
    return ProjectConfig.defaults()


def _out_dir(args, cfg: ProjectConfig) -> str:
    out = getattr(args, "out_dir", None) or cfg.path("out_dir") or "runs"
    os.makedirs(out, exist_ok=True)
    return out


def _ensure_parent(path: str) -> str:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    return path


def _network(args, cfg: ProjectConfig) -> Network:
    path = getattr(args, "network", None) or cfg.path("network")
    _require_file(path, "network")
    return Network.load(path)


def _baseline_env(args, cfg: ProjectConfig):
    return baseline_environment(_network(args, cfg), walk_speed=cfg["walk_speed_kmh"] * KMH)


# -- commands -----------------------------------------------------------------

def cmd_init_demo(args) -> list:
    paths = synthetic.build_demo_inputs(args.out_dir, n_samples=args.samples, seed=args.seed)
    cfg = {
        "paths": {
            # relative to this config file, so the project is relocatable
            "network": "network.json",
            "od_samples": "od_samples.csv",
            "counts": "counts.csv",
            "out_dir": "runs",
            # produced by the pipeline commands; serve mode reads them
            "model": os.path.join("runs", "model.json"),
            "departures": os.path.join("runs", "departures.csv"),
            "truth_population": os.path.join("runs", "baseline", "population.csv"),
        },
    }
    cfg_path = os.path.join(args.out_dir, "config.json")
    with open(cfg_path, "w") as fh:
        json.dump(cfg, fh, indent=1)
    print(f"demo project written to {args.out_dir}")
    return list(paths.values()) + [cfg_path]


def cmd_fit_prior(args) -> list:
    cfg = _load_config(args)
    od_path = args.od_samples or cfg.path("od_samples")
    _require_file(od_path, "od_samples")
    samples = demand.load_od_samples_csv(od_path)
    by_pair: dict = {}
    for s in samples:
        by_pair.setdefault((s.origin, s.destination), []).append((s.depart_s, s.duration_min))
    priors = gmm.fit_departure_priors(by_pair, n_components=cfg["gmm_components"], seed=args.seed)
    priors.save(_ensure_parent(args.out))
    print(f"fitted {len(priors.mixtures)} pair priors -> {args.out}")
    return [args.out]


def cmd_reconstruct(args) -> list:
    cfg = _load_config(args)
    network = _network(args, cfg)
    od_path = args.od_samples or cfg.path("od_samples")
    counts_path = args.counts or cfg.path("counts")
    _require_file(od_path, "od_samples")
    _require_file(counts_path, "counts")
    _require_file(args.priors, "priors")
    out_dir = _out_dir(args, cfg)

    samples = demand.load_od_samples_csv(od_path)
    bins = cfg.speed_bins()
    tensor = demand.aggregate_od(samples, cfg.slot_s, bins, network.area_distance)
    totals = demand.od_totals(tensor)
    priors = gmm.DeparturePriors.load(args.priors)
    prior_demand = demand.sample_demand(priors, totals, cfg.slot_s, bins,
                                        network.area_distance, args.seed)
    counts = demand.load_counts_csv(counts_path, slot_s=cfg.slot_s)
    calibrated, report = demand.calibrate_scale(prior_demand, counts, network.contribution_map())
    events = demand.instantiate_departures(calibrated, args.seed)

    demand_path = os.path.join(out_dir, "demand.csv")
    departures_path = os.path.join(out_dir, "departures.csv")
    report_path = os.path.join(out_dir, "calibration_report.json")
    calibrated.save_csv(demand_path)
    demand.save_departures_csv(events, departures_path)
    with open(report_path, "w") as fh:
        json.dump({
            "slot_ratios": {str(k): v for k, v in sorted(report.slot_ratios.items())},
            "zero_denominator_slots": list(report.zero_denominator_slots),
            "flagged": report.flagged,
            "rejected_samples": tensor.rejected,
            "total_departures": calibrated.total(),
        }, fh, indent=1)
    print(f"calibrated demand: {calibrated.total()} departures -> {departures_path}")
    if report.flagged:
        print(f"warning: zero-denominator slots {report.zero_denominator_slots}", file=sys.stderr)
    return [demand_path, departures_path, report_path]


def cmd_simulate(args) -> list:
    cfg = _load_config(args)
    env = _baseline_env(args, cfg)
    _require_file(args.departures, "departures")
    departures = demand.load_departures_csv(args.departures)
    if args.scenario:
        _require_file(args.scenario, "scenario")
        spec = InterventionSpec.load(args.scenario)
        env = apply_intervention(env, spec)
    if args.direct_trips:
        policy = microsim.DirectTripPolicy()
    else:
        _require_file(args.model, "model")
        policy = microsim.ModelPolicy(choice.ChoiceModelParams.load(args.model),
                                      mode=args.decision_mode)
    out_dir = _out_dir(args, cfg)
    records, series = microsim.run_simulation(
        env, departures, policy, sf_params=cfg.social_force(),
        dt=cfg["dt"], seed=args.seed, slot_s=cfg.slot_s,
        max_time=cfg["max_time"], sample_every=cfg["sample_every"],
    )
    traj_path = os.path.join(out_dir, "trajectories.jsonl")
    events_path = os.path.join(out_dir, "events.csv")
    pop_path = os.path.join(out_dir, "population.csv")
    microsim.save_trajectories_jsonl(records, traj_path)
    microsim.save_events_csv(records, events_path)
    series.save_csv(pop_path)
    print(f"simulated {len(records)} agents -> {out_dir}")
    return [traj_path, events_path, pop_path]


def cmd_build_trainset(args) -> list:
    cfg = _load_config(args)
    env = _baseline_env(args, cfg)
    _require_file(args.trajectories, "trajectories")
    _require_file(args.events, "events")
    records = microsim.load_trajectories(args.trajectories, args.events)
    layout = choice.FeatureLayout(tuple(env.network.poi_ids))
    train_records = choice.build_training_set(records, env, exit_policy=args.exit_policy,
                                              layout=layout)
    choice.save_training_set_csv(train_records, layout, _ensure_parent(args.out))
    meta = {
        "poi_ids": list(layout.poi_ids),
        "exit_policy": args.exit_policy,
        "n_records": len(train_records),
        "trajectory_total_distances": [r.total_distance for r in records],
    }
    meta_path = args.out + ".meta.json"
    with open(meta_path, "w") as fh:
        json.dump(meta, fh)
    print(f"{len(train_records)} decision records -> {args.out}")
    return [args.out, meta_path]


def cmd_train(args) -> list:
    cfg = _load_config(args)
    _require_file(args.trainset, "trainset")
    records = choice.load_training_set_csv(args.trainset)
    meta_path = args.trainset + ".meta.json"
    poi_ids = None
    distances = []
    exit_policy = args.exit_policy
    if os.path.exists(meta_path):
        with open(meta_path) as fh:
            meta = json.load(fh)
        poi_ids = meta.get("poi_ids")
        distances = meta.get("trajectory_total_distances", [])
        exit_policy = exit_policy or meta.get("exit_policy", "exit_class")
    exit_policy = exit_policy or "exit_class"
    hyper = cfg.training(head=args.head, exit_policy=exit_policy,
                         **({"epochs": args.epochs} if args.epochs else {}))
    params = choice.train(records, hyper, seed=args.seed, poi_ids=poi_ids)
    if exit_policy == "stamina" and distances:
        mu, sigma = choice.fit_stamina_lognormal(distances)
        params.stamina_mu_log = mu
        params.stamina_sigma_log = sigma
    params.save(_ensure_parent(args.out))
    meta = params.training_meta
    print(f"trained {args.head} head: loss {meta['initial_loss']:.4f} -> "
          f"{meta['final_loss']:.4f} over {meta['epochs']} epochs -> {args.out}")
    return [args.out]


def cmd_evaluate(args) -> list:
    pred = metrics.PopulationSeries.load_csv(_require_file(args.pred, "population"))
    truth = metrics.PopulationSeries.load_csv(_require_file(args.truth, "population"))
    pred_base = truth_base = None
    if args.pred_base and args.truth_base:
        pred_base = metrics.PopulationSeries.load_csv(_require_file(args.pred_base, "population"))
        truth_base = metrics.PopulationSeries.load_csv(_require_file(args.truth_base, "population"))
    report = metrics.evaluate(pred, truth, pred_base, truth_base,
                              metadata={"pred": args.pred, "truth": args.truth})
    report.save(_ensure_parent(args.out))
    print(json.dumps(report.to_json(), indent=1))
    return [args.out]


def cmd_report(args) -> list:
    rows = []
    for path in args.metrics:
        _require_file(path, "metrics")
        with open(path) as fh:
            payload = json.load(fh)
        rep = metrics.MetricReport.from_json(payload)
        rows.append({
            "model": rep.metadata.get("label") or os.path.basename(path),
            "mae": rep.overall_mae,
            "day_aggregated_mae": rep.day_aggregated_mae,
            "cosine_population": rep.cosine_population,
            "cosine_change": rep.cosine_change,
        })
    header = f"{'Model':<28} {'MAE':>8} {'Day-agg MAE':>12} {'Cos(pop)':>10} {'Cos(change)':>12}"
    print(header)
    print("-" * len(header))
    for r in rows:
        change = "-" if r["cosine_change"] is None else f"{r['cosine_change']:.3f}"
        print(f"{r['model']:<28} {r['mae']:>8.3f} {r['day_aggregated_mae']:>12.1f} "
              f"{r['cosine_population']:>10.3f} {change:>12}")
    with open(_ensure_parent(args.out), "w") as fh:
        json.dump({"rows": rows}, fh, indent=1)
    return [args.out]


def cmd_serve(args) -> list:
    from .server import serve_forever

    cfg = _load_config(args)
    port = args.port
    if port is None:
        port = int(os.environ.get("FLOWTWIN_PORT", cfg["serve"]["port"]))
    serve_forever(cfg, port=port)
    return []


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flowtwin",
                                description="pedestrian digital twin pipeline")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("init-demo", help="write the bundled synthetic project")
    d.add_argument("--out-dir", required=True)
    d.add_argument("--seed", type=int, default=11)
    d.add_argument("--samples", type=int, default=5000)
    d.set_defaults(func=cmd_init_demo, needs_manifest=False)

    f = sub.add_parser("fit-prior", help="fit per-pair departure mixtures")
    f.add_argument("--config")
    f.add_argument("--od-samples")
    f.add_argument("--out", required=True)
    f.add_argument("--seed", type=int, required=True)
    f.set_defaults(func=cmd_fit_prior, inputs=lambda a: [a.config, a.od_samples])

    r = sub.add_parser("reconstruct", help="sample, calibrate, and emit departures")
    r.add_argument("--config")
    r.add_argument("--network")
    r.add_argument("--od-samples")
    r.add_argument("--counts")
    r.add_argument("--priors", required=True)
    r.add_argument("--out-dir")
    r.add_argument("--seed", type=int, required=True)
    r.set_defaults(func=cmd_reconstruct,
                   inputs=lambda a: [a.config, a.network, a.od_samples, a.counts, a.priors])

    s = sub.add_parser("simulate", help="run the social-force microsimulation")
    s.add_argument("--config")
    s.add_argument("--network")
    s.add_argument("--departures", required=True)
    s.add_argument("--model")
    s.add_argument("--direct-trips", action="store_true",
                   help="replay departures as single origin->destination trips")
    s.add_argument("--scenario", help="intervention JSON; omitted = baseline")
    s.add_argument("--decision-mode", choices=["deterministic", "probabilistic"])
    s.add_argument("--out-dir")
    s.add_argument("--seed", type=int, required=True)
    s.set_defaults(func=cmd_simulate,
                   inputs=lambda a: [a.config, a.network, a.departures, a.model, a.scenario])

    b = sub.add_parser("build-trainset", help="extract decision records from trajectories")
    b.add_argument("--config")
    b.add_argument("--network")
    b.add_argument("--trajectories", required=True)
    b.add_argument("--events", required=True)
    b.add_argument("--exit-policy", choices=["exit_class", "stamina"], default="exit_class")
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_build_trainset, needs_seed=False,
                   inputs=lambda a: [a.config, a.network, a.trajectories, a.events])

    t = sub.add_parser("train", help="train a destination-choice model")
    t.add_argument("--config")
    t.add_argument("--trainset", required=True)
    t.add_argument("--head", choices=["plain", "mos"], default="plain")
    t.add_argument("--exit-policy", choices=["exit_class", "stamina"])
    t.add_argument("--epochs", type=int)
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int, required=True)
    t.set_defaults(func=cmd_train, inputs=lambda a: [a.config, a.trainset])

    e = sub.add_parser("evaluate", help="compare two population series")
    e.add_argument("--pred", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--pred-base")
    e.add_argument("--truth-base")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate, needs_seed=False,
                   inputs=lambda a: [a.pred, a.truth, a.pred_base, a.truth_base])

    g = sub.add_parser("report", help="join metric files into a summary table")
    g.add_argument("--metrics", nargs="+", required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_report, needs_seed=False, inputs=lambda a: list(a.metrics))

    v = sub.add_parser("serve", help="HTTP API for the scenario explorer")
    v.add_argument("--config")
    v.add_argument("--port", type=int)
    v.set_defaults(func=cmd_serve, needs_manifest=False)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    manifest = None
    try:
        if getattr(args, "needs_manifest", True) and hasattr(args, "inputs"):
            manifest = RunManifest.start(args.command, args.inputs(args),
                                         seed=getattr(args, "seed", None))
        outputs = args.func(args)
        if manifest is not None and outputs:
            manifest.finish(outputs, status="done")
            manifest_path = os.path.join(os.path.dirname(outputs[0]) or ".",
                                         f"manifest_{manifest.run_id}.json")
            manifest.save(manifest_path)
        return EXIT_OK
    except ValidationError as exc:
        print(json.dumps(exc.to_dict()), file=sys.stderr)
        return EXIT_VALIDATION
    except FlowTwinError as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
