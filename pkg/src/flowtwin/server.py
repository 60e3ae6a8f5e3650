"""Local HTTP service consumed by the scenario explorer.

A single worker thread executes queued runs FIFO, one at a time, so a
planner laptop never runs two simulations at once.  Run ids are digests of
(scenario id, seed): re-posting an identical request reuses the completed
artifacts, which is sound because runs are deterministic.  Completed run
artifacts are never mutated; concurrent GETs during an active run only see
the store under its lock.

Endpoints:
  GET  /network                   walk network as GeoJSON
  GET  /scenarios                 stored intervention specs
  POST /scenarios                 add a spec (422 with field errors if invalid)
  POST /runs {scenario_id, seed}  queue a counterfactual run
  GET  /runs/{id}                 status
  GET  /runs/{id}/population      per-area per-slot counts (409 while running)
  GET  /runs/{id}/metrics         MAE/cosine vs the configured truth series
  GET  /runs/{id}/diff?base={id}  variant minus base, cellwise
"""

from __future__ import annotations

import hashlib
import json
import mimetypes
import os
import queue
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from . import choice, demand, metrics, microsim
from .config import ProjectConfig
from .environment import InterventionSpec, apply_intervention, baseline_environment
from .errors import FlowTwinError, ValidationError
from .network import KMH, Network


class ExplorerServer:
    def __init__(self, cfg: ProjectConfig, port: int = 0, static_dir: str | None = None):
        self.cfg = cfg
        self.network = Network.load(cfg.path("network"))
        self.base_env = baseline_environment(self.network, walk_speed=cfg["walk_speed_kmh"] * KMH)
        self.model = None
        if cfg.path("model"):
            self.model = choice.ChoiceModelParams.load(cfg.path("model"))
        self.departures = []
        if cfg.path("departures"):
            self.departures = demand.load_departures_csv(cfg.path("departures"))
        self.truth = None
        if cfg.path("truth_population") and os.path.exists(cfg.path("truth_population")):
            self.truth = metrics.PopulationSeries.load_csv(cfg.path("truth_population"),
                                                           slot_s=cfg.slot_s)
        self.out_dir = cfg.path("out_dir") or "runs"
        os.makedirs(os.path.join(self.out_dir, "serve"), exist_ok=True)
        self.static_dir = os.path.abspath(static_dir) if static_dir else None
        self.lock = threading.Lock()
        self.scenarios: dict[str, dict] = {}
        self.runs: dict[str, dict] = {}
        self.queue: queue.Queue = queue.Queue()
        self.worker = threading.Thread(target=self._work, daemon=True)
        self._httpd = ThreadingHTTPServer(("127.0.0.1", port), _make_handler(self))
        self.port = self._httpd.server_address[1]
        # the identity scenario is always available as a baseline
        self.add_scenario(InterventionSpec(label="baseline").to_json())

    # -- scenario & run stores ------------------------------------------

    def add_scenario(self, payload: dict) -> str:
        spec = InterventionSpec.from_json(payload)
        sid = "s" + hashlib.sha256(
            json.dumps(spec.to_json(), sort_keys=True).encode()).hexdigest()[:10]
        with self.lock:
            self.scenarios[sid] = spec.to_json()
        return sid

    def submit_run(self, scenario_id: str, seed: int) -> str:
        with self.lock:
            if scenario_id not in self.scenarios:
                raise KeyError(scenario_id)
        rid = "r" + hashlib.sha256(f"{scenario_id}:{seed}".encode()).hexdigest()[:10]
        with self.lock:
            if rid in self.runs:
                return rid
            self.runs[rid] = {
                "run_id": rid, "scenario_id": scenario_id, "seed": int(seed),
                "status": "queued", "error": "",
                "dir": os.path.join(self.out_dir, "serve", rid),
            }
        self.queue.put(rid)
        return rid

    def _work(self) -> None:
        while True:
            rid = self.queue.get()
            if rid is None:
                return
            with self.lock:
                run = self.runs[rid]
                run["status"] = "running"
                spec_payload = self.scenarios[run["scenario_id"]]
                seed = run["seed"]
            try:
                if self.model is None:
                    raise ValidationError("no model configured for serve runs", path="paths.model")
                spec = InterventionSpec.from_json(spec_payload)
                env = apply_intervention(self.base_env, spec)
                _, series = microsim.run_simulation(
                    env, self.departures, microsim.ModelPolicy(self.model),
                    sf_params=self.cfg.social_force(), dt=self.cfg["dt"], seed=seed,
                    slot_s=self.cfg.slot_s, max_time=self.cfg["max_time"],
                    sample_every=self.cfg["sample_every"],
                )
                os.makedirs(run["dir"], exist_ok=True)
                series.save_csv(os.path.join(run["dir"], "population.csv"))
                with self.lock:
                    run["status"] = "done"
            except Exception as exc:  # failures land in the run status
                with self.lock:
                    run["status"] = "failed"
                    run["error"] = str(exc)

    def run_population(self, rid: str) -> metrics.PopulationSeries:
        return metrics.PopulationSeries.load_csv(
            os.path.join(self.runs[rid]["dir"], "population.csv"), slot_s=self.cfg.slot_s)

    # -- lifecycle --------------------------------------------------------

    def start(self) -> int:
        self.worker.start()
        self._serve_thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._serve_thread.start()
        return self.port

    def shutdown(self) -> None:
        self.queue.put(None)
        self._httpd.shutdown()
        self._httpd.server_close()


def _make_handler(srv: ExplorerServer):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):
            pass

        def _send(self, code: int, payload, content_type="application/json"):
            body = payload if isinstance(payload, bytes) else json.dumps(payload).encode()
            self.send_response(code)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(body)

        def _read_json(self):
            length = int(self.headers.get("Content-Length") or 0)
            raw = self.rfile.read(length) if length else b""
            try:
                return json.loads(raw or b"{}")
            except json.JSONDecodeError as exc:
                raise ValidationError(f"invalid JSON body: {exc}", path="body") from exc

        def do_OPTIONS(self):
            self.send_response(204)
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.end_headers()

        def do_GET(self):
            url = urlparse(self.path)
            parts = [p for p in url.path.split("/") if p]
            try:
                if url.path == "/network":
                    self._send(200, srv.network.to_geojson())
                elif url.path == "/scenarios":
                    with srv.lock:
                        items = [{"id": sid, "spec": spec}
                                 for sid, spec in sorted(srv.scenarios.items())]
                    self._send(200, {"scenarios": items})
                elif parts and parts[0] == "runs":
                    self._get_runs(parts, url)
                elif srv.static_dir:
                    self._static(url.path)
                else:
                    self._send(404, {"error": "not found", "path": url.path})
            except BrokenPipeError:
                pass

        def _get_runs(self, parts, url):
            if len(parts) == 1:
                with srv.lock:
                    items = [{k: v for k, v in run.items() if k != "dir"}
                             for _, run in sorted(srv.runs.items())]
                self._send(200, {"runs": items})
                return
            rid = parts[1]
            with srv.lock:
                run = srv.runs.get(rid)
                status = run and run["status"]
            if run is None:
                self._send(404, {"error": f"unknown run {rid}"})
                return
            if len(parts) == 2:
                self._send(200, {k: v for k, v in run.items() if k != "dir"})
                return
            leaf = parts[2]
            if status != "done":
                code = 409 if status in ("queued", "running") else 500
                self._send(code, {"error": f"run {rid} is {status}", "status": status,
                                  **({"detail": run["error"]} if run.get("error") else {})})
                return
            if leaf == "population":
                self._send(200, srv.run_population(rid).to_json())
            elif leaf == "metrics":
                if srv.truth is None:
                    self._send(404, {"error": "no truth population series configured"})
                    return
                series = srv.run_population(rid)
                report = metrics.evaluate(series, srv.truth,
                                          metadata={"run_id": rid, "label": rid})
                self._send(200, report.to_json())
            elif leaf == "diff":
                params = parse_qs(url.query)
                base_id = (params.get("base") or [None])[0]
                if not base_id:
                    self._send(422, {"errors": [{"path": "base", "message": "base run id required"}]})
                    return
                with srv.lock:
                    base = srv.runs.get(base_id)
                if base is None:
                    self._send(404, {"error": f"unknown run {base_id}"})
                    return
                if base["status"] != "done":
                    self._send(409, {"error": f"run {base_id} is {base['status']}"})
                    return
                variant = srv.run_population(rid)
                base_series = srv.run_population(base_id)
                diff = variant.values.astype(int) - base_series.values.astype(int)
                self._send(200, {"slot_seconds": variant.slot_s, "areas": list(variant.areas),
                                 "values": diff.tolist(), "base": base_id, "variant": rid})
            else:
                self._send(404, {"error": f"unknown endpoint {leaf}"})

        def _static(self, path: str):
            rel = path.lstrip("/") or "index.html"
            full = os.path.normpath(os.path.join(srv.static_dir, rel))
            if not full.startswith(os.path.abspath(srv.static_dir) + os.sep) and \
               full != os.path.abspath(srv.static_dir):
                self._send(404, {"error": "not found"})
                return
            if os.path.isdir(full):
                full = os.path.join(full, "index.html")
            if not os.path.exists(full):
                self._send(404, {"error": "not found", "path": path})
                return
            ctype = mimetypes.guess_type(full)[0] or "application/octet-stream"
            with open(full, "rb") as fh:
                self._send(200, fh.read(), content_type=ctype)

        def do_POST(self):
            url = urlparse(self.path)
            try:
                payload = self._read_json()
                if url.path == "/scenarios":
                    sid = srv.add_scenario(payload)
                    self._send(200, {"id": sid})
                elif url.path == "/runs":
                    if "scenario_id" not in payload or "seed" not in payload:
                        self._send(422, {"errors": [
                            {"path": k, "message": "required"}
                            for k in ("scenario_id", "seed") if k not in payload]})
                        return
                    try:
                        rid = srv.submit_run(str(payload["scenario_id"]), int(payload["seed"]))
                    except KeyError:
                        self._send(404, {"error": f"unknown scenario {payload['scenario_id']}"})
                        return
                    self._send(200, {"run_id": rid})
                else:
                    self._send(404, {"error": "not found", "path": url.path})
            except ValidationError as exc:
                self._send(422, {"errors": [{"path": exc.path, "message": str(exc)}]})
            except FlowTwinError as exc:
                self._send(422, {"errors": [{"path": "", "message": str(exc)}]})
            except BrokenPipeError:
                pass

    return Handler


def serve_forever(cfg: ProjectConfig, port: int = 8765, static_dir: str | None = None) -> None:
    candidate = static_dir or os.environ.get("FLOWTWIN_STATIC") or os.path.join("frontend", "dist")
    if candidate and not os.path.isdir(candidate):
        candidate = None
    srv = ExplorerServer(cfg, port=port, static_dir=candidate)
    actual = srv.start()
    print(f"flowtwin explorer API on http://127.0.0.1:{actual}")
    try:
        srv._serve_thread.join()
    except KeyboardInterrupt:
        srv.shutdown()
