from __future__ import annotations

import json
import os
import time
import urllib.error
import urllib.request

import numpy as np
import pytest

from flowtwin.config import ProjectConfig
from flowtwin.server import ExplorerServer

from test_cli import run_pipeline, write_tiny_project


@pytest.fixture(scope="module")
def live_server(tmp_path_factory):
    root = tmp_path_factory.mktemp("serveproj")
    tiny = write_tiny_project(root)
    arts = run_pipeline(tiny, seed=5)
    # the model-driven baseline population doubles as the truth series
    from flowtwin.cli import main
    base_dir = os.path.join(str(root), "baserun")
    assert main(["simulate", "--config", tiny["config"], "--departures", arts["departures"],
                 "--model", arts["model"], "--out-dir", base_dir, "--seed", "5"]) == 0
    cfg_payload = json.load(open(tiny["config"]))
    cfg_payload["paths"]["model"] = arts["model"]
    cfg_payload["paths"]["departures"] = arts["departures"]
    cfg_payload["paths"]["truth_population"] = os.path.join(base_dir, "population.csv")
    cfg = ProjectConfig.from_json(cfg_payload)
    srv = ExplorerServer(cfg, port=0)
    srv.start()
    yield srv
    srv.shutdown()


def _get(srv, path, expect=200):
    try:
        with urllib.request.urlopen(f"http://127.0.0.1:{srv.port}{path}") as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as err:
        assert err.code == expect, f"{path}: {err.code}"
        return err.code, json.loads(err.read())


def _post(srv, path, payload, expect=200):
    req = urllib.request.Request(
        f"http://127.0.0.1:{srv.port}{path}",
        data=json.dumps(payload).encode(), headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req) as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as err:
        assert err.code == expect, f"{path}: {err.code}"
        return err.code, json.loads(err.read())


def _wait_done(srv, run_id, timeout=60.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        _, run = _get(srv, f"/runs/{run_id}")
        if run["status"] in ("done", "failed"):
            return run
        time.sleep(0.2)
    raise TimeoutError(run_id)


class TestEndpoints:
    def test_network_geojson(self, live_server):
        status, gj = _get(live_server, "/network")
        assert status == 200
        assert gj["type"] == "FeatureCollection"
        kinds = {f["properties"]["kind"] for f in gj["features"]}
        assert {"area", "poi", "edge"} <= kinds

    def test_scenario_round_trip(self, live_server):
        spec = {"label": "rt", "walk_speed_kmh": 5.0, "mobility_speed_kmh": 20.0,
                "mobility_links": [{"from": "A", "to": "C"}],
                "attraction_overrides": {"B": 0.5}}
        _, created = _post(live_server, "/scenarios", spec)
        sid = created["id"]
        _, listing = _get(live_server, "/scenarios")
        stored = {s["id"]: s["spec"] for s in listing["scenarios"]}[sid]
        for key, value in spec.items():
            if key == "mobility_links":
                assert [{"from": l["from"], "to": l["to"]} for l in stored[key]] == value
            else:
                assert stored[key] == value

    def test_invalid_scenario_422_with_field_errors(self, live_server):
        status, body = _post(live_server, "/scenarios",
                             {"walk_speed_kmh": -3}, expect=422)
        assert status == 422
        assert body["errors"][0]["path"] == "walk_speed_kmh"

    def test_unknown_run_404(self, live_server):
        status, _ = _get(live_server, "/runs/rdoesnotexist", expect=404)
        assert status == 404

    def test_unknown_scenario_404(self, live_server):
        status, _ = _post(live_server, "/runs", {"scenario_id": "nope", "seed": 1}, expect=404)
        assert status == 404

    def test_run_missing_fields_422(self, live_server):
        status, body = _post(live_server, "/runs", {}, expect=422)
        assert status == 422
        assert {e["path"] for e in body["errors"]} == {"scenario_id", "seed"}

    def test_in_progress_gives_409(self, live_server):
        with live_server.lock:
            live_server.runs["rfake"] = {"run_id": "rfake", "scenario_id": "x",
                                         "seed": 0, "status": "running", "error": "",
                                         "dir": "/nonexistent"}
        status, _ = _get(live_server, "/runs/rfake/population", expect=409)
        assert status == 409
        with live_server.lock:
            del live_server.runs["rfake"]

    def test_full_round_trip_and_diff(self, live_server):
        _, listing = _get(live_server, "/scenarios")
        baseline_id = next(s["id"] for s in listing["scenarios"]
                           if s["spec"]["label"] == "baseline")
        _, spec_created = _post(live_server, "/scenarios", {
            "label": "mob", "mobility_speed_kmh": 20.0,
            "mobility_links": [{"from": "A", "to": "C"}],
        })
        _, base_run = _post(live_server, "/runs", {"scenario_id": baseline_id, "seed": 5})
        _, mob_run = _post(live_server, "/runs", {"scenario_id": spec_created["id"], "seed": 5})
        base = _wait_done(live_server, base_run["run_id"])
        mob = _wait_done(live_server, mob_run["run_id"])
        assert base["status"] == "done" and mob["status"] == "done"

        _, pop = _get(live_server, f"/runs/{base['run_id']}/population")
        assert set(pop) >= {"slot_seconds", "areas", "values"}
        values = np.asarray(pop["values"])
        assert values.shape[0] == len(pop["areas"])
        assert values.sum() > 0

        # diff against itself is identically zero
        _, self_diff = _get(live_server,
                            f"/runs/{base['run_id']}/diff?base={base['run_id']}")
        assert not np.any(np.asarray(self_diff["values"]))

        _, diff = _get(live_server, f"/runs/{mob['run_id']}/diff?base={base['run_id']}")
        assert np.asarray(diff["values"]).shape == values.shape

        _, metrics = _get(live_server, f"/runs/{base['run_id']}/metrics")
        assert metrics["overall_mae"] == 0.0  # truth series is this very run
        assert metrics["cosine_population"] == pytest.approx(1.0)

    def test_identical_submission_reuses_run(self, live_server):
        _, listing = _get(live_server, "/scenarios")
        sid = next(s["id"] for s in listing["scenarios"]
                   if s["spec"]["label"] == "baseline")
        _, a = _post(live_server, "/runs", {"scenario_id": sid, "seed": 5})
        _, b = _post(live_server, "/runs", {"scenario_id": sid, "seed": 5})
        assert a["run_id"] == b["run_id"]

    def test_diff_requires_base_param(self, live_server):
        _, listing = _get(live_server, "/scenarios")
        sid = next(s["id"] for s in listing["scenarios"]
                   if s["spec"]["label"] == "baseline")
        _, run = _post(live_server, "/runs", {"scenario_id": sid, "seed": 5})
        _wait_done(live_server, run["run_id"])
        status, body = _get(live_server, f"/runs/{run['run_id']}/diff", expect=422)
        assert status == 422
        assert body["errors"][0]["path"] == "base"
