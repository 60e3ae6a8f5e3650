from __future__ import annotations

import json
import os

import pytest

from flowtwin.config import CONFIG_SCHEMA, ProjectConfig
from flowtwin.errors import ValidationError


class TestSchema:
    def test_defaults(self):
        cfg = ProjectConfig.defaults()
        assert cfg.slot_s == 600.0
        assert cfg["walk_speed_kmh"] == 5.0
        assert cfg["training"]["epochs"] == 200
        assert cfg.speed_bins().boundaries == (0.8, 1.2, 1.6)
        assert cfg.social_force().tau_relax == 0.5

    def test_unknown_key_rejected(self):
        with pytest.raises(ValidationError) as err:
            ProjectConfig.from_json({"definitely_not_a_key": 1})
        assert err.value.path == "definitely_not_a_key"

    def test_nested_unknown_key_rejected(self):
        with pytest.raises(ValidationError) as err:
            ProjectConfig.from_json({"training": {"lr": 0.1}})
        assert err.value.path == "training.lr"

    def test_wrong_type_rejected(self):
        with pytest.raises(ValidationError) as err:
            ProjectConfig.from_json({"gmm_components": "three"})
        assert err.value.path == "gmm_components"

    def test_training_overrides(self):
        cfg = ProjectConfig.from_json({"training": {"epochs": 7, "head": "mos"}})
        hyper = cfg.training(exit_policy="stamina")
        assert hyper.epochs == 7 and hyper.head == "mos"
        assert hyper.exit_policy == "stamina"

    def test_schema_is_published(self):
        assert "slot_seconds" in CONFIG_SCHEMA
        assert "social_force" in CONFIG_SCHEMA


class TestPathAnchoring:
    def test_relative_paths_anchor_at_config_file(self, tmp_path):
        proj = tmp_path / "proj"
        proj.mkdir()
        cfg_path = proj / "config.json"
        cfg_path.write_text(json.dumps({
            "paths": {"network": "network.json", "out_dir": "runs",
                      "model": os.path.join("runs", "model.json")},
        }))
        cwd = os.getcwd()
        os.chdir(tmp_path)  # deliberately not the project directory
        try:
            cfg = ProjectConfig.load(cfg_path)
        finally:
            os.chdir(cwd)
        assert cfg.path("network") == str(proj / "network.json")
        assert cfg.path("out_dir") == str(proj / "runs")
        assert cfg.path("model") == str(proj / "runs" / "model.json")

    def test_absolute_paths_untouched(self, tmp_path):
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps({"paths": {"network": "/abs/network.json"}}))
        cfg = ProjectConfig.load(cfg_path)
        assert cfg.path("network") == "/abs/network.json"

    def test_invalid_json_reports_file(self, tmp_path):
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text("{nope")
        with pytest.raises(ValidationError):
            ProjectConfig.load(cfg_path)
