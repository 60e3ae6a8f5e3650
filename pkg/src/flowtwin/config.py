"""Project configuration: a JSON file validated against a published schema.

Unknown keys are rejected so typos fail loudly.  Defaults follow the
package-wide design choices (10-minute slots, 5 km/h walk, 20 km/h
mobility, dt = 0.05 s, 64x64 MLP trained 200 epochs at lr 0.01).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .choice import TrainingConfig
from .demand import SpeedBins
from .errors import ValidationError
from .microsim import SocialForceParams

# type spec: (expected type(s), default).  Nested dicts are sub-schemas.
CONFIG_SCHEMA = {
    "paths": {
        "network": (str, None),
        "od_samples": (str, None),
        "counts": (str, None),
        "out_dir": (str, "runs"),
        "model": (str, None),
        "departures": (str, None),
        "truth_population": (str, None),
        "baseline_population": (str, None),
    },
    "slot_seconds": ((int, float), 600.0),
    "speed_bin_boundaries": (list, [0.8, 1.2, 1.6]),
    "gmm_components": (int, 3),
    "walk_speed_kmh": ((int, float), 5.0),
    "mobility_speed_kmh": ((int, float), 20.0),
    "dt": ((int, float), 0.05),
    "sample_every": ((int, float), 1.0),
    "max_time": ((int, float), 86400.0),
    "social_force": {
        "inertia": ((int, float), 1.0),
        "tau_relax": ((int, float), 0.5),
        "a_ped": ((int, float), 2.0),
        "b_ped": ((int, float), 0.3),
        "r_sum": ((int, float), 0.4),
        "a_obs": ((int, float), 5.0),
        "b_obs": ((int, float), 0.2),
        "cutoff": ((int, float), 3.0),
    },
    "training": {
        "learning_rate": ((int, float), 0.01),
        "momentum": ((int, float), 0.9),
        "batch_size": (int, 64),
        "epochs": (int, 200),
        "hidden_sizes": (list, [64, 64]),
        "head": (str, "plain"),
        "n_mixtures": (int, 3),
        "exit_policy": (str, "exit_class"),
    },
    "serve": {
        "port": (int, 8765),
    },
}


def _validate_level(payload: dict, schema: dict, prefix: str = "") -> dict:
    if not isinstance(payload, dict):
        raise ValidationError(f"expected an object at {prefix or 'top level'}", path=prefix)
    out = {}
    for key in payload:
        if key not in schema:
            raise ValidationError(f"unknown config key {key!r}", path=f"{prefix}{key}")
    for key, spec in schema.items():
        path = f"{prefix}{key}"
        if isinstance(spec, dict):
            out[key] = _validate_level(payload.get(key, {}), spec, prefix=f"{path}.")
            continue
        expected, default = spec
        value = payload.get(key, default)
        if value is not None and not isinstance(value, expected):
            raise ValidationError(f"config key {key!r} has wrong type", path=path)
        if isinstance(value, bool) and expected is int:
            raise ValidationError(f"config key {key!r} has wrong type", path=path)
        out[key] = value
    return out


@dataclass
class ProjectConfig:
    data: dict = field(default_factory=dict)

    @classmethod
    def from_json(cls, payload: dict) -> "ProjectConfig":
        return cls(data=_validate_level(payload, CONFIG_SCHEMA))

    @classmethod
    def load(cls, path) -> "ProjectConfig":
        with open(path) as fh:
            try:
                payload = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"invalid JSON: {exc}", path=str(path)) from exc
        cfg = cls.from_json(payload)
        # relative path entries are anchored at the config file, so a project
        # directory works from any cwd
        base = os.path.dirname(os.path.abspath(path))
        for key, value in cfg.data["paths"].items():
            if value and not os.path.isabs(value):
                cfg.data["paths"][key] = os.path.join(base, value)
        return cfg

    @classmethod
    def defaults(cls) -> "ProjectConfig":
        return cls.from_json({})

    def __getitem__(self, key):
        return self.data[key]

    def path(self, name: str):
        return self.data["paths"].get(name)

    @property
    def slot_s(self) -> float:
        return float(self.data["slot_seconds"])

    def speed_bins(self) -> SpeedBins:
        return SpeedBins(tuple(self.data["speed_bin_boundaries"]))

    def social_force(self) -> SocialForceParams:
        return SocialForceParams(**self.data["social_force"])

    def training(self, **overrides) -> TrainingConfig:
        cfg = dict(self.data["training"])
        cfg["hidden_sizes"] = tuple(cfg["hidden_sizes"])
        cfg.update(overrides)
        return TrainingConfig(**cfg)
