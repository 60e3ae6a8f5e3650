"""Evaluation metrics over per-area, per-slot population series.

Occupancy is presence-sampled: the count for (area, slot) is the number of
distinct agents whose recorded position at the slot's end instant falls
inside the area polygon.  MAE is reported per area, overall (mean over all
cells), and day-aggregated (sum over all cells).  Cosine similarity is
taken over the flattened area x slot matrix; the change variant compares
(with-intervention - baseline) difference vectors.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .choice import dataset_loss, records_to_arrays
from .errors import DimensionMismatchError, ZeroVectorError
from .seeding import substream


@dataclass
class PopulationSeries:
    slot_s: float
    areas: tuple
    values: np.ndarray      # (n_areas, n_slots) of counts

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape[0] != len(self.areas):
            raise DimensionMismatchError("area axis does not match area list")

    @property
    def n_slots(self) -> int:
        return self.values.shape[1]

    def flatten(self) -> np.ndarray:
        return self.values.astype(float).ravel()

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["area_id", "slot_index", "count"])
            for i, a in enumerate(self.areas):
                for t in range(self.n_slots):
                    w.writerow([a, t, int(self.values[i, t])])

    @classmethod
    def load_csv(cls, path, slot_s: float = 600.0) -> "PopulationSeries":
        cells = {}
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                cells[(row["area_id"], int(row["slot_index"]))] = int(row["count"])
        areas = tuple(sorted({a for a, _ in cells}))
        n_slots = max(t for _, t in cells) + 1 if cells else 0
        values = np.zeros((len(areas), n_slots), dtype=int)
        for (a, t), c in cells.items():
            values[areas.index(a), t] = c
        return cls(slot_s=slot_s, areas=areas, values=values)

    def to_json(self) -> dict:
        return {"slot_seconds": self.slot_s, "areas": list(self.areas),
                "values": self.values.astype(int).tolist()}

    @classmethod
    def from_json(cls, payload: dict) -> "PopulationSeries":
        return cls(slot_s=float(payload["slot_seconds"]),
                   areas=tuple(payload["areas"]),
                   values=np.asarray(payload["values"], dtype=int))


def population_series(trajectories, network, slot_s: float, n_slots: int) -> PopulationSeries:
    """Count agents per area at each slot-end instant from sampled trajectories."""
    areas = tuple(network.area_ids)
    index = {a: i for i, a in enumerate(areas)}
    values = np.zeros((len(areas), n_slots), dtype=int)
    for rec in trajectories:
        for t, x, y, _, _ in rec.samples:
            ratio = t / slot_s
            slot = int(round(ratio)) - 1
            if abs(ratio - round(ratio)) > 1e-9 or not (0 <= slot < n_slots):
                continue
            area = network.area_of_point(x, y)
            if area is not None:
                values[index[area], slot] += 1
    return PopulationSeries(slot_s=slot_s, areas=areas, values=values)


def mae(pred: PopulationSeries, truth: PopulationSeries):
    """(per-area dict, overall mean, day-aggregated sum) of absolute errors."""
    if pred.values.shape != truth.values.shape or pred.areas != truth.areas:
        raise DimensionMismatchError(
            f"series shapes differ: {pred.values.shape} vs {truth.values.shape}")
    err = np.abs(pred.values.astype(float) - truth.values.astype(float))
    per_area = {a: float(err[i].mean()) for i, a in enumerate(pred.areas)}
    return per_area, float(err.mean()), float(err.sum())


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise DimensionMismatchError(f"lengths differ: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ZeroVectorError("cosine undefined for a zero vector")
    return float(np.dot(a, b) / (na * nb))


def change_cosine(pred, pred_base, truth, truth_base) -> float:
    """Cosine of the two (variant - baseline) difference vectors."""
    dp = np.asarray(pred, dtype=float).ravel() - np.asarray(pred_base, dtype=float).ravel()
    dt = np.asarray(truth, dtype=float).ravel() - np.asarray(truth_base, dtype=float).ravel()
    return cosine(dp, dt)


@dataclass
class MetricReport:
    per_area_mae: dict
    overall_mae: float
    day_aggregated_mae: float
    cosine_population: float
    cosine_change: float | None = None
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "per_area_mae": self.per_area_mae,
            "overall_mae": self.overall_mae,
            "day_aggregated_mae": self.day_aggregated_mae,
            "cosine_population": self.cosine_population,
            "cosine_change": self.cosine_change,
            "metadata": self.metadata,
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)

    @classmethod
    def from_json(cls, payload: dict) -> "MetricReport":
        return cls(
            per_area_mae=dict(payload["per_area_mae"]),
            overall_mae=float(payload["overall_mae"]),
            day_aggregated_mae=float(payload["day_aggregated_mae"]),
            cosine_population=float(payload["cosine_population"]),
            cosine_change=(None if payload.get("cosine_change") is None
                           else float(payload["cosine_change"])),
            metadata=dict(payload.get("metadata", {})),
        )


def evaluate(pred: PopulationSeries, truth: PopulationSeries,
             pred_base: PopulationSeries | None = None,
             truth_base: PopulationSeries | None = None,
             metadata: dict | None = None) -> MetricReport:
    per_area, overall, day_agg = mae(pred, truth)
    cos_change = None
    if pred_base is not None and truth_base is not None:
        cos_change = change_cosine(pred.flatten(), pred_base.flatten(),
                                   truth.flatten(), truth_base.flatten())
    return MetricReport(
        per_area_mae=per_area, overall_mae=overall, day_aggregated_mae=day_agg,
        cosine_population=cosine(pred.flatten(), truth.flatten()),
        cosine_change=cos_change, metadata=metadata or {},
    )


def grouped_ablation_importance(params, dataset, groups: dict | None = None,
                                n_permutations: int = 50, seed: int = 0) -> dict:
    """Permutation importance per feature group.

    Importance of a group is the mean increase in cross-entropy when that
    group's columns are shuffled jointly across the dataset (one shared row
    permutation per repetition).
    """
    groups = groups or params.layout.group_slices()
    lengths = sorted(int(i) for idx in groups.values() for i in np.asarray(idx).ravel())
    if lengths != list(range(params.layout.length)):
        raise DimensionMismatchError("groups must partition the feature layout")
    F, y, w = records_to_arrays(dataset, params.candidates)
    base = dataset_loss(params, F, y, w)
    rng = substream(seed, "ablation")
    out = {}
    for name in sorted(groups):
        cols = np.asarray(groups[name], dtype=int)
        deltas = []
        for _ in range(n_permutations):
            perm = rng.permutation(len(F))
            Fp = F.copy()
            Fp[:, cols] = F[perm][:, cols]
            deltas.append(dataset_loss(params, Fp, y, w) - base)
        out[name] = float(np.mean(deltas))
    return out
