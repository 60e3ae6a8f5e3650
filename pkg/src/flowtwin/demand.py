"""Offline demand reconstruction: OD aggregation, sampling, calibration, events.

Slots are 0-based: slot t covers [t*slot_s, (t+1)*slot_s).  Speed bins are
right-open intervals over [0, inf); the lowest bin absorbs zero implied
speed (same-area trips have zero network distance).  Calibration follows
the slot-wise scale rule exactly, including the floor, using integer
arithmetic so floor(r_t * D) never suffers float boundary error.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NoPathError, ValidationError
from .gmm import DeparturePriors
from .seeding import substream

SECONDS_PER_DAY = 86400.0
DEFAULT_SLOT_S = 600.0
DEFAULT_SPEED_BOUNDARIES = (0.8, 1.2, 1.6)
MAX_RESAMPLE_RETRIES = 100

# Sampled per-agent walking speeds are clamped away from zero, and the open
# top bin is sampled over one extra boundary width; both stay inside the bin.
MIN_EVENT_SPEED = 0.3
TOP_BIN_WIDTH = 0.4


@dataclass(frozen=True)
class SpeedBins:
    """Right-open speed categories [b_{i-1}, b_i) covering [0, inf)."""

    boundaries: tuple = DEFAULT_SPEED_BOUNDARIES

    def __post_init__(self):
        b = tuple(float(x) for x in self.boundaries)
        if any(b2 <= b1 for b1, b2 in zip(b, b[1:])) or (b and b[0] <= 0):
            raise ValidationError("speed boundaries must be positive and increasing",
                                  path="speed_bin_boundaries")
        object.__setattr__(self, "boundaries", b)

    @property
    def n_bins(self) -> int:
        return len(self.boundaries) + 1

    def bin_of(self, speed: float) -> int:
        if speed < 0 or not math.isfinite(speed):
            raise ValidationError(f"speed {speed} cannot be binned", path="speed")
        for i, b in enumerate(self.boundaries):
            if speed < b:
                return i
        return len(self.boundaries)

    def bin_range(self, idx: int) -> tuple:
        lo = 0.0 if idx == 0 else self.boundaries[idx - 1]
        hi = self.boundaries[idx] if idx < len(self.boundaries) else math.inf
        return lo, hi

    def sample_speed(self, idx: int, rng: np.random.Generator) -> float:
        lo, hi = self.bin_range(idx)
        lo_eff = max(lo, MIN_EVENT_SPEED)
        hi_eff = hi if math.isfinite(hi) else lo + TOP_BIN_WIDTH
        if hi_eff <= lo_eff:
            lo_eff, hi_eff = lo, hi if math.isfinite(hi) else lo + TOP_BIN_WIDTH
        return float(rng.uniform(lo_eff, hi_eff))


@dataclass(frozen=True)
class ODSample:
    origin: str
    destination: str
    depart_s: float       # seconds of day
    duration_min: float   # travel duration, minutes


@dataclass(frozen=True)
class SpotCountSeries:
    slot_s: float
    counts: dict          # (area id, slot index) -> int

    def observed_areas(self) -> list:
        return sorted({a for a, _ in self.counts})

    def slot_total(self, t: int) -> int:
        return sum(c for (a, tt), c in self.counts.items() if tt == t)

    def slots(self) -> list:
        return sorted({t for _, t in self.counts})


@dataclass
class ODTensor:
    """Counts X[(origin, destination, slot, speed bin)] plus rejection tally."""

    slot_s: float
    bins: SpeedBins
    counts: dict = field(default_factory=dict)
    rejected: int = 0

    def total(self) -> int:
        return sum(self.counts.values())


def slot_of(depart_s: float, slot_s: float) -> int:
    return int(depart_s // slot_s)


def aggregate_od(samples, slot_s: float, bins: SpeedBins, dist_fn) -> ODTensor:
    """Bucket raw OD samples into X[(m, n, t, v)].

    ``dist_fn(m, n)`` supplies the network path length used for the implied
    speed dist/(duration*60).  Out-of-range samples (bad time, nonpositive
    duration, unroutable pair) are dropped and tallied in ``rejected``.
    """
    tensor = ODTensor(slot_s=slot_s, bins=bins)
    for s in samples:
        if not (0.0 <= s.depart_s < SECONDS_PER_DAY) or s.duration_min <= 0:
            tensor.rejected += 1
            continue
        try:
            dist = dist_fn(s.origin, s.destination)
        except NoPathError:
            tensor.rejected += 1
            continue
        speed = dist / (s.duration_min * 60.0)
        key = (s.origin, s.destination, slot_of(s.depart_s, slot_s), bins.bin_of(speed))
        tensor.counts[key] = tensor.counts.get(key, 0) + 1
    return tensor


def od_totals(tensor: ODTensor) -> dict:
    """c[(m, n)]: transitions per ordered pair, the tensor marginalized over slot and speed."""
    out = {}
    for (m, n, _, _), c in tensor.counts.items():
        out[(m, n)] = out.get((m, n), 0) + c
    return out


@dataclass
class DemandScenario:
    """Departure counts D[(origin, destination, slot, speed bin)]."""

    slot_s: float
    bins: SpeedBins
    counts: dict = field(default_factory=dict)
    calibrated: bool = False
    flagged_pairs: tuple = ()

    def total(self) -> int:
        return sum(self.counts.values())

    def sorted_items(self):
        return sorted(self.counts.items())

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["origin", "destination", "slot", "v_bin", "count"])
            for (m, n, t, v), c in self.sorted_items():
                w.writerow([m, n, t, v, c])

    @classmethod
    def load_csv(cls, path, slot_s: float = DEFAULT_SLOT_S, bins: SpeedBins | None = None) -> "DemandScenario":
        bins = bins or SpeedBins()
        counts = {}
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                key = (row["origin"], row["destination"], int(row["slot"]), int(row["v_bin"]))
                counts[key] = counts.get(key, 0) + int(row["count"])
        return cls(slot_s=slot_s, bins=bins, counts=counts)


def sample_demand(priors: DeparturePriors, pair_totals: dict, slot_s: float,
                  bins: SpeedBins, dist_fn, seed: int) -> DemandScenario:
    """Draw the prior demand scenario: c[(m,n)] accepted trips per pair.

    Each pair's draws come from a stream derived from (seed, m, n), so the
    result is identical however pairs are scheduled.  Draws with
    nonpositive duration or an out-of-day departure are retried up to
    MAX_RESAMPLE_RETRIES times; a pair that exhausts retries is flagged and
    left short.
    """
    scenario = DemandScenario(slot_s=slot_s, bins=bins)
    flagged = []
    for (m, n) in sorted(pair_totals):
        c = int(pair_totals[(m, n)])
        if c <= 0:
            continue
        if (m, n) not in priors:
            raise ValidationError(f"no prior fitted for pair ({m}, {n})", path=f"priors.{m}.{n}")
        dist = dist_fn(m, n)  # NoPathError propagates: demand needs routable pairs
        rng = substream(seed, "demand", m, n)
        mixture = priors[(m, n)]
        accepted = 0
        while accepted < c:
            draw = None
            for _ in range(MAX_RESAMPLE_RETRIES):
                t_dep, dur_min = mixture.sample(1, rng)[0]
                if dur_min > 0 and 0.0 <= t_dep < SECONDS_PER_DAY:
                    draw = (t_dep, dur_min)
                    break
            if draw is None:
                flagged.append((m, n))
                break
            t_dep, dur_min = draw
            speed = dist / (dur_min * 60.0)
            key = (m, n, slot_of(t_dep, slot_s), bins.bin_of(speed))
            scenario.counts[key] = scenario.counts.get(key, 0) + 1
            accepted += 1
    scenario.flagged_pairs = tuple(flagged)
    return scenario


@dataclass
class CalibrationReport:
    slot_ratios: dict = field(default_factory=dict)        # slot -> r_t
    zero_denominator_slots: tuple = ()
    flagged: bool = False


def calibrate_scale(demand: DemandScenario, counts: SpotCountSeries,
                    contribution_map: dict) -> tuple:
    """Slot-wise absolute rescale of the prior demand against spot counts.

    For slot t, r_t = sum of observed counts / sum of prior departures whose
    origin-destination path passes an observed counter (an entry passing two
    counters is counted twice, per the sum over counters).  Every cell in
    the slot is scaled by floor(r_t * D).  Slots with observations but zero
    contributing demand are reported and left unscaled; slots with neither
    pass through unchanged.
    """
    slot_numerator = {}
    for (a, t), c in counts.counts.items():
        slot_numerator[t] = slot_numerator.get(t, 0) + int(c)
    slot_denominator = {}
    for a, pairs in contribution_map.items():
        for (m, n, t, v), c in demand.counts.items():
            if (m, n) in pairs:
                slot_denominator[t] = slot_denominator.get(t, 0) + c

    report = CalibrationReport()
    zero_denom = []
    out = {}
    slots = set(slot_numerator) | {t for (_, _, t, _) in demand.counts}
    for t in sorted(slots):
        num = slot_numerator.get(t, 0)
        den = slot_denominator.get(t, 0)
        if num > 0 and den == 0:
            zero_denom.append(t)
            report.slot_ratios[t] = None
        elif num == 0 and den == 0:
            report.slot_ratios[t] = 1.0  # nothing observed, nothing contributing
        else:
            report.slot_ratios[t] = num / den

    for (m, n, t, v), c in demand.counts.items():
        r = report.slot_ratios.get(t, 1.0)
        if r is None:
            out[(m, n, t, v)] = c  # observed but uncontributed: left unscaled
            continue
        num = slot_numerator.get(t, 0)
        den = slot_denominator.get(t, 0)
        if den > 0:
            scaled = (num * c) // den  # exact floor(r_t * D)
        else:
            scaled = c
        if scaled > 0:
            out[(m, n, t, v)] = int(scaled)

    report.zero_denominator_slots = tuple(zero_denom)
    report.flagged = bool(zero_denom)
    calibrated = DemandScenario(
        slot_s=demand.slot_s, bins=demand.bins, counts=out,
        calibrated=True, flagged_pairs=demand.flagged_pairs,
    )
    return calibrated, report


@dataclass(frozen=True)
class DepartureEvent:
    origin: str
    destination: str
    depart_s: float
    walk_speed: float  # m/s


def instantiate_departures(demand: DemandScenario, seed: int) -> list:
    """Expand calibrated counts into continuous-time departure events.

    Each cell (m, n, t, v) yields exactly its count of events with a
    uniform within-slot offset and a uniform speed inside bin v, drawn from
    a per-cell stream.  The output is sorted by departure time.
    """
    events = []
    for (m, n, t, v), c in demand.sorted_items():
        if c <= 0:
            continue
        rng = substream(seed, "events", m, n, t, v)
        lo = t * demand.slot_s
        for _ in range(int(c)):
            depart = float(rng.uniform(lo, lo + demand.slot_s))
            speed = demand.bins.sample_speed(v, rng)
            events.append(DepartureEvent(m, n, depart, speed))
    events.sort(key=lambda e: (e.depart_s, e.origin, e.destination, e.walk_speed))
    return events


# -- CSV formats -------------------------------------------------------

def load_counts_csv(path, slot_s: float = DEFAULT_SLOT_S) -> SpotCountSeries:
    counts = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            count = int(row["count"])
            if count < 0:
                raise ValidationError("counts must be >= 0", path=f"{path}:{row}")
            key = (row["area_id"], int(row["slot_index"]))
            counts[key] = counts.get(key, 0) + count
    return SpotCountSeries(slot_s=slot_s, counts=counts)


def save_counts_csv(series: SpotCountSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["area_id", "slot_index", "count"])
        for (a, t), c in sorted(series.counts.items()):
            w.writerow([a, t, c])


def load_od_samples_csv(path) -> list:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(ODSample(
                origin=row["origin"],
                destination=row["destination"],
                depart_s=float(row["depart_s"]),
                duration_min=float(row["duration_min"]),
            ))
    return out


def save_od_samples_csv(samples, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["origin", "destination", "depart_s", "duration_min"])
        for s in samples:
            w.writerow([s.origin, s.destination, repr(s.depart_s), repr(s.duration_min)])


def load_departures_csv(path) -> list:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(DepartureEvent(
                origin=row["origin"],
                destination=row["destination"],
                depart_s=float(row["depart_s"]),
                walk_speed=float(row["speed_mps"]),
            ))
    return out


def save_departures_csv(events, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["origin", "destination", "depart_s", "speed_mps"])
        for e in events:
            w.writerow([e.origin, e.destination, repr(e.depart_s), repr(e.walk_speed)])
