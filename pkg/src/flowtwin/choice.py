"""Destination-choice models: feature encoding, MLP heads, training, selection.

The decision model maps an agent's state (current PoI, visited PoIs,
cumulative distance) and the environment (time of day, effective travel
times, attraction table) to a distribution over candidate next
destinations.  Two output heads are implemented: a plain softmax and a
mixture-of-softmaxes (MoS) whose gate blends several component softmaxes.
Exit behavior is either an explicit candidate class or a per-agent stamina
budget in metres.

Everything is float64 numpy, trained from scratch with minibatch SGD plus
momentum; gradients are exact (checked against central finite differences
in the test suite).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .demand import SECONDS_PER_DAY
from .errors import (
    DimensionMismatchError,
    EmptyDatasetError,
    LabelOutOfRangeError,
    ValidationError,
)
from .seeding import substream

EXIT = "EXIT"

TRAVEL_TIME_NORM_S = 1800.0
CUMDIST_NORM_M = 5000.0
FEATURE_CLAMP = 2.0

DEFAULT_STAMINA_MU_LOG = float(np.log(3000.0))
DEFAULT_STAMINA_SIGMA_LOG = 0.4


# -- feature encoding ----------------------------------------------------

@dataclass(frozen=True)
class FeatureLayout:
    """Fixed feature vector layout over an ordered PoI universe.

    Order: current-PoI one-hot, visited indicators, time-of-day (sin, cos),
    normalized cumulative distance, normalized effective travel times from
    the current PoI, candidate attractions.  Length is 4 * n_pois + 3.
    """

    poi_ids: tuple

    @property
    def n_pois(self) -> int:
        return len(self.poi_ids)

    @property
    def length(self) -> int:
        return 4 * self.n_pois + 3

    def poi_index(self, pid: str) -> int:
        try:
            return self.poi_ids.index(pid)
        except ValueError:
            raise LabelOutOfRangeError(f"unknown PoI {pid}") from None

    def group_slices(self) -> dict:
        p = self.n_pois
        return {
            "current_poi": np.arange(0, p),
            "visited_poi": np.arange(p, 2 * p),
            "time_of_day": np.arange(2 * p, 2 * p + 2),
            "total_travel_distance": np.arange(2 * p + 2, 2 * p + 3),
            "distance_between_pois": np.arange(2 * p + 3, 3 * p + 3),
            "attraction": np.arange(3 * p + 3, 4 * p + 3),
        }

    def encode(self, current_poi: str, visited, cumulative_distance: float,
               now_s: float, env) -> np.ndarray:
        p = self.n_pois
        f = np.zeros(self.length)
        f[self.poi_index(current_poi)] = 1.0
        for pid in visited:
            f[p + self.poi_index(pid)] = 1.0
        angle = 2.0 * np.pi * (now_s / SECONDS_PER_DAY)
        f[2 * p] = np.sin(angle)
        f[2 * p + 1] = np.cos(angle)
        f[2 * p + 2] = min(max(cumulative_distance / CUMDIST_NORM_M, 0.0), FEATURE_CLAMP)
        row = env.travel_time_row(current_poi)
        for j, pid in enumerate(self.poi_ids):
            f[2 * p + 3 + j] = min(max(row[pid] / TRAVEL_TIME_NORM_S, 0.0), FEATURE_CLAMP)
            f[3 * p + 3 + j] = env.attraction_of(pid)
        return f


@dataclass(frozen=True)
class DecisionState:
    """The slice of agent state the model reads at a decision epoch."""

    current_poi: str
    visited: frozenset = frozenset()
    cumulative_distance: float = 0.0


def encode_features(agent, env, now_s: float,
                    layout: FeatureLayout | None = None) -> np.ndarray:
    """Feature vector for any agent exposing current_poi / visited / cumulative_distance."""
    layout = layout or FeatureLayout(tuple(env.network.poi_ids))
    return layout.encode(agent.current_poi, agent.visited, agent.cumulative_distance,
                         now_s, env)


@dataclass(frozen=True)
class DecisionRecord:
    features: np.ndarray
    label: str
    weight: float = 1.0


# -- model parameters ------------------------------------------------------

@dataclass
class ChoiceModelParams:
    """Weights plus the metadata needed to apply them consistently."""

    poi_ids: tuple
    hidden_sizes: tuple = (64, 64)
    head: str = "plain"             # "plain" | "mos"
    n_mixtures: int = 1
    exit_policy: str = "exit_class"  # "exit_class" | "stamina"
    stamina_mu_log: float = DEFAULT_STAMINA_MU_LOG
    stamina_sigma_log: float = DEFAULT_STAMINA_SIGMA_LOG
    arrays: dict = field(default_factory=dict)
    training_meta: dict = field(default_factory=dict)

    @property
    def layout(self) -> FeatureLayout:
        return FeatureLayout(tuple(self.poi_ids))

    @property
    def candidates(self) -> tuple:
        if self.exit_policy == "exit_class":
            return tuple(self.poi_ids) + (EXIT,)
        return tuple(self.poi_ids)

    @property
    def n_candidates(self) -> int:
        return len(self.candidates)

    def default_mode(self) -> str:
        return "probabilistic" if self.head == "mos" else "deterministic"

    def copy(self) -> "ChoiceModelParams":
        return replace(self, arrays={k: v.copy() for k, v in self.arrays.items()},
                       training_meta=dict(self.training_meta))

    # flat views, used by the finite-difference gradient check
    def param_names(self) -> list:
        return sorted(self.arrays)

    def get_flat(self) -> np.ndarray:
        return np.concatenate([self.arrays[k].ravel() for k in self.param_names()])

    def set_flat(self, flat: np.ndarray) -> None:
        offset = 0
        for k in self.param_names():
            size = self.arrays[k].size
            self.arrays[k] = flat[offset:offset + size].reshape(self.arrays[k].shape).copy()
            offset += size

    def to_json(self) -> dict:
        return {
            "format": "flowtwin-model-v1",
            "poi_ids": list(self.poi_ids),
            "hidden_sizes": list(self.hidden_sizes),
            "head": self.head,
            "n_mixtures": self.n_mixtures,
            "exit_policy": self.exit_policy,
            "stamina_mu_log": self.stamina_mu_log,
            "stamina_sigma_log": self.stamina_sigma_log,
            "arrays": {
                k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                for k, v in sorted(self.arrays.items())
            },
            "training_meta": self.training_meta,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "ChoiceModelParams":
        if payload.get("format") != "flowtwin-model-v1":
            raise ValidationError("not a flowtwin model file", path="format")
        arrays = {
            k: np.asarray(v["data"], dtype=float).reshape(v["shape"])
            for k, v in payload["arrays"].items()
        }
        return cls(
            poi_ids=tuple(payload["poi_ids"]),
            hidden_sizes=tuple(payload["hidden_sizes"]),
            head=payload["head"],
            n_mixtures=int(payload["n_mixtures"]),
            exit_policy=payload["exit_policy"],
            stamina_mu_log=float(payload.get("stamina_mu_log", DEFAULT_STAMINA_MU_LOG)),
            stamina_sigma_log=float(payload.get("stamina_sigma_log", DEFAULT_STAMINA_SIGMA_LOG)),
            arrays=arrays,
            training_meta=dict(payload.get("training_meta", {})),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path) -> "ChoiceModelParams":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def init_params(poi_ids, hidden_sizes=(64, 64), head="plain", n_mixtures=3,
                exit_policy="exit_class", seed=0) -> ChoiceModelParams:
    """He-initialized parameters for the requested architecture."""
    if head not in ("plain", "mos"):
        raise ValidationError(f"unknown head {head}", path="head")
    if exit_policy not in ("exit_class", "stamina"):
        raise ValidationError(f"unknown exit policy {exit_policy}", path="exit_policy")
    params = ChoiceModelParams(
        poi_ids=tuple(poi_ids), hidden_sizes=tuple(hidden_sizes), head=head,
        n_mixtures=n_mixtures if head == "mos" else 1, exit_policy=exit_policy,
    )
    rng = substream(seed, "init")
    sizes = [params.layout.length] + list(hidden_sizes)
    arrays = {}
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        arrays[f"W{i}"] = rng.standard_normal((fan_out, fan_in)) * np.sqrt(2.0 / fan_in)
        arrays[f"b{i}"] = np.zeros(fan_out)
    h = sizes[-1]
    c = params.n_candidates
    if head == "plain":
        arrays["Wo"] = rng.standard_normal((c, h)) * np.sqrt(2.0 / h)
        arrays["bo"] = np.zeros(c)
    else:
        m = params.n_mixtures
        arrays["Wg"] = rng.standard_normal((m, h)) * np.sqrt(2.0 / h)
        arrays["bg"] = np.zeros(m)
        arrays["Wc"] = rng.standard_normal((m, c, h)) * np.sqrt(2.0 / h)
        arrays["bc"] = np.zeros((m, c))
    params.arrays = arrays
    return params


# -- forward / backward ------------------------------------------------------

def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _hidden_forward(params: ChoiceModelParams, F: np.ndarray):
    acts = [F]
    pre = []
    h = F
    for i in range(len(params.hidden_sizes)):
        z = h @ params.arrays[f"W{i}"].T + params.arrays[f"b{i}"]
        pre.append(z)
        h = np.maximum(z, 0.0)
        acts.append(h)
    return acts, pre


def forward_batch(params: ChoiceModelParams, F: np.ndarray) -> np.ndarray:
    """(n, L) features -> (n, C) probabilities; rows sum to 1."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    if F.shape[1] != params.layout.length:
        raise DimensionMismatchError(
            f"feature length {F.shape[1]} != layout length {params.layout.length}")
    acts, _ = _hidden_forward(params, F)
    h = acts[-1]
    if params.head == "plain":
        return _softmax(h @ params.arrays["Wo"].T + params.arrays["bo"])
    gate = _softmax(h @ params.arrays["Wg"].T + params.arrays["bg"])          # (n, M)
    comp_logits = np.einsum("nh,mch->nmc", h, params.arrays["Wc"]) + params.arrays["bc"]
    comp = _softmax(comp_logits)                                              # (n, M, C)
    return np.einsum("nm,nmc->nc", gate, comp)


def forward(params: ChoiceModelParams, f: np.ndarray) -> np.ndarray:
    """Probability vector over the candidate set for one feature vector."""
    return forward_batch(params, f)[0]


def loss_and_grad(params: ChoiceModelParams, F: np.ndarray, y: np.ndarray,
                  sample_weight: np.ndarray | None = None):
    """Weighted mean cross-entropy and its exact gradient.

    For the MoS head the per-component responsibility
    s_m = gate_m * p_m[y] / P[y] drives both gradients:
    d/d(gate logits) = gate - s and d/d(component m logits) = s_m (p_m - onehot).
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    n = len(F)
    y = np.asarray(y, dtype=int)
    w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    w_norm = w / w.sum()
    acts, pre = _hidden_forward(params, F)
    h = acts[-1]
    grads = {k: np.zeros_like(v) for k, v in params.arrays.items()}
    rows = np.arange(n)

    if params.head == "plain":
        probs = _softmax(h @ params.arrays["Wo"].T + params.arrays["bo"])
        py = np.maximum(probs[rows, y], 1e-300)
        loss = float(-(w_norm * np.log(py)).sum())
        dlogits = probs.copy()
        dlogits[rows, y] -= 1.0
        dlogits *= w_norm[:, None]
        grads["Wo"] = dlogits.T @ h
        grads["bo"] = dlogits.sum(axis=0)
        dh = dlogits @ params.arrays["Wo"]
    else:
        gate = _softmax(h @ params.arrays["Wg"].T + params.arrays["bg"])
        comp_logits = np.einsum("nh,mch->nmc", h, params.arrays["Wc"]) + params.arrays["bc"]
        comp = _softmax(comp_logits)                    # (n, M, C)
        comp_y = comp[rows, :, y]                       # (n, M)
        mix_y = np.maximum((gate * comp_y).sum(axis=1), 1e-300)
        loss = float(-(w_norm * np.log(mix_y)).sum())
        s = gate * comp_y / mix_y[:, None]              # (n, M) responsibilities
        dgate = (gate - s) * w_norm[:, None]
        grads["Wg"] = dgate.T @ h
        grads["bg"] = dgate.sum(axis=0)
        dcomp = comp * (s * w_norm[:, None])[:, :, None]
        dcomp[rows, :, y] -= s * w_norm[:, None]
        grads["Wc"] = np.einsum("nmc,nh->mch", dcomp, h)
        grads["bc"] = dcomp.sum(axis=0)
        dh = dgate @ params.arrays["Wg"] + np.einsum("nmc,mch->nh", dcomp, params.arrays["Wc"])

    for i in reversed(range(len(params.hidden_sizes))):
        dz = dh * (pre[i] > 0)
        grads[f"W{i}"] = dz.T @ acts[i]
        grads[f"b{i}"] = dz.sum(axis=0)
        dh = dz @ params.arrays[f"W{i}"]
    return loss, grads


def dataset_loss(params: ChoiceModelParams, F: np.ndarray, y: np.ndarray,
                 sample_weight: np.ndarray | None = None) -> float:
    F = np.atleast_2d(np.asarray(F, dtype=float))
    w = np.ones(len(F)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    probs = forward_batch(params, F)
    py = np.maximum(probs[np.arange(len(F)), np.asarray(y, dtype=int)], 1e-300)
    return float(-((w / w.sum()) * np.log(py)).sum())


# -- training ------------------------------------------------------------

@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 64
    epochs: int = 200
    hidden_sizes: tuple = (64, 64)
    head: str = "plain"
    n_mixtures: int = 3
    exit_policy: str = "exit_class"


def records_to_arrays(dataset, candidates) -> tuple:
    index = {c: i for i, c in enumerate(candidates)}
    F = np.stack([np.asarray(r.features, dtype=float) for r in dataset])
    y = np.empty(len(dataset), dtype=int)
    w = np.empty(len(dataset))
    for i, r in enumerate(dataset):
        if r.label not in index:
            raise LabelOutOfRangeError(
                f"label {r.label!r} not in candidate set (exit policy mismatch?)")
        y[i] = index[r.label]
        w[i] = r.weight
    return F, y, w


def train(dataset, hyper: TrainingConfig, seed: int, poi_ids=None) -> ChoiceModelParams:
    """Minibatch SGD with momentum over decision records.

    Shuffling is a pure function of (seed, epoch), so training is
    bit-reproducible.  The returned params carry initial/final loss and the
    per-epoch loss history in ``training_meta``.  ``poi_ids`` pins the PoI
    universe; when omitted it is inferred from the labels, which only works
    if every PoI appears as a label.
    """
    if not dataset:
        raise EmptyDatasetError("training requires at least one decision record")
    poi_ids = tuple(poi_ids) if poi_ids is not None else _poi_ids_from_features(dataset)
    params = init_params(poi_ids, hyper.hidden_sizes, hyper.head, hyper.n_mixtures,
                         hyper.exit_policy, seed=seed)
    F, y, w = records_to_arrays(dataset, params.candidates)
    if F.shape[1] != params.layout.length:
        raise DimensionMismatchError(
            f"feature length {F.shape[1]} != expected {params.layout.length}")
    initial_loss = dataset_loss(params, F, y, w)
    velocity = {k: np.zeros_like(v) for k, v in params.arrays.items()}
    n = len(F)
    history = []
    for epoch in range(hyper.epochs):
        order = substream(seed, "shuffle", epoch).permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            loss, grads = loss_and_grad(params, F[idx], y[idx], w[idx])
            epoch_loss += loss * len(idx)
            for k in params.arrays:
                velocity[k] = hyper.momentum * velocity[k] - hyper.learning_rate * grads[k]
                params.arrays[k] = params.arrays[k] + velocity[k]
        history.append(epoch_loss / n)
    final_loss = dataset_loss(params, F, y, w)
    params.training_meta = {
        "seed": seed,
        "epochs": hyper.epochs,
        "learning_rate": hyper.learning_rate,
        "momentum": hyper.momentum,
        "batch_size": hyper.batch_size,
        "n_records": n,
        "initial_loss": initial_loss,
        "final_loss": final_loss,
        "epoch_loss": history,
    }
    return params


def _poi_ids_from_features(dataset) -> tuple:
    length = len(dataset[0].features)
    if (length - 3) % 4:
        raise DimensionMismatchError(f"feature length {length} is not 4p + 3")
    # the labels name the PoI universe only partially; infer count from layout
    p = (length - 3) // 4
    labels = sorted({r.label for r in dataset if r.label != EXIT})
    if len(labels) > p:
        raise DimensionMismatchError("more labels than PoI slots in the features")
    return tuple(labels) if len(labels) == p else tuple(labels) + tuple(
        f"_pad{i}" for i in range(p - len(labels)))


# -- selection -------------------------------------------------------------

def select_from_probs(probs: np.ndarray, mode: str, rng: np.random.Generator | None = None) -> int:
    """Argmax with lowest-index tie break, or inverse-CDF sampling."""
    probs = np.asarray(probs, dtype=float)
    if mode == "deterministic":
        return int(np.argmax(probs))
    if rng is None:
        raise ValidationError("probabilistic selection needs an RNG", path="rng")
    cdf = np.cumsum(probs)
    r = rng.random() * cdf[-1]
    return int(min(np.searchsorted(cdf, r, side="right"), len(probs) - 1))


def decide_next(params: ChoiceModelParams, f: np.ndarray, mode: str | None = None,
                rng: np.random.Generator | None = None, mask_current: bool = True) -> str:
    """Pick the next destination (or EXIT) for one feature vector.

    The current PoI's own probability is renormalized away before
    selection: agents do not self-loop.
    """
    mode = mode or params.default_mode()
    probs = forward(params, f).copy()
    if mask_current:
        onehot = np.asarray(f[:params.layout.n_pois])
        if onehot.max() > 0:
            probs[int(np.argmax(onehot))] = 0.0
            total = probs.sum()
            if total <= 0:
                return EXIT if params.exit_policy == "exit_class" else params.candidates[0]
            probs = probs / total
    return params.candidates[select_from_probs(probs, mode, rng)]


# -- exit policies -----------------------------------------------------------

def apply_stamina(agent, moved_distance: float) -> bool:
    """Decrement the stamina budget; True means the agent exits (at <= 0).

    Under the exit-class policy stamina is untouched and never triggers.
    """
    if getattr(agent, "stamina", None) is None:
        return False
    agent.stamina -= moved_distance
    return agent.stamina <= 0.0


def fit_stamina_lognormal(total_distances) -> tuple:
    """Method-of-moments lognormal fit of per-trajectory total distances."""
    d = np.asarray([x for x in total_distances if x > 0], dtype=float)
    if len(d) == 0:
        return DEFAULT_STAMINA_MU_LOG, DEFAULT_STAMINA_SIGMA_LOG
    mean = float(d.mean())
    var = float(d.var())
    if mean <= 0:
        return DEFAULT_STAMINA_MU_LOG, DEFAULT_STAMINA_SIGMA_LOG
    sigma2 = float(np.log1p(var / (mean * mean)))
    mu = float(np.log(mean) - 0.5 * sigma2)
    return mu, max(np.sqrt(sigma2), 1e-6)


# -- training-set extraction ---------------------------------------------

def trajectory_cumdist_at(samples, t: float) -> float:
    """Path length integrated over 1 Hz samples up to time t."""
    total = 0.0
    prev = None
    for s_t, x, y, *_ in samples:
        if s_t > t + 1e-9:
            break
        if prev is not None:
            total += float(np.hypot(x - prev[0], y - prev[1]))
        prev = (x, y)
    return total


def build_training_set(trajectories, env, exit_policy: str = "exit_class",
                       layout: FeatureLayout | None = None) -> list:
    """One DecisionRecord per decision epoch of every trajectory.

    Visits v0..vk give transition records (at v_i -> label v_{i+1}); under
    the exit-class policy the final visit also yields an EXIT record when
    the trajectory ended endogenously (choice or stamina, not a fault).
    """
    layout = layout or FeatureLayout(tuple(env.network.poi_ids))
    records = []
    for rec in trajectories:
        visits = list(rec.visits)
        if not visits:
            continue
        visited = set()
        for i, (t_i, poi_i) in enumerate(visits):
            cum = trajectory_cumdist_at(rec.samples, t_i)
            if i + 1 < len(visits):
                label = visits[i + 1][1]
            elif exit_policy == "exit_class" and rec.exit_reason in ("choice", "stamina"):
                label = EXIT
            else:
                visited.add(poi_i)
                continue
            features = layout.encode(poi_i, visited, cum, t_i, env)
            records.append(DecisionRecord(features=features, label=label))
            visited.add(poi_i)
    return records


# -- training-set CSV ---------------------------------------------------------

def feature_column_names(layout: FeatureLayout) -> list:
    cols = [f"cur_{p}" for p in layout.poi_ids]
    cols += [f"vis_{p}" for p in layout.poi_ids]
    cols += ["tod_sin", "tod_cos", "cumdist"]
    cols += [f"tt_{p}" for p in layout.poi_ids]
    cols += [f"attr_{p}" for p in layout.poi_ids]
    return cols


def save_training_set_csv(records, layout: FeatureLayout, path) -> None:
    import csv as _csv
    with open(path, "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(feature_column_names(layout) + ["weight", "label"])
        for r in records:
            w.writerow([repr(float(v)) for v in r.features] + [repr(float(r.weight)), r.label])


def load_training_set_csv(path) -> list:
    import csv as _csv
    records = []
    with open(path, newline="") as fh:
        reader = _csv.reader(fh)
        header = next(reader)
        for row in reader:
            features = np.array([float(v) for v in row[:-2]])
            records.append(DecisionRecord(features=features, label=row[-1],
                                          weight=float(row[-2])))
    return records
