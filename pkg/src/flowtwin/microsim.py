"""Continuous-time Social Force pedestrian engine with waypoint routing.

Dynamics per agent: a goal-driving term (u_max * e - u) / tau plus
exponential repulsions from nearby agents and obstacle segments, integrated
with semi-implicit Euler (velocity first, speed-clipped to the cap, then
position).  Agents follow routed node polylines, advancing to the next
waypoint when within 1 m.  Decision epochs fire at spawn, on arrival in the
target PoI's vicinity, and as a safety net when a route runs out without a
vicinity hit; the decision policy then returns the next PoI or EXIT.

A run is sequential and fully deterministic for a given seed: every
stochastic draw (decisions, stamina budgets) comes from a per-agent stream
derived from the master seed, so results do not depend on scheduling.  Hot
per-agent state (position, velocity, caps, waypoints) lives in flat numpy
arrays; AgentState objects carry the episodic bookkeeping.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .choice import EXIT, ChoiceModelParams, decide_next, encode_features
from .errors import NoPathError, ValidationError
from .seeding import substream

DEFAULT_DT = 0.05
DEFAULT_SAMPLE_EVERY = 1.0
WAYPOINT_REACH_M = 1.0
MAX_TIME_DEFAULT = 86400.0


@dataclass
class SocialForceParams:
    """Classic circular-exponential interaction model.

    ``inertia`` is the m_i scaling: interaction amplitudes are divided by
    it, while the driving term is inertia-free by construction.
    """

    inertia: float = 1.0
    tau_relax: float = 0.5
    a_ped: float = 2.0
    b_ped: float = 0.3
    r_sum: float = 0.4
    a_obs: float = 5.0
    b_obs: float = 0.2
    cutoff: float = 3.0

    def validate(self) -> None:
        if self.tau_relax <= 0:
            raise ValidationError("tau_relax must be > 0", path="social_force.tau_relax")
        if self.inertia <= 0:
            raise ValidationError("inertia must be > 0", path="social_force.inertia")
        if min(self.a_ped, self.a_obs) < 0 or min(self.b_ped, self.b_obs, self.cutoff) <= 0:
            raise ValidationError("repulsion ranges must be > 0, amplitudes >= 0",
                                  path="social_force")


@dataclass
class AgentState:
    """Per-agent bookkeeping; inside a World the numeric fields mirror its arrays."""

    id: int
    origin_area: str = ""
    destination_area: str = ""
    spawn_time: float = 0.0
    walk_speed: float = 1.389
    position: np.ndarray = None
    velocity: np.ndarray = None
    route: list = field(default_factory=list)       # waypoint (x, y) tuples
    waypoint_index: int = 0
    mode: str = "walking"
    speed_cap: float = 0.0
    visited: set = field(default_factory=set)
    cumulative_distance: float = 0.0
    stamina: float | None = None
    current_poi: str = ""
    target_poi: str = ""
    samples: list = field(default_factory=list)
    visits: list = field(default_factory=list)
    exit_time: float | None = None
    exit_reason: str = ""
    rng: np.random.Generator | None = None
    slot: int = -1


def desired_direction(agent: AgentState) -> np.ndarray:
    """Unit vector toward the next unreached waypoint; zero when none is left.

    Waypoints closer than 1 m are consumed first, so the direction always
    points at least 1 m ahead (or nowhere).
    """
    while agent.waypoint_index < len(agent.route):
        wx, wy = agent.route[agent.waypoint_index]
        dx = wx - agent.position[0]
        dy = wy - agent.position[1]
        d = math.hypot(dx, dy)
        if d >= WAYPOINT_REACH_M:
            return np.array([dx / d, dy / d])
        agent.waypoint_index += 1
    return np.zeros(2)


@dataclass(frozen=True)
class TrajectoryRecord:
    agent_id: int
    origin_area: str
    destination_area: str
    spawn_time: float
    samples: tuple          # (t, x, y, area or None, mode)
    visits: tuple           # (t, poi id)
    exit_time: float
    exit_reason: str        # choice | stamina | fault | timeout
    total_distance: float


# -- decision policies -------------------------------------------------------

class ModelPolicy:
    """Wraps trained/planted ChoiceModelParams as a simulation policy."""

    def __init__(self, params: ChoiceModelParams, mode: str | None = None):
        self.params = params
        self.mode = mode or params.default_mode()

    @property
    def stamina_params(self):
        if self.params.exit_policy == "stamina":
            return (self.params.stamina_mu_log, self.params.stamina_sigma_log)
        return None

    def decide(self, agent, env, now: float, rng) -> str:
        f = encode_features(agent, env, now, layout=self.params.layout)
        return decide_next(self.params, f, self.mode, rng)


class DirectTripPolicy:
    """Offline replay: walk to the departure's destination area, then exit.

    This reproduces single-leg reconstructed trips, the raw material the
    first training set is extracted from.
    """

    stamina_params = None

    def decide(self, agent, env, now: float, rng) -> str:
        if not agent.visited:
            target = env.network.area_anchor_poi(agent.destination_area)
            if target != agent.current_poi:
                return target
        return EXIT


class AlwaysExitPolicy:
    stamina_params = None

    def decide(self, agent, env, now, rng) -> str:
        return EXIT


def as_policy(model):
    if isinstance(model, ChoiceModelParams):
        return ModelPolicy(model)
    return model


# -- force evaluation ---------------------------------------------------------

_BRUTE_FORCE_LIMIT = 512


def _pair_forces(P: np.ndarray, sf: SocialForceParams, out: np.ndarray) -> np.ndarray:
    """Accumulate agent-agent repulsion into ``out`` (preallocated, zeroed)."""
    n = len(P)
    if n < 2:
        return out
    if n <= _BRUTE_FORCE_LIMIT:
        dx = P[:, 0, None] - P[None, :, 0]
        dy = P[:, 1, None] - P[None, :, 1]
        d2 = dx * dx + dy * dy
        mask = (d2 > 1e-18) & (d2 < sf.cutoff * sf.cutoff)
        if not mask.any():
            return out  # nobody within the cutoff: the usual case in open space
        ii, jj = np.nonzero(mask)
        d = np.sqrt(d2[ii, jj])
        mag = sf.a_ped * np.exp(np.minimum((sf.r_sum - d) / sf.b_ped, 50.0)) / d
        np.add.at(out[:, 0], ii, mag * dx[ii, jj])
        np.add.at(out[:, 1], ii, mag * dy[ii, jj])
        return out
    out += _pair_forces_grid(P, sf)
    return out


def _pair_forces_grid(P: np.ndarray, sf: SocialForceParams) -> np.ndarray:
    """Uniform spatial hash with cell size = cutoff, for larger crowds."""
    cell = sf.cutoff
    keys = np.floor(P / cell).astype(np.int64)
    grid: dict = {}
    for i, (cx, cy) in enumerate(keys):
        grid.setdefault((int(cx), int(cy)), []).append(i)
    out = np.zeros_like(P)
    for i in range(len(P)):
        cx, cy = int(keys[i, 0]), int(keys[i, 1])
        neigh = []
        for ox in (-1, 0, 1):
            for oy in (-1, 0, 1):
                neigh.extend(grid.get((cx + ox, cy + oy), ()))
        js = np.array([j for j in neigh if j != i], dtype=int)
        if not len(js):
            continue
        diff = P[i] - P[js]
        d = np.hypot(diff[:, 0], diff[:, 1])
        mask = (d > 1e-9) & (d < sf.cutoff)
        if not mask.any():
            continue
        mag = sf.a_ped * np.exp((sf.r_sum - d[mask]) / sf.b_ped)
        out[i] = np.sum(mag[:, None] * diff[mask] / d[mask][:, None], axis=0)
    return out


def _obstacle_forces(P: np.ndarray, obstacles, sf: SocialForceParams) -> np.ndarray:
    out = np.zeros_like(P)
    radius = 0.5 * sf.r_sum
    for (x1, y1), (x2, y2) in obstacles:
        dx, dy = x2 - x1, y2 - y1
        L2 = dx * dx + dy * dy
        if L2 == 0.0:
            nearest = np.tile(np.array([x1, y1]), (len(P), 1))
        else:
            t = np.clip(((P[:, 0] - x1) * dx + (P[:, 1] - y1) * dy) / L2, 0.0, 1.0)
            nearest = np.stack([x1 + t * dx, y1 + t * dy], axis=1)
        diff = P - nearest
        d = np.hypot(diff[:, 0], diff[:, 1])
        mask = (d > 1e-9) & (d < sf.cutoff)
        if not mask.any():
            continue
        mag = sf.a_obs * np.exp((radius - d[mask]) / sf.b_obs)
        out[mask] += mag[:, None] * diff[mask] / d[mask][:, None]
    return out


# -- world ---------------------------------------------------------------------

_INITIAL_CAPACITY = 64


class World:
    """Simulation state for one run: active agents, environment, policy.

    Hot per-agent state lives in row-packed arrays: rows 0..n_active-1 are
    live, retiring swaps the last row into the hole.  The step operates on
    views of those rows, so no gather/scatter copies happen per step.
    """

    def __init__(self, env, policy, sf_params: SocialForceParams, seed: int,
                 obstacles=(), decision_mode=None):
        sf_params.validate()
        self.env = env
        self.policy = as_policy(policy)
        if decision_mode is not None and isinstance(self.policy, ModelPolicy):
            self.policy.mode = decision_mode
        self.sf = sf_params
        self.seed = seed
        self.obstacles = tuple(obstacles)
        self.agents: dict[int, AgentState] = {}
        self.finished: list[AgentState] = []
        self.fault_count = 0
        self.time = 0.0
        cap = _INITIAL_CAPACITY
        self._pos = np.zeros((cap, 2))
        self._vel = np.zeros((cap, 2))
        self._umax = np.zeros(cap)
        self._wp = np.zeros((cap, 2))
        self._haswp = np.zeros(cap, dtype=bool)
        self._cum = np.zeros(cap)
        self._stam = np.full(cap, np.inf)
        self._tgt = np.zeros((cap, 2))
        self._trad = np.full(cap, -1.0)   # negative radius disables the arrival check
        self._n = 0
        self._row_ids: list[int] = []     # agent id per live row
        self._anchor_xy = {
            pid: np.asarray(env.network.node_xy(env.network.poi_anchors[pid]), dtype=float)
            for pid in env.network.poi_ids
        }

    @property
    def _ids(self) -> list:
        return self._row_ids

    # -- row management ---------------------------------------------------

    def _grow(self) -> None:
        old = len(self._umax)
        new = old * 2
        for name in ("_pos", "_vel", "_wp", "_tgt"):
            arr = getattr(self, name)
            grown = np.zeros((new, 2))
            grown[:old] = arr
            setattr(self, name, grown)
        for name, fill in (("_umax", 0.0), ("_cum", 0.0), ("_stam", np.inf), ("_trad", -1.0)):
            arr = getattr(self, name)
            grown = np.full(new, fill)
            grown[:old] = arr
            setattr(self, name, grown)
        grown_mask = np.zeros(new, dtype=bool)
        grown_mask[:old] = self._haswp
        self._haswp = grown_mask

    def _free_row(self, row: int) -> None:
        last = self._n - 1
        if row != last:
            for name in ("_pos", "_vel", "_wp", "_tgt"):
                getattr(self, name)[row] = getattr(self, name)[last]
            for name in ("_umax", "_haswp", "_cum", "_stam", "_trad"):
                getattr(self, name)[row] = getattr(self, name)[last]
            moved = self._row_ids[last]
            self._row_ids[row] = moved
            self.agents[moved].slot = row
        self._row_ids.pop()
        self._trad[last] = -1.0
        self._haswp[last] = False
        self._n = last

    # -- lifecycle ------------------------------------------------------

    def spawn(self, agent_id: int, origin_area: str, destination_area: str,
              depart_s: float, walk_speed: float) -> None:
        net = self.env.network
        anchor_poi = net.area_anchor_poi(origin_area)
        pos = self._anchor_xy[anchor_poi]
        if self._n >= len(self._umax):
            self._grow()
        row = self._n
        agent = AgentState(
            id=agent_id, origin_area=origin_area, destination_area=destination_area,
            spawn_time=self.time, walk_speed=walk_speed,
            position=pos.copy(), velocity=np.zeros(2), speed_cap=walk_speed,
            current_poi=anchor_poi, slot=row,
            rng=substream(self.seed, "agent", agent_id),
        )
        self._pos[row] = pos
        self._vel[row] = 0.0
        self._umax[row] = walk_speed
        self._cum[row] = 0.0
        self._haswp[row] = False
        self._trad[row] = -1.0
        if self.policy.stamina_params is not None:
            mu, sigma = self.policy.stamina_params
            agent.stamina = float(substream(self.seed, "stamina", agent_id).lognormal(mu, sigma))
            self._stam[row] = agent.stamina
        else:
            self._stam[row] = np.inf
        self.agents[agent_id] = agent
        self._row_ids.append(agent_id)
        self._n += 1
        self._record_sample(agent)
        poi = net.pois[anchor_poi]
        if math.hypot(pos[0] - poi.x, pos[1] - poi.y) <= poi.radius:
            agent.visits.append((self.time, anchor_poi))
        self._decision_epoch(agent, anchor_poi)

    def _sync_scalars(self, agent: AgentState) -> None:
        s = agent.slot
        agent.position = self._pos[s].copy()
        agent.velocity = self._vel[s].copy()
        agent.cumulative_distance = float(self._cum[s])
        if agent.stamina is not None:
            agent.stamina = float(self._stam[s])

    def _decision_epoch(self, agent: AgentState, at_poi: str) -> None:
        self._sync_scalars(agent)
        agent.current_poi = at_poi
        choice = self.policy.decide(agent, self.env, self.time, agent.rng)
        agent.visited.add(at_poi)  # after the decision: features see prior visits only
        if choice == EXIT:
            self._retire(agent, "choice")
            return
        link = self.env.link_for(at_poi, choice)
        try:
            if link is not None:
                node_path = link.path if link.from_poi == at_poi else tuple(reversed(link.path))
                agent.mode = "riding"
                agent.speed_cap = link.speed
            else:
                node_path = self.env.network.shortest_path_nodes(at_poi, choice)
                agent.mode = "walking"
                agent.speed_cap = agent.walk_speed
        except NoPathError:
            self.fault_count += 1
            self._retire(agent, "fault")
            return
        agent.route = [self.env.network.node_xy(nd) for nd in node_path]
        agent.waypoint_index = 0
        agent.target_poi = choice
        s = agent.slot
        self._umax[s] = agent.speed_cap
        target = self.env.network.pois[choice]
        self._tgt[s] = (target.x, target.y)
        self._trad[s] = target.radius
        self._advance_waypoints(agent)

    def _advance_waypoints(self, agent: AgentState) -> None:
        s = agent.slot
        px, py = self._pos[s]
        while agent.waypoint_index < len(agent.route):
            wx, wy = agent.route[agent.waypoint_index]
            if math.hypot(wx - px, wy - py) >= WAYPOINT_REACH_M:
                self._wp[s] = (wx, wy)
                self._haswp[s] = True
                return
            agent.waypoint_index += 1
        self._haswp[s] = False

    def _retire(self, agent: AgentState, reason: str) -> None:
        self._sync_scalars(agent)
        agent.exit_time = self.time
        agent.exit_reason = reason
        if not agent.samples or agent.samples[-1][0] < self.time:
            self._record_sample(agent)
        self._free_row(agent.slot)
        agent.slot = -1
        self.agents.pop(agent.id, None)
        self.finished.append(agent)

    def _record_sample(self, agent: AgentState, area=None) -> None:
        if agent.slot >= 0:
            x, y = self._pos[agent.slot]
        else:
            x, y = agent.position
        if area is None:
            area = self.env.network.area_of_point(float(x), float(y))
        agent.samples.append((self.time, float(x), float(y), area, agent.mode))

    def record_samples(self) -> None:
        n = self._n
        if n == 0:
            return
        areas = self.env.network.areas_of_points(self._pos[:n])
        t = self.time
        for row in range(n):
            agent = self.agents[self._row_ids[row]]
            x, y = self._pos[row]
            agent.samples.append((t, float(x), float(y), areas[row], agent.mode))

    # -- one integration step --------------------------------------------

    def step(self, dt: float) -> None:
        if dt <= 0:
            raise ValidationError("dt must be > 0", path="dt")
        self.time += dt
        n = self._n
        if n == 0:
            return
        P = self._pos[:n]
        V = self._vel[:n]
        U = self._umax[:n]
        WP = self._wp[:n]
        HW = self._haswp[:n]

        # consume waypoints within reach, then aim at the active one
        dwx = WP[:, 0] - P[:, 0]
        dwy = WP[:, 1] - P[:, 1]
        dw2 = dwx * dwx + dwy * dwy
        near = HW & (dw2 < WAYPOINT_REACH_M * WAYPOINT_REACH_M)
        if near.any():
            for i in np.nonzero(near)[0]:
                agent = self.agents[self._row_ids[i]]
                agent.waypoint_index += 1
                self._advance_waypoints(agent)
            dwx = WP[:, 0] - P[:, 0]
            dwy = WP[:, 1] - P[:, 1]
            dw2 = dwx * dwx + dwy * dwy
        dw = np.sqrt(dw2, where=dw2 > 0, out=np.zeros_like(dw2))
        scale = np.where(HW & (dw > 1e-12), 1.0 / np.where(dw > 1e-12, dw, 1.0), 0.0)
        acc = np.empty_like(P)
        acc[:, 0] = (U * (dwx * scale) - V[:, 0]) / self.sf.tau_relax
        acc[:, 1] = (U * (dwy * scale) - V[:, 1]) / self.sf.tau_relax

        if n > 1:
            repulse = _pair_forces(P, self.sf, np.zeros_like(P))
            if self.sf.inertia != 1.0:
                repulse /= self.sf.inertia
            acc += repulse
        if self.obstacles:
            acc += _obstacle_forces(P, self.obstacles, self.sf) / self.sf.inertia

        V += dt * acc
        speed = np.hypot(V[:, 0], V[:, 1])
        over = speed > U
        if over.any():
            V[over] *= (U[over] / speed[over])[:, None]
            speed = np.minimum(speed, U)
        P += dt * V
        moved = dt * speed
        self._cum[:n] += moved
        self._stam[:n] -= moved

        # stamina exhaustion retires first, then arrivals fire decisions;
        # snapshot ids before retiring because rows swap underneath
        if (self._stam[:n] <= 0.0).any():
            for aid in [self._row_ids[i] for i in np.nonzero(self._stam[:n] <= 0.0)[0]]:
                self._retire(self.agents[aid], "stamina")
            n = self._n

        tdx = self._tgt[:n, 0] - self._pos[:n, 0]
        tdy = self._tgt[:n, 1] - self._pos[:n, 1]
        trad = self._trad[:n]
        pending = ((trad >= 0.0) & (tdx * tdx + tdy * tdy <= trad * trad)) | ~self._haswp[:n]
        if pending.any():
            for aid in [self._row_ids[i] for i in np.nonzero(pending)[0]]:
                agent = self.agents.get(aid)
                if agent is None or not agent.target_poi:
                    continue
                s = agent.slot
                ddx = self._tgt[s, 0] - self._pos[s, 0]
                ddy = self._tgt[s, 1] - self._pos[s, 1]
                if math.hypot(ddx, ddy) <= self._trad[s]:
                    agent.visits.append((self.time, agent.target_poi))
                    self._decision_epoch(agent, agent.target_poi)
                elif not self._haswp[s]:
                    # route ran out without a vicinity hit: re-decide at the target
                    self._decision_epoch(agent, agent.target_poi)


def step(world: World, dt: float) -> World:
    world.step(dt)
    return world


# -- run driver -----------------------------------------------------------------

def run_simulation(env, departures, choice_model, sf_params: SocialForceParams | None = None,
                   dt: float = DEFAULT_DT, seed: int = 0, slot_s: float = 600.0,
                   max_time: float = MAX_TIME_DEFAULT, sample_every: float = DEFAULT_SAMPLE_EVERY,
                   obstacles=(), decision_mode=None):
    """Simulate departures under a decision policy.

    Returns (trajectory records, PopulationSeries).  Departures must be
    sorted by time; each spawns an agent at its origin area's anchor PoI.
    """
    from .metrics import population_series

    sf_params = sf_params or SocialForceParams()
    steps_per_sample = int(round(sample_every / dt))
    if abs(steps_per_sample * dt - sample_every) > 1e-9 or steps_per_sample < 1:
        raise ValidationError("sample_every must be an integer multiple of dt", path="dt")
    world = World(env, choice_model, sf_params, seed, obstacles, decision_mode)
    pending = [d for d in departures if d.depart_s <= max_time]
    for a, b in zip(pending[:-1], pending[1:]):
        if b.depart_s < a.depart_s:
            raise ValidationError("departures must be sorted by time", path="departures")
    next_idx = 0
    k = 0
    while world.agents or next_idx < len(pending):
        t = k * dt
        if t > max_time:
            break
        while next_idx < len(pending) and pending[next_idx].depart_s <= t + 1e-9:
            ev = pending[next_idx]
            world.time = t
            world.spawn(next_idx, ev.origin, ev.destination, ev.depart_s, ev.walk_speed)
            next_idx += 1
        if not world.agents:
            if next_idx >= len(pending):
                break
            # fast-forward through the empty stretch, staying on the dt grid
            k = max(k + 1, int(math.floor((pending[next_idx].depart_s - 1e-9) / dt)))
            continue
        world.time = t
        world.step(dt)
        k += 1
        if k % steps_per_sample == 0:
            world.record_samples()
    world.time = min(k * dt, max_time)
    for aid in list(world._ids):
        world._retire(world.agents[aid], "timeout")

    records = [
        TrajectoryRecord(
            agent_id=a.id, origin_area=a.origin_area, destination_area=a.destination_area,
            spawn_time=a.spawn_time, samples=tuple(a.samples), visits=tuple(a.visits),
            exit_time=a.exit_time, exit_reason=a.exit_reason,
            total_distance=a.cumulative_distance,
        )
        for a in sorted(world.finished, key=lambda x: x.id)
    ]
    n_slots = int(math.ceil(max_time / slot_s))
    series = population_series(records, env.network, slot_s, n_slots)
    return records, series


# -- persistence -------------------------------------------------------------------

def save_trajectories_jsonl(records, path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            for t, x, y, area, mode in rec.samples:
                fh.write(json.dumps({"t": t, "id": rec.agent_id, "x": x, "y": y,
                                     "area": area, "mode": mode}) + "\n")


def save_events_csv(records, path) -> None:
    import csv as _csv
    with open(path, "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["id", "time", "event", "poi"])
        for rec in records:
            for t, poi in rec.visits:
                w.writerow([rec.agent_id, repr(t), "visit", poi])
            w.writerow([rec.agent_id, repr(rec.exit_time), f"exit_{rec.exit_reason}", ""])


def load_trajectories(jsonl_path, events_path) -> list:
    import csv as _csv
    samples: dict[int, list] = {}
    with open(jsonl_path) as fh:
        for line in fh:
            row = json.loads(line)
            samples.setdefault(int(row["id"]), []).append(
                (float(row["t"]), float(row["x"]), float(row["y"]), row["area"], row["mode"]))
    visits: dict[int, list] = {}
    exits: dict[int, tuple] = {}
    with open(events_path, newline="") as fh:
        for row in _csv.DictReader(fh):
            aid = int(row["id"])
            if row["event"] == "visit":
                visits.setdefault(aid, []).append((float(row["time"]), row["poi"]))
            elif row["event"].startswith("exit_"):
                exits[aid] = (float(row["time"]), row["event"][len("exit_"):])
    records = []
    for aid in sorted(samples):
        rows = sorted(samples[aid])
        t_exit, reason = exits.get(aid, (rows[-1][0], "timeout"))
        total = 0.0
        for (t0, x0, y0, *_), (t1, x1, y1, *_) in zip(rows[:-1], rows[1:]):
            total += math.hypot(x1 - x0, y1 - y0)
        records.append(TrajectoryRecord(
            agent_id=aid, origin_area="", destination_area="",
            spawn_time=rows[0][0], samples=tuple(rows),
            visits=tuple(sorted(visits.get(aid, ()))),
            exit_time=t_exit, exit_reason=reason,
            total_distance=total,
        ))
    return records
