from __future__ import annotations

import math

import numpy as np
import pytest

from flowtwin.choice import EXIT
from flowtwin.demand import DepartureEvent
from flowtwin.environment import baseline_environment
from flowtwin.microsim import (
    AgentState,
    AlwaysExitPolicy,
    DirectTripPolicy,
    SocialForceParams,
    World,
    desired_direction,
    run_simulation,
    save_events_csv,
    save_trajectories_jsonl,
)
from flowtwin.network import KMH

WALK = 5.0 * KMH  # 1.3888... m/s


def _inject(world: World, agent_id: int, pos, route, umax: float) -> AgentState:
    """Drop an agent into a world without the spawn/decision machinery."""
    if world._n >= len(world._umax):
        world._grow()
    row = world._n
    agent = AgentState(id=agent_id, walk_speed=umax, position=np.asarray(pos, dtype=float),
                       velocity=np.zeros(2), route=list(route), speed_cap=umax, slot=row)
    world._pos[row] = pos
    world._vel[row] = 0.0
    world._umax[row] = umax
    world._cum[row] = 0.0
    world._stam[row] = np.inf
    world._trad[row] = -1.0
    world.agents[agent_id] = agent
    world._row_ids.append(agent_id)
    world._n += 1
    world._advance_waypoints(agent)
    return agent


@pytest.fixture
def lone_world(triangle_network):
    env = baseline_environment(triangle_network, walk_speed=WALK)
    return World(env, AlwaysExitPolicy(), SocialForceParams(), seed=0)


class TestDesiredDirection:
    def test_unit_vector(self):
        a = AgentState(id=0, position=np.zeros(2), route=[(3.0, 4.0)])
        assert desired_direction(a) == pytest.approx([0.6, 0.8])

    def test_waypoint_advance(self):
        a = AgentState(id=0, position=np.array([10.0, 0.0]),
                       route=[(10.5, 0.0), (10.0, 50.0)])
        # first waypoint is within 1 m, so it is consumed
        assert desired_direction(a) == pytest.approx([0.0, 1.0])
        assert a.waypoint_index == 1

    def test_empty_route_zero(self):
        a = AgentState(id=0, position=np.zeros(2), route=[])
        assert desired_direction(a) == pytest.approx([0.0, 0.0])


class TestStepDynamics:
    def test_single_step_driving_term(self, lone_world):
        a = _inject(lone_world, 0, (0.0, 0.0), [(1000.0, 0.0)], umax=1.389)
        lone_world.step(0.05)
        # dt * u_max / tau = 0.05 * 1.389 / 0.5
        assert lone_world._vel[a.slot] == pytest.approx([0.1389, 0.0])

    def test_relaxation_matches_closed_form(self, lone_world):
        # semi-implicit Euler solves u_k = umax (1 - (1 - dt/tau)^k) exactly;
        # both it and the sim must track the continuous exponential within 2%
        dt, tau, umax = 0.05, 0.5, 1.389
        a = _inject(lone_world, 0, (0.0, 0.0), [(10000.0, 0.0)], umax=umax)
        horizon = int(round(5 * tau / dt))
        for k in range(1, horizon + 1):
            lone_world.step(dt)
            speed = float(np.hypot(*lone_world._vel[a.slot]))
            discrete = umax * (1.0 - (1.0 - dt / tau) ** k)
            continuous = umax * (1.0 - math.exp(-k * dt / tau))
            assert speed == pytest.approx(discrete, rel=1e-9)
            assert abs(speed - continuous) / umax < 0.02
        assert float(np.hypot(*lone_world._vel[a.slot])) >= 0.99 * umax

    def test_speed_cap_never_exceeded(self, lone_world, rng):
        caps = [0.9, 1.389, 2.0]
        agents = []
        for i, cap in enumerate(caps):
            pos = rng.uniform(0, 5, size=2)
            agents.append(_inject(lone_world, i, pos, [(100.0, 100.0)], umax=cap))
        for _ in range(400):
            lone_world.step(0.05)
            for a, cap in zip(agents, caps):
                if a.slot >= 0:
                    assert np.hypot(*lone_world._vel[a.slot]) <= cap + 1e-6

    def test_no_teleportation(self, lone_world):
        a = _inject(lone_world, 0, (0.0, 0.0), [(500.0, 0.0)], umax=1.389)
        prev = lone_world._pos[a.slot].copy()
        for _ in range(200):
            lone_world.step(0.05)
            cur = lone_world._pos[a.slot].copy()
            assert np.hypot(*(cur - prev)) <= 1.389 * 0.05 + 1e-6
            prev = cur

    def test_head_on_corridor_separation(self, triangle_network):
        # two agents pass head-on inside a 2 m wide corridor, keeping to
        # opposite lanes; default repulsion must hold them apart by more
        # than the static equilibrium distance (~0.30 m)
        env = baseline_environment(triangle_network, walk_speed=WALK)
        world = World(env, AlwaysExitPolicy(), SocialForceParams(), seed=0)
        a = _inject(world, 0, (-6.0, -0.30), [(6.0, -0.30)], umax=1.389)
        b = _inject(world, 1, (6.0, 0.30), [(-6.0, 0.30)], umax=1.389)
        min_dist = math.inf
        for _ in range(int(20.0 / 0.05)):
            world.step(0.05)
            pa, pb = world._pos[a.slot], world._pos[b.slot]
            assert abs(pa[1]) < 1.0 and abs(pb[1]) < 1.0   # stay inside the corridor
            min_dist = min(min_dist, float(np.hypot(*(pa - pb))))
        # they must actually pass each other, not stall
        assert world._pos[a.slot][0] > 2.0 and world._pos[b.slot][0] < -2.0
        assert min_dist > 0.3, f"minimum separation {min_dist:.3f}"

    def test_wall_repulsion_holds_agent_off(self, triangle_network):
        # walking straight at a wall, the agent stops near the static
        # balance point a_obs * exp((r/2 - d)/b_obs) = umax/tau, about 0.32 m
        env = baseline_environment(triangle_network, walk_speed=WALK)
        wall = [((5.0, -10.0), (5.0, 10.0))]
        world = World(env, AlwaysExitPolicy(), SocialForceParams(), seed=0, obstacles=wall)
        a = _inject(world, 0, (0.0, 0.0), [(20.0, 0.0)], umax=1.389)
        for _ in range(int(15.0 / 0.05)):
            world.step(0.05)
        assert world._pos[a.slot][0] < 5.0 - 0.15

    def test_two_agents_repulsion_pushes_apart(self, lone_world):
        a = _inject(lone_world, 0, (0.0, 0.0), [], umax=1.389)
        b = _inject(lone_world, 1, (0.3, 0.0), [], umax=1.389)
        lone_world.step(0.05)
        assert lone_world._vel[a.slot][0] < 0 < lone_world._vel[b.slot][0]


def _departures(n, origin="Z1", dest="Z2", start=0.0, gap=30.0, speed=1.389):
    return [DepartureEvent(origin, dest, start + i * gap, speed) for i in range(n)]


class TestRunSimulation:
    def test_zero_departures(self, triangle_network):
        env = baseline_environment(triangle_network, walk_speed=WALK)
        records, series = run_simulation(env, [], AlwaysExitPolicy(), seed=1,
                                         slot_s=600.0, max_time=3600.0)
        assert records == []
        assert series.values.sum() == 0

    def test_always_exit_trajectory(self, triangle_network):
        env = baseline_environment(triangle_network, walk_speed=WALK)
        records, _ = run_simulation(env, _departures(1), AlwaysExitPolicy(), seed=1,
                                    slot_s=600.0, max_time=3600.0)
        assert len(records) == 1
        rec = records[0]
        assert rec.exit_reason == "choice"
        assert len(rec.samples) == 1            # spawn point only
        assert rec.visits[0][1] == "A"          # spawn anchor vicinity

    def test_direct_trips_reach_destination(self, triangle_network):
        env = baseline_environment(triangle_network, walk_speed=WALK)
        records, series = run_simulation(env, _departures(5), DirectTripPolicy(), seed=1,
                                         slot_s=600.0, max_time=3600.0)
        assert len(records) == 5
        for rec in records:
            assert [p for _, p in rec.visits][:2] == ["A", "C"]
            assert rec.exit_reason == "choice"
            assert rec.total_distance > 600.0   # network route is 700 m
        assert series.values.sum() > 0

    def test_visit_consistency_with_dense_sampling(self, triangle_network):
        env = baseline_environment(triangle_network, walk_speed=WALK)
        records, _ = run_simulation(env, _departures(3), DirectTripPolicy(), seed=1,
                                    slot_s=600.0, max_time=3600.0, dt=0.05,
                                    sample_every=0.05)
        for rec in records:
            samples = {round(t, 6): (x, y) for t, x, y, _, _ in rec.samples}
            for t, poi in rec.visits:
                x, y = samples[round(t, 6)]
                p = env.network.pois[poi]
                assert math.hypot(x - p.x, y - p.y) <= p.radius + 1e-9

    def test_monotone_cumdist_and_visited(self, triangle_network):
        env = baseline_environment(triangle_network, walk_speed=WALK)
        records, _ = run_simulation(env, _departures(2), DirectTripPolicy(), seed=3,
                                    slot_s=600.0, max_time=3600.0)
        for rec in records:
            times = [t for t, *_ in rec.samples]
            assert times == sorted(times)
            vt = [t for t, _ in rec.visits]
            assert vt == sorted(vt)

    def test_byte_identical_outputs_at_fixed_seed(self, triangle_network, tmp_path):
        env = baseline_environment(triangle_network, walk_speed=WALK)
        outs = []
        for run in range(2):
            records, _ = run_simulation(env, _departures(8, gap=17.0), DirectTripPolicy(),
                                        seed=42, slot_s=600.0, max_time=3600.0)
            tp = tmp_path / f"traj{run}.jsonl"
            ep = tmp_path / f"events{run}.csv"
            save_trajectories_jsonl(records, tp)
            save_events_csv(records, ep)
            outs.append((tp.read_bytes(), ep.read_bytes()))
        assert outs[0] == outs[1]

    def test_stamina_exit(self, triangle_network):
        env = baseline_environment(triangle_network, walk_speed=WALK)

        class NeverExitPolicy:
            stamina_params = (math.log(200.0), 1e-9)   # ~200 m budget

            def decide(self, agent, e, now, rng):
                return "C" if agent.current_poi != "C" else "A"

        records, _ = run_simulation(env, _departures(2), NeverExitPolicy(), seed=5,
                                    slot_s=600.0, max_time=3600.0)
        for rec in records:
            assert rec.exit_reason == "stamina"
            assert rec.total_distance == pytest.approx(200.0, abs=1.0)

    def test_riding_mode_only_on_links(self, demo_network):
        env0 = baseline_environment(demo_network, walk_speed=WALK)
        from flowtwin.environment import InterventionSpec, apply_intervention
        spec = InterventionSpec.from_json({
            "label": "m", "mobility_links": [{"from": "00", "to": "03"}],
            "mobility_speed_kmh": 20.0,
        })
        env = apply_intervention(env0, spec)

        class RideOncePolicy:
            stamina_params = None

            def decide(self, agent, e, now, rng):
                return "03" if not agent.visited else EXIT

        deps = [DepartureEvent("A", "G", 0.0, 1.389)]
        records, _ = run_simulation(env, deps, RideOncePolicy(), seed=2,
                                    slot_s=600.0, max_time=3600.0)
        rec = records[0]
        link = env.link_for("00", "03")
        polyline = [env.network.node_xy(n) for n in link.path]
        riding = [(x, y) for _, x, y, _, m in rec.samples if m == "riding"]
        assert riding, "agent never rode the link"
        for x, y in riding:
            d = min(_point_segment_distance(x, y, p, q)
                    for p, q in zip(polyline[:-1], polyline[1:]))
            assert d < 2.0
        # riding is faster than walking over the same route
        assert rec.exit_time - rec.spawn_time < 1000.0 / 1.389

    def test_unsorted_departures_rejected(self, triangle_network):
        env = baseline_environment(triangle_network, walk_speed=WALK)
        deps = [DepartureEvent("Z1", "Z2", 100.0, 1.0), DepartureEvent("Z1", "Z2", 50.0, 1.0)]
        from flowtwin.errors import ValidationError
        with pytest.raises(ValidationError):
            run_simulation(env, deps, AlwaysExitPolicy(), seed=0)


def _point_segment_distance(px, py, a, b):
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    L2 = dx * dx + dy * dy
    if L2 == 0:
        return math.hypot(px - ax, py - ay)
    t = max(0.0, min(1.0, ((px - ax) * dx + (py - ay) * dy) / L2))
    return math.hypot(px - ax - t * dx, py - ay - t * dy)
