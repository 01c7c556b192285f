import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iov_offload.env import (
    ConfigError,
    EnvConfig,
    OffloadEnv,
    SlotState,
    TaskSpec,
    adjacency,
    link_rate,
    local_latency,
    resource_shares,
    slot_latencies,
    team_reward,
)


def scalar_latency(joint, state, cfg):
    """Independent straight-line evaluation of the latency formulas.

    Deliberately avoids the package's vector helpers: plain python floats,
    explicit loops, log from math.
    """
    out = []
    for i, a in enumerate(joint):
        task = state.tasks[i]
        if a == 0:
            out.append(task.compute_demand / cfg.f_vehicle)
            continue
        load = 0.0
        for j, b in enumerate(joint):
            if b == a:
                load += state.tasks[j].compute_demand
        if a <= cfg.num_rsus:
            px, py = cfg.rsu_positions[a - 1]
            capacity, bandwidth = cfg.f_rsu, cfg.b_rsu
        else:
            px, py = cfg.mbs_position
            capacity, bandwidth = cfg.f_mbs, cfg.b_mbs
        dx = state.positions[i][0] - px
        dy = state.positions[i][1] - py
        dist_sq = dx * dx + dy * dy
        snr = cfg.p_t * state.gains[i][a - 1] / (cfg.noise_power * dist_sq)
        rate = bandwidth * math.log(1.0 + snr, 2)
        out.append(load / capacity + task.data_size / rate)
    return out


def make_state(cfg, seed=0):
    env = OffloadEnv(cfg)
    env.reset(seed)
    return env.slot_state()


# ----------------------------------------------------------------- reset

def test_reset_same_seed_identical():
    env = OffloadEnv(EnvConfig(num_vehicles=4, num_rsus=2))
    a = env.reset(7)
    b = env.reset(7)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


def test_reset_single_vehicle_shape():
    env = OffloadEnv(EnvConfig(num_vehicles=1, num_rsus=1))
    obs = env.reset(0)
    assert len(obs) == 1
    assert obs[0].shape == (4,)


def test_task_sizes_only_from_allowed_set():
    cfg = EnvConfig(num_vehicles=3, num_rsus=1)
    env = OffloadEnv(cfg)
    seen = set()
    for seed in range(1000):
        env.reset(seed)
        for t in env.slot_state().tasks:
            seen.add(t.data_size)
            assert t.data_size in (1.0, 1.5, 2.0)
            rho = t.compute_demand / t.data_size
            assert 100.0 <= rho <= 200.0
    assert seen == {1.0, 1.5, 2.0}


def test_observations_normalized_to_unit_interval():
    env = OffloadEnv(EnvConfig(num_vehicles=6, num_rsus=2))
    for seed in range(20):
        for o in env.reset(seed):
            assert o.shape == (4,)
            assert (o >= 0.0).all() and (o <= 1.0).all()


def test_invalid_config_reports_field_name():
    with pytest.raises(ConfigError, match="num_vehicles"):
        OffloadEnv(EnvConfig(num_vehicles=0))
    with pytest.raises(ConfigError, match="rsu_positions"):
        OffloadEnv(EnvConfig(num_rsus=2, rsu_positions=((0.0, 0.0),)))
    with pytest.raises(ConfigError, match="task_sizes"):
        OffloadEnv(EnvConfig(task_sizes=()))
    with pytest.raises(ConfigError, match="noise_power"):
        OffloadEnv(EnvConfig(noise_power=0.0))


# ---------------------------------------------------------- local latency

def test_local_latency_ratio_one():
    assert local_latency(TaskSpec(1.0, 5e5), 5e5) == 1.0


def test_local_latency_table_constants():
    # 2 Mbit at rho=200 -> 400 megacycles on a 5e5 vehicle CPU
    assert local_latency(TaskSpec(2.0, 400.0), 5e5) == pytest.approx(8.0e-4, rel=1e-12)


def test_local_latency_linear_in_demand():
    base = local_latency(TaskSpec(1.0, 150.0), 5e5)
    assert local_latency(TaskSpec(1.0, 300.0), 5e5) == pytest.approx(2.0 * base, rel=1e-12)


# -------------------------------------------------------------- link rate

def test_link_rate_snr_one_gives_bandwidth():
    # p_t*g/(noise*s^2) == 1  =>  rate == B exactly
    assert link_rate(2e8, 1e-9, 1.0, 1e-9, 1.0) == pytest.approx(2e8, rel=1e-12)


def test_link_rate_snr_three():
    # log2(4) = 2 -> rate = 2B
    b = 2e8
    rate = link_rate(b, 3.0, 1.0, 1.0, 1.0)
    assert rate == pytest.approx(4e8, rel=1e-12)


@given(st.floats(1.0, 1e4), st.floats(1.01, 10.0))
@settings(max_examples=40, deadline=None)
def test_link_rate_decreases_with_distance(dist, factor):
    near = link_rate(2e8, 0.1, 1.0, 1e-9, dist)
    far = link_rate(2e8, 0.1, 1.0, 1e-9, dist * factor)
    assert far < near


def test_link_rate_rejects_degenerate_distance():
    with pytest.raises(ValueError, match="distance"):
        link_rate(2e8, 0.1, 1.0, 1e-9, 0.0)


# -------------------------------------------------------- resource shares

def test_single_vehicle_gets_full_capacity():
    cfg = EnvConfig(num_vehicles=1, num_rsus=1)
    state = make_state(cfg)
    shares = resource_shares([1], state.tasks, cfg)
    assert shares[0] == pytest.approx(cfg.f_rsu, rel=1e-12)


def test_two_vehicle_share_split():
    cfg = EnvConfig(num_vehicles=2, num_rsus=1)
    tasks = (TaskSpec(1.0, 100.0), TaskSpec(2.0, 300.0))
    shares = resource_shares([1, 1], tasks, cfg)
    assert shares[0] == pytest.approx(100.0 / 400.0 * 6e6, rel=1e-12)  # 1.5e6
    assert shares[1] == pytest.approx(300.0 / 400.0 * 6e6, rel=1e-12)  # 4.5e6
    # both compute latencies collapse to load/capacity
    assert tasks[0].compute_demand / shares[0] == pytest.approx(400.0 / 6e6, rel=1e-12)
    assert tasks[1].compute_demand / shares[1] == pytest.approx(400.0 / 6e6, rel=1e-12)


@given(st.integers(0, 10**6))
@settings(max_examples=30, deadline=None)
def test_shares_sum_to_capacity(seed):
    r = np.random.default_rng(seed)
    cfg = EnvConfig(num_vehicles=6, num_rsus=2)
    state = make_state(cfg, seed)
    joint = r.integers(0, cfg.num_actions, size=6)
    shares = resource_shares(joint, state.tasks, cfg)
    for dest in range(1, cfg.num_actions):
        chosen = shares[joint == dest]
        if len(chosen):
            cap = cfg.f_rsu if dest <= cfg.num_rsus else cfg.f_mbs
            assert chosen.sum() == pytest.approx(cap, rel=1e-12)


# -------------------------------------------------------- slot latencies

def test_all_local_is_decoupled():
    cfg = EnvConfig(num_vehicles=4, num_rsus=2)
    state = make_state(cfg, 3)
    out = slot_latencies([0, 0, 0, 0], state, cfg)
    expected = [t.compute_demand / cfg.f_vehicle for t in state.tasks]
    assert np.allclose(out.latencies, expected, rtol=1e-15)
    assert out.loads == {}


def test_slot_latencies_matches_independent_scalar_script():
    cfg = EnvConfig(num_vehicles=2, num_rsus=1, channel_fading="unit")
    state = make_state(cfg, 11)
    for joint in [(1, 1), (1, 2), (0, 1), (2, 2), (0, 0), (2, 1)]:
        ours = slot_latencies(list(joint), state, cfg).latencies
        independent = scalar_latency(joint, state, cfg)
        assert np.allclose(ours, independent, rtol=0, atol=1e-12)


@given(st.integers(0, 10**6))
@settings(max_examples=30, deadline=None)
def test_leaving_a_congested_destination_never_hurts_remainers(seed):
    r = np.random.default_rng(seed)
    cfg = EnvConfig(num_vehicles=5, num_rsus=2)
    state = make_state(cfg, seed)
    joint = r.integers(1, cfg.num_actions, size=5)
    dest = int(joint[0])
    sharers = np.where(joint == dest)[0]
    if len(sharers) < 2:
        joint[1] = dest
        sharers = np.where(joint == dest)[0]
    before = slot_latencies(joint, state, cfg).latencies
    moved = joint.copy()
    moved[sharers[0]] = 0  # send one sharer local
    after = slot_latencies(moved, state, cfg).latencies
    for i in sharers[1:]:
        assert after[i] <= before[i] + 1e-15


@given(st.integers(0, 10**6))
@settings(max_examples=30, deadline=None)
def test_congestion_identity(seed):
    r = np.random.default_rng(seed)
    cfg = EnvConfig(num_vehicles=6, num_rsus=3)
    state = make_state(cfg, seed)
    joint = r.integers(0, cfg.num_actions, size=6)
    out = slot_latencies(joint, state, cfg)
    shares = resource_shares(joint, state.tasks, cfg)
    for i, a in enumerate(joint):
        if a == 0:
            continue
        cap = cfg.f_rsu if a <= cfg.num_rsus else cfg.f_mbs
        compute_part = state.tasks[i].compute_demand / shares[i]
        assert compute_part == pytest.approx(out.loads[int(a)] / cap, abs=1e-12)


# ------------------------------------------------------------ team reward

def test_reward_single_local_vehicle():
    cfg = EnvConfig(num_vehicles=1, num_rsus=1)
    state = make_state(cfg, 5)
    out = slot_latencies([0], state, cfg)
    assert out.penalties[0] == 0.0
    assert out.team_reward == pytest.approx(-out.latencies[0], rel=1e-15)


def test_reward_arithmetic_no_penalty():
    # two latencies below local: reward is just the negative mean
    cfg = EnvConfig(num_vehicles=2, num_rsus=1, penalty_coefficient=1.0)
    lat = np.array([0.2, 0.4])
    local = np.array([0.5, 0.5])
    penalties = 1.0 * np.maximum(0.0, lat - local)
    assert penalties.sum() == 0.0
    reward = -float(np.mean(penalties + lat))
    assert reward == pytest.approx(-0.3, rel=1e-12)


def test_penalty_hinge_contribution():
    # offloaded latency exceeding local by 0.1 with coefficient 1 adds 0.1/I
    cfg = EnvConfig(num_vehicles=2, num_rsus=1, penalty_coefficient=1.0)
    la, local = 0.6, 0.5
    eta = cfg.penalty_coefficient * max(0.0, la - local)
    assert eta == pytest.approx(0.1, rel=1e-12)
    contribution = -(eta + la) / 2
    assert contribution == pytest.approx(-0.35, rel=1e-12)


@given(st.integers(0, 10**6))
@settings(max_examples=30, deadline=None)
def test_reward_decomposition_recomputable(seed):
    r = np.random.default_rng(seed)
    cfg = EnvConfig(num_vehicles=5, num_rsus=2)
    state = make_state(cfg, seed)
    joint = r.integers(0, cfg.num_actions, size=5)
    out = slot_latencies(joint, state, cfg)
    assert team_reward(out, cfg) == pytest.approx(
        -float(np.mean(out.penalties + out.latencies)), abs=0.0
    )
    assert out.team_reward == team_reward(out, cfg)


# -------------------------------------------------------------- adjacency

def test_adjacency_zero_range_is_zero_matrix():
    pos = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    assert np.array_equal(adjacency(pos, 0.0), np.zeros((3, 3)))


def test_adjacency_huge_range_is_complete_graph():
    cfg = EnvConfig(num_vehicles=5, num_rsus=1)
    env = OffloadEnv(cfg)
    env.reset(2)
    a = adjacency(env.slot_state().positions, cfg.road_length + 100.0)
    expected = np.ones((5, 5)) - np.eye(5)
    assert np.array_equal(a, expected)


@given(st.integers(0, 10**6))
@settings(max_examples=100, deadline=None)
def test_adjacency_symmetric_zero_diagonal(seed):
    r = np.random.default_rng(seed)
    pos = r.uniform(0, 2000, size=(6, 2))
    a = adjacency(pos, float(r.uniform(0, 1000)))
    assert np.array_equal(a, a.T)
    assert np.array_equal(np.diag(a), np.zeros(6))
    assert set(np.unique(a)) <= {0.0, 1.0}


# ------------------------------------------------------------------- step

def test_one_slot_horizon_finishes():
    env = OffloadEnv(EnvConfig(num_vehicles=2, num_rsus=1, horizon=1))
    env.reset(0)
    res = env.step([0, 0])
    assert res.done
    with pytest.raises(RuntimeError, match="finished"):
        env.step([0, 0])


def test_step_reward_equals_outcome_reward():
    env = OffloadEnv(EnvConfig(num_vehicles=3, num_rsus=2, horizon=4))
    env.reset(9)
    while True:
        res = env.step([1, 0, 2])
        assert res.reward == res.outcome.team_reward
        if res.done:
            break


def test_position_trajectory_matches_closed_form():
    cfg = EnvConfig(num_vehicles=3, num_rsus=1, horizon=30)
    env = OffloadEnv(cfg)
    env.reset(13)
    start = env.slot_state().positions.copy()
    speeds = np.array([v.speed for v in env._vehicles])
    for t in range(1, cfg.horizon + 1):
        res = env.step([0, 0, 0])
        expected_x = np.mod(start[:, 0] + t * speeds, cfg.road_length)
        got = np.array([o[0] * cfg.road_length for o in res.observations])
        assert np.allclose(got, expected_x, atol=1e-9)
        if res.done:
            break


def test_trajectory_deterministic_given_seed_and_actions():
    cfg = EnvConfig(num_vehicles=3, num_rsus=2, horizon=10)
    actions = [[1, 2, 0], [0, 0, 3], [2, 2, 2]] * 4

    def run():
        env = OffloadEnv(cfg)
        env.reset(21)
        rewards, obs = [], []
        for a in actions[: cfg.horizon]:
            res = env.step(a)
            rewards.append(res.reward)
            obs.append(np.stack(res.observations))
        return rewards, obs

    r1, o1 = run()
    r2, o2 = run()
    assert r1 == r2
    for a, b in zip(o1, o2):
        assert np.array_equal(a, b)


def test_unit_fading_is_deterministic_ones():
    cfg = EnvConfig(num_vehicles=2, num_rsus=1, channel_fading="unit")
    state = make_state(cfg, 4)
    assert np.array_equal(state.gains, np.ones((2, 2)))
