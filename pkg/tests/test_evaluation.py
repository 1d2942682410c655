import numpy as np
import pytest

import lexisafe as lx
from lexisafe.data import BehaviorPolicySpec
from lexisafe.envs import CmdpSpec, epsilon_mix, greedy_policy_table, safe_policy_table, scripted_safe_table
from lexisafe.errors import ConfigError
from lexisafe.evaluation import (
    behavior_clone,
    behavior_occupancy,
    concentrability_estimate,
    fit_loglog_slope,
    kappa_eval_default,
    kl_monitor,
    mean_kl,
    policy_evaluation_oracle,
    policy_to_table,
    rollout_eval,
    scaling_sweep,
)
from lexisafe.nets import MlpSpec
from lexisafe.oracles import occupancy_table
from lexisafe.rng import stream
from lexisafe.trainers import PolicyHead


def all_left(env):
    table = np.zeros((env.n_states, env.n_actions))
    table[:, 0] = 1.0
    return table


def test_kappa_eval_formula():
    # uniform-rate conversion; approaches kappa itself as gamma -> 1
    assert abs(kappa_eval_default(0.5, 0.9, 40) - 0.5 * 40 * 0.1 / (1 - 0.9**40)) < 1e-15
    assert abs(kappa_eval_default(0.5, 0.9999999, 40) - 0.5) < 1e-4


def test_rollout_eval_always_left_is_safe(chain_env):
    report = rollout_eval(chain_env, all_left(chain_env), 50, seeds=(14, 42), cost_thresholds=(0.1,))
    assert report.normalized_costs[0] == 0.0
    assert report.safe[0]
    assert report.reward_mean == 0.0
    assert report.normalized_reward == 0.0


def test_rollout_eval_boundary_cost_is_unsafe(chain_env):
    # exactly at the budget: normalized cost 1 counts as unsafe
    greedy = greedy_policy_table(chain_env)
    base = rollout_eval(chain_env, greedy, 40, seeds=(14,), cost_thresholds=(0.1,))
    pinned = rollout_eval(
        chain_env, greedy, 40, seeds=(14,), cost_thresholds=(0.1,),
        kappa_eval=(base.cost_mean[0],),
    )
    assert pinned.normalized_costs[0] == 1.0
    assert not pinned.safe[0]


def test_rollout_eval_matches_oracle_within_3_sigma(chain_env):
    table = epsilon_mix(greedy_policy_table(chain_env), 0.2)
    report = rollout_eval(chain_env, table, 10_000, seeds=(14, 42, 84, 98, 49), cost_thresholds=(0.1,))
    oracle_cost = policy_evaluation_oracle(chain_env, table, channel=0).j
    empirical = rollout_eval  # keep it readable below
    mean_disc = report.discounted_cost_mean[0]
    # 3 sigma of the mean from the rollout spread itself
    rng = stream(0, "tmp")
    # recompute per-episode discounted costs for the sigma
    costs = []
    for i in range(10_000):
        r = stream((14, 42, 84, 98, 49)[i % 5], "eval", i)
        costs.append(lx.envs.rollout(chain_env, table, r).episode_costs[0])
    sigma = np.std(costs) / np.sqrt(len(costs))
    assert abs(mean_disc - oracle_cost) <= 3 * sigma


def test_oracle_zero_channel_is_zero(grid_env):
    import dataclasses

    nulled = dataclasses.replace(grid_env, costs=np.zeros_like(grid_env.costs))
    table = epsilon_mix(greedy_policy_table(nulled), 0.3)
    rep = policy_evaluation_oracle(nulled, table, channel=0)
    assert np.all(rep.q == 0.0) and rep.j == 0.0
    # a policy restricted to zero-cost actions also pays nothing in total
    safe_j = policy_evaluation_oracle(grid_env, safe_policy_table(grid_env), channel=0).j
    assert safe_j == 0.0


def test_oracle_absorbing_state_geometric_value():
    # one live state looping onto itself with reward 1 at gamma = 0.5: the
    # infinite-horizon value is 1 / (1 - gamma) = 2
    p = np.zeros((2, 1, 2))
    p[0, 0, 0] = 1.0
    p[1, 0, 1] = 1.0
    spec = CmdpSpec(
        name="loop",
        n_states=2,
        n_actions=1,
        n_costs=1,
        transition=p,
        reward=np.array([[1.0], [0.0]]),
        costs=np.zeros((1, 2, 1)),
        gamma=0.5,
        init_dist=np.array([1.0, 0.0]),
        max_steps=10_000,
        terminal_states=frozenset({1}),
        r_max_bound=1.0,
        c_max_bound=1.0,
    )
    table = np.ones((2, 1))
    rep = policy_evaluation_oracle(spec, table, channel="reward")
    assert rep.mode == "infinite"
    assert abs(rep.j - 2.0) < 1e-10
    assert rep.residual < 1e-10


def test_oracle_matches_brute_force_monte_carlo():
    # vectorized independent rollout simulator, 1e6 episodes
    env = lx.make_grid_twocost(4, 4, seed=0)
    table = np.full((env.n_states, env.n_actions), 1.0 / env.n_actions)
    oracle = policy_evaluation_oracle(env, table, channel="reward").j

    n = 1_000_000
    rng = np.random.default_rng(123)
    cum_p = np.cumsum(env.transition, axis=2)
    cum_pi = np.cumsum(table, axis=1)
    state = np.full(n, int(env.init_dist.argmax()))
    alive = np.ones(n, dtype=bool)
    total = np.zeros(n)
    g = 1.0
    terminal = np.zeros(env.n_states, dtype=bool)
    for t in sorted(env.terminal_states):
        terminal[t] = True
    for _ in range(env.max_steps):
        act_u = rng.random(n)
        actions = (cum_pi[state] < act_u[:, None]).sum(axis=1)
        actions = np.minimum(actions, env.n_actions - 1)
        total += np.where(alive, g * env.reward[state, actions], 0.0)
        nxt_u = rng.random(n)
        rows = cum_p[state, actions]
        nxt = (rows < nxt_u[:, None]).sum(axis=1)
        nxt = np.minimum(nxt, env.n_states - 1)
        state = np.where(alive, nxt, state)
        alive = alive & ~terminal[state]
        g *= env.gamma
        if not alive.any():
            break
    sigma = total.std() / np.sqrt(n)
    assert abs(total.mean() - oracle) <= 3 * sigma


def test_oracle_bellman_identity(grid_env):
    pi = epsilon_mix(greedy_policy_table(grid_env), 0.3)
    rep = policy_evaluation_oracle(grid_env, pi, channel="reward", mode="infinite")
    q = rep.q
    backup = grid_env.reward + grid_env.gamma * (grid_env.transition @ ((pi * q).sum(axis=1)))
    backup[grid_env.terminal_mask, :] = 0.0
    assert np.max(np.abs(q - backup)) < 1e-9


def test_occupancy_tables_sum_to_one(chain_env, grid_env):
    for env in (chain_env, grid_env):
        for table in (all_left(env), epsilon_mix(greedy_policy_table(env), 0.1)):
            occ = occupancy_table(env.transition, table, env.gamma, env.init_dist, env.terminal_states)
            assert abs(occ.sum() - 1.0) < 1e-9
            assert np.all(occ >= -1e-15)


def test_concentrability_of_behavior_itself_is_one(chain_env):
    behavior = BehaviorPolicySpec(safe_fraction=1.0, epsilon_explore=0.2)
    table = epsilon_mix(scripted_safe_table(chain_env), 0.2)
    rep = concentrability_estimate(chain_env, table, behavior)
    assert abs(rep.c_hat - 1.0) < 1e-6
    assert rep.unvisited_mass == 0.0


def test_concentrability_deterministic_vs_uniform_is_action_count():
    # one live state, four actions: deterministic policy concentrates all the
    # occupancy on one pair, uniform spreads it; the ratio is exactly 4
    p = np.zeros((2, 4, 2))
    p[0, :, 1] = 1.0
    p[1, :, 1] = 1.0
    d0 = np.array([1.0, 0.0])
    det = np.zeros((2, 4))
    det[:, 0] = 1.0
    uni = np.full((2, 4), 0.25)
    occ_det = occupancy_table(p, det, 0.9, d0, {1})
    occ_uni = occupancy_table(p, uni, 0.9, d0, {1})
    covered = occ_uni > 1e-12
    assert abs(np.max(occ_det[covered] / occ_uni[covered]) - 4.0) < 1e-9


def test_concentrability_finite_with_exploration(chain_env):
    rep = concentrability_estimate(
        chain_env, greedy_policy_table(chain_env), BehaviorPolicySpec(0.5, 0.1)
    )
    assert np.isfinite(rep.c_hat)
    assert rep.c_hat >= 1.0
    assert rep.unvisited_mass == 0.0


def test_fit_loglog_slope_sanity():
    ns = np.array([500, 1500, 5000, 15000, 50000], dtype=float)
    assert abs(fit_loglog_slope(ns, np.full(5, 0.37))) < 1e-12
    errs = 1000.0 / np.sqrt(ns)
    assert abs(fit_loglog_slope(ns, errs) - (-0.5)) < 1e-6


def test_scaling_sweep_validation(chain_env):
    behavior = BehaviorPolicySpec()
    factory = lambda seed: lx.LexiSafeSC(total_steps=1)
    with pytest.raises(ConfigError):
        scaling_sweep(chain_env, behavior, factory, [100], 3, (0.1,))
    with pytest.raises(ConfigError):
        scaling_sweep(chain_env, behavior, factory, [100, 200, 300, 400], 3, (0.1,))  # < 1.5 decades
    with pytest.raises(ConfigError):
        scaling_sweep(chain_env, behavior, factory, [100, 300, 1000, 3200], 2, (0.1,))


def test_kl_monitor_zero_for_clone_itself(chain_dataset):
    bc = behavior_clone(chain_dataset, steps=300, hidden=(16,), seed=5)
    assert abs(mean_kl(bc, bc, chain_dataset)) < 1e-12


def test_kl_nonnegative(chain_env, chain_dataset):
    head_spec = MlpSpec(chain_env.n_states, (16,), chain_env.n_actions)
    rng_params = lx.nets.init_params(head_spec, stream(3, "p"))
    head = PolicyHead(spec=head_spec, params=rng_params)
    bc = behavior_clone(chain_dataset, steps=300, hidden=(16,), seed=5)
    assert mean_kl(head, bc, chain_dataset) >= 0.0


def test_kl_closed_form_single_state():
    # pi = (0.9, 0.1) against reference (0.5, 0.5) on a one-state dataset
    from lexisafe.data import Dataset

    ds = Dataset(
        env_name="synthetic", obs_dim=1, n_actions=2, n_costs=1, behavior_mix=0.5,
        gen_seed=0, obs=np.ones((10, 1)), action=np.zeros(10, dtype=np.int64),
        reward=np.zeros(10), costs=np.zeros((10, 1)), next_obs=np.ones((10, 1)),
        done=np.ones(10, dtype=np.uint8), episode_id=np.arange(10, dtype=np.int64),
    )
    spec = MlpSpec(1, (), 2)

    def head_with_probs(p):
        params = np.zeros(spec.n_params)
        (w, b), = lx.nets.unpack(spec, params)
        b[...] = np.log(np.asarray(p))
        return PolicyHead(spec=spec, params=params)

    pi = head_with_probs([0.9, 0.1])
    ref = head_with_probs([0.5, 0.5])
    expected = 0.9 * np.log(0.9 / 0.5) + 0.1 * np.log(0.1 / 0.5)
    assert abs(mean_kl(pi, ref, ds) - expected) < 1e-12


def test_policy_to_table_shapes_and_modes(chain_env):
    spec = MlpSpec(chain_env.n_states, (8,), chain_env.n_actions)
    head = PolicyHead(spec=spec, params=lx.nets.init_params(spec, stream(1, "h")))
    greedy = policy_to_table(head, chain_env)
    soft = policy_to_table(head, chain_env, stochastic=True)
    assert np.all(greedy.sum(axis=1) == 1.0)
    assert np.allclose(soft.sum(axis=1), 1.0)
    assert set(np.unique(greedy)) <= {0.0, 1.0}
    wrong = PolicyHead(spec=MlpSpec(3, (), 2), params=np.zeros(MlpSpec(3, (), 2).n_params))
    with pytest.raises(ConfigError):
        policy_to_table(wrong, chain_env)


def test_eval_report_csv_roundtrip_fields(chain_env):
    report = rollout_eval(chain_env, all_left(chain_env), 10, seeds=(14,), cost_thresholds=(0.1,))
    header, row = report.header(), report.row()
    assert len(header) == len(row)
    assert "normalized_reward" in header and "safe0" in header
