import dataclasses

import numpy as np
import pytest

import lexisafe as lx
from lexisafe.critics import (
    CriticSet,
    ExpectileParams,
    advantage,
    advantage_batch,
    expectile_loss,
    init_critics,
    q_values,
    update_cost_critics,
    update_critic_pair,
    update_reward_critics,
    v_values,
)
from lexisafe.data import BehaviorPolicySpec, generate_dataset, sample_minibatch
from lexisafe.envs import epsilon_mix, greedy_policy_table
from lexisafe.errors import ConfigError
from lexisafe.nets import unpack
from lexisafe.oracles import policy_eval_exact
from lexisafe.rng import stream
from util_tables import empirical_expectile, table_critic_pair, v_table_net


def test_expectile_loss_examples():
    assert expectile_loss(0.0, 0.7) == 0.0
    assert abs(expectile_loss(2.0, 0.7) - 2.8) < 1e-12
    assert abs(expectile_loss(-2.0, 0.7) - 1.2) < 1e-12


def test_expectile_loss_symmetric_case():
    for u in np.linspace(-3, 3, 13):
        assert abs(expectile_loss(u, 0.5) - 0.5 * u * u) < 1e-15


def test_expectile_loss_monotone_in_level():
    xis = np.linspace(0.1, 0.9, 9)
    for u in (0.5, 2.0):
        losses = [expectile_loss(u, xi) for xi in xis]
        assert np.all(np.diff(losses) > 0)
    for u in (-0.5, -2.0):
        losses = [expectile_loss(u, xi) for xi in xis]
        assert np.all(np.diff(losses) < 0)


def test_expectile_params_validation():
    with pytest.raises(ConfigError):
        ExpectileParams(xi_reward=0.5)
    with pytest.raises(ConfigError):
        ExpectileParams(xi_cost=1.0)
    with pytest.raises(ConfigError):
        expectile_loss(1.0, 0.0)


def _full_batch(ds):
    return ds.gather(np.arange(ds.n_transitions))


def _dataset_fixed_point(env, ds, gamma, xi, tol=1e-14):
    """IQL expectile fixed point over the dataset, computed tabularly.

    Deterministic env (slip 0): every (s, a) in the data has one reward and
    one next state. Rewards come from the dataset rows (they carry the
    on-disk float32 quantization). Iterates q = r + gamma * v(s') with v the
    empirical expectile of q over dataset actions; returns (q table, v).
    """
    n_s, n_a = env.n_states, env.n_actions
    states = ds.obs.argmax(axis=1)
    counts = np.zeros((n_s, n_a))
    np.add.at(counts, (states, ds.action), 1.0)
    r_tab = np.zeros((n_s, n_a))
    next_tab = np.zeros((n_s, n_a), dtype=int)
    done_tab = np.zeros((n_s, n_a), dtype=bool)
    for i in range(ds.n_transitions):
        s, a = states[i], ds.action[i]
        r_tab[s, a] = ds.reward[i]
        next_tab[s, a] = int(ds.next_obs[i].argmax())
        done_tab[s, a] = bool(ds.done[i])
    q = np.zeros((n_s, n_a))
    v = np.zeros(n_s)
    for _ in range(20_000):
        q_new = np.zeros((n_s, n_a))
        for s in range(n_s):
            for a in range(n_a):
                if counts[s, a] == 0:
                    continue
                boot = 0.0 if done_tab[s, a] else v[next_tab[s, a]]
                q_new[s, a] = r_tab[s, a] + gamma * boot
        v_new = np.zeros(n_s)
        for s in range(n_s):
            mask = counts[s] > 0
            if mask.any():
                v_new[s] = empirical_expectile(q_new[s, mask], counts[s, mask], xi)
        if max(np.abs(q_new - q).max(), np.abs(v_new - v).max()) < tol:
            return q_new, v_new
        q, v = q_new, v_new
    raise AssertionError("fixed point did not converge")


def test_perfectly_fitted_critics_are_stationary():
    # plant the exact dataset fixed point inside real nets: one full-batch
    # update must leave losses at their minimum and parameters unmoved
    env = lx.make_chain_hazard(7, slip=0.0)
    ds = generate_dataset(env, BehaviorPolicySpec(0.5, 0.0), 300, seed=2)
    gamma, xi = env.gamma, 0.7
    q_tab, v_tab = _dataset_fixed_point(env, ds, gamma, xi)
    pair = table_critic_pair(env.n_states, env.n_actions, q_tab, v_tab)
    batch = _full_batch(ds)

    states = ds.obs.argmax(axis=1)
    u = q_tab[states, ds.action] - v_tab[states]
    expected_v_loss = float(np.mean(np.where(u >= 0, xi, 1 - xi) * u * u))

    before_q = pair.q_params.copy()
    before_v = pair.v_params.copy()
    res = update_critic_pair(pair, env.n_actions, batch, batch["reward"], gamma, xi, 0.005)
    assert res["loss_q"] < 1e-20
    assert abs(res["loss_v"] - expected_v_loss) < 1e-10
    assert np.max(np.abs(pair.q_params - before_q)) < 1e-8
    assert np.max(np.abs(pair.v_params - before_v)) < 1e-8


def test_gamma_zero_regresses_to_immediate_reward(chain_env):
    ds = generate_dataset(chain_env, BehaviorPolicySpec(0.5, 0.3), 300, seed=3)
    critics = init_critics(chain_env.n_states, chain_env.n_actions, 0, (64, 64), "relu", 1e-3, 1e-3, seed=1)
    rng = stream(1, "batch")
    for step in range(2500):
        batch = ds.gather(sample_minibatch(ds, 256, rng))
        update_reward_critics(critics, batch, 0.0, 0.7, 0.005, step)
    states = ds.obs.argmax(axis=1)
    seen = sorted(set(zip(states.tolist(), ds.action.tolist())))
    feats = np.eye(chain_env.n_states)
    errs = []
    for s, a in seen:
        q = q_values(critics.reward, chain_env.n_actions, feats[s][None, :], np.array([a]))[0]
        errs.append(abs(q - chain_env.reward[s, a]))
    assert max(errs) < 0.05


def test_zero_reward_environment_drives_critics_to_zero(chain_env):
    env = dataclasses.replace(chain_env, reward=np.zeros_like(chain_env.reward))
    ds = generate_dataset(env, BehaviorPolicySpec(0.5, 0.3), 200, seed=4)
    critics = init_critics(env.n_states, env.n_actions, 0, (32, 32), "relu", 3e-4, 3e-4, seed=2)
    rng = stream(2, "batch")
    loss_q = loss_v = None
    for step in range(5000):
        batch = ds.gather(sample_minibatch(ds, 256, rng))
        res = update_reward_critics(critics, batch, env.gamma, 0.7, 0.005, step)
        loss_q, loss_v = res["loss_q"], res["loss_v"]
    assert loss_q < 1e-4 and loss_v < 1e-4


def test_zero_cost_channel_converges_to_zero(chain_env):
    env = dataclasses.replace(chain_env, costs=np.zeros_like(chain_env.costs))
    ds = generate_dataset(env, BehaviorPolicySpec(0.5, 0.3), 200, seed=5)
    critics = init_critics(env.n_states, env.n_actions, 1, (32, 32), "relu", 3e-4, 3e-4, seed=3)
    rng = stream(3, "batch")
    for step in range(5000):
        batch = ds.gather(sample_minibatch(ds, 256, rng))
        res = update_cost_critics(critics, batch, env.gamma, 0.7, 0.005, 0, step)
    assert res["loss_q"] < 1e-4 and res["loss_v"] < 1e-4


def test_advantage_zeroed_output_layer(chain_env):
    critics = init_critics(chain_env.n_states, chain_env.n_actions, 1, (16,), "relu", 1e-3, 1e-3, seed=4)
    for pair in [critics.reward, critics.costs[0]]:
        for spec, params in ((pair.q_spec, pair.q_params), (pair.v_spec, pair.v_params)):
            w, b = unpack(spec, params)[-1]
            w[...] = 0.0
            b[...] = 0.0
    obs = np.eye(chain_env.n_states)[2]
    assert advantage(critics, obs, 1, "reward") == 0.0
    assert advantage(critics, obs, 1, 0) == 0.0


def test_advantage_is_q_minus_v_definitionally(chain_env):
    critics = init_critics(chain_env.n_states, chain_env.n_actions, 1, (16, 16), "relu", 1e-3, 1e-3, seed=5)
    obs = np.eye(chain_env.n_states)[3][None, :]
    act = np.array([2])
    adv = advantage(critics, obs[0], 2, "reward")
    q = q_values(critics.reward, chain_env.n_actions, obs, act)[0]
    v = v_values(critics.reward, obs)[0]
    assert abs(adv - (q - v)) < 1e-12


def test_exact_policy_advantage_has_zero_mean_under_policy(chain_env):
    # with critics planted at exact Q^pi and V^pi, sum_a pi(a|s) A(s,a) = 0
    pi = epsilon_mix(greedy_policy_table(chain_env), 0.2)
    q_pi, _ = policy_eval_exact(
        chain_env.transition, chain_env.reward, pi, chain_env.gamma, chain_env.terminal_states
    )
    v_pi = (pi * q_pi).sum(axis=1)
    pair = table_critic_pair(chain_env.n_states, chain_env.n_actions, q_pi, v_pi)
    critics = CriticSet(obs_dim=chain_env.n_states, n_actions=chain_env.n_actions, reward=pair, costs=[])
    feats = np.eye(chain_env.n_states)
    for s in range(chain_env.n_states):
        mean_adv = sum(
            pi[s, a] * advantage(critics, feats[s], a, "reward")
            for a in range(chain_env.n_actions)
        )
        assert abs(mean_adv) < 1e-9


def test_loss_sequence_bit_reproducible(chain_env, chain_dataset):
    def run():
        critics = init_critics(chain_env.n_states, chain_env.n_actions, 1, (32, 32), "relu", 3e-4, 3e-4, seed=9)
        rng = stream(9, "batch")
        losses = []
        for step in range(40):
            batch = chain_dataset.gather(sample_minibatch(chain_dataset, 128, rng))
            r1 = update_reward_critics(critics, batch, chain_env.gamma, 0.7, 0.005, step)
            r2 = update_cost_critics(critics, batch, chain_env.gamma, 0.7, 0.005, 0, step)
            losses.append((r1["loss_q"], r1["loss_v"], r2["loss_q"], r2["loss_v"]))
        return losses

    assert run() == run()


def test_critic_outputs_stay_in_soft_range(chain_env, chain_dataset):
    critics = init_critics(chain_env.n_states, chain_env.n_actions, 1, (64, 64), "relu", 3e-5, 3e-5, seed=10)
    rng = stream(10, "batch")
    bound = chain_env.r_max_bound / (1.0 - chain_env.gamma) + 0.1
    for step in range(500):
        batch = chain_dataset.gather(sample_minibatch(chain_dataset, 256, rng))
        res = update_reward_critics(critics, batch, chain_env.gamma, 0.7, 0.005, step)
        assert res["q_absmax"] <= bound


def test_target_only_moves_by_soft_update(chain_env, chain_dataset):
    critics = init_critics(chain_env.n_states, chain_env.n_actions, 0, (16,), "relu", 1e-3, 1e-3, seed=11)
    pair = critics.reward
    target_before = pair.q_target.copy()
    online_before = pair.q_params.copy()
    batch = chain_dataset.gather(sample_minibatch(chain_dataset, 64, stream(11, "b")))
    update_reward_critics(critics, batch, chain_env.gamma, 0.7, 0.005, 0)
    expected = (1 - 0.005) * target_before + 0.005 * pair.q_params
    assert np.allclose(pair.q_target, expected, atol=1e-15)
    assert not np.array_equal(pair.q_params, online_before)
