"""Policy evaluation, normalized metrics, and empirical scaling studies.

Rollout estimates and exact tabular computations are kept side by side on
purpose: every shipped environment is small enough to solve exactly, so the
rollout path, the critics, and the training curves can all be checked against
closed-form numbers instead of against themselves.

Safety bookkeeping uses two views of the cost budget. Training and the
multiplier updates live in discounted units (threshold kappa). Episode-level
reporting uses undiscounted sums, normalized by kappa_eval, the undiscounted
budget equivalent to kappa for costs spread uniformly over the step budget:
kappa * T * (1 - gamma) / (1 - gamma^T), which tends to kappa as gamma -> 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import oracles
from .data import BehaviorPolicySpec, Dataset, sample_minibatch
from .envs import CmdpSpec, epsilon_mix, featurize_all, greedy_policy_table, rollout, scripted_safe_table
from .errors import ConfigError
from .nets import AdamState, MlpSpec, adam_step, backward_batch, forward_cached, init_params
from .rng import stream
from .trainers import PolicyHead

_OCCUPANCY_FLOOR = 1e-12


def kappa_eval_default(kappa: float, gamma: float, horizon: int) -> float:
    """Undiscounted budget matching a discounted kappa at a uniform cost rate."""
    return kappa * horizon * (1.0 - gamma) / (1.0 - gamma**horizon)


def policy_to_table(policy, env: CmdpSpec, stochastic: bool = False) -> np.ndarray:
    """Tabular action distribution of a policy on every state.

    Accepts a PolicyHead (greedy one-hot unless stochastic) or a ready-made
    (S, A) table, which is passed through unchanged.
    """
    if isinstance(policy, np.ndarray):
        if policy.shape != (env.n_states, env.n_actions):
            raise ConfigError("policy table has the wrong shape")
        return policy
    logits = policy.logits(featurize_all(env))
    if logits.shape != (env.n_states, env.n_actions):
        raise ConfigError("policy head dimensions do not match the environment")
    if stochastic:
        z = logits - logits.max(axis=1, keepdims=True)
        p = np.exp(z)
        return p / p.sum(axis=1, keepdims=True)
    return oracles.greedy_table(logits)


@dataclass
class EvalReport:
    """Rollout statistics with normalized metrics and per-channel safety flags."""

    reward_mean: float
    reward_std: float
    cost_mean: np.ndarray
    cost_std: np.ndarray
    discounted_reward_mean: float
    discounted_cost_mean: np.ndarray
    normalized_reward: float
    normalized_costs: np.ndarray
    safe: np.ndarray
    kappa: np.ndarray
    kappa_eval: np.ndarray
    r_min: float
    r_max: float
    n_episodes: int
    eval_seeds: tuple[int, ...]

    def header(self) -> list[str]:
        cols = ["n_episodes", "reward_mean", "reward_std", "normalized_reward",
                "discounted_reward_mean", "r_min", "r_max"]
        for j in range(len(self.kappa)):
            cols += [
                f"cost_mean{j}", f"cost_std{j}", f"normalized_cost{j}", f"safe{j}",
                f"discounted_cost_mean{j}", f"kappa{j}", f"kappa_eval{j}",
            ]
        return cols

    def row(self) -> list:
        out = [self.n_episodes, self.reward_mean, self.reward_std, self.normalized_reward,
               self.discounted_reward_mean, self.r_min, self.r_max]
        for j in range(len(self.kappa)):
            out += [
                self.cost_mean[j], self.cost_std[j], self.normalized_costs[j],
                int(self.safe[j]), self.discounted_cost_mean[j],
                self.kappa[j], self.kappa_eval[j],
            ]
        return out


def rollout_eval(
    env: CmdpSpec,
    policy,
    n_episodes: int,
    seeds,
    cost_thresholds,
    stochastic: bool = False,
    r_min: float | None = None,
    r_max: float | None = None,
    kappa_eval=None,
) -> EvalReport:
    """Evaluate by rollout; episodes cycle over the seeds with independent streams."""
    if n_episodes < 1:
        raise ConfigError("need at least one evaluation episode")
    seeds = tuple(int(s) for s in seeds)
    table = policy_to_table(policy, env, stochastic=stochastic)
    kappa = np.asarray(cost_thresholds, dtype=np.float64)
    if kappa.shape != (env.n_costs,):
        raise ConfigError("need one cost threshold per channel")
    rewards, costs = np.zeros(n_episodes), np.zeros((n_episodes, env.n_costs))
    disc_rewards, disc_costs = np.zeros(n_episodes), np.zeros((n_episodes, env.n_costs))
    for i in range(n_episodes):
        rng = stream(seeds[i % len(seeds)], "eval", i)
        traj = rollout(env, table, rng)
        rewards[i] = traj.undiscounted_return
        costs[i] = traj.undiscounted_costs
        disc_rewards[i] = traj.episode_return
        disc_costs[i] = traj.episode_costs
    r_lo = env.r_min_undiscounted if r_min is None else float(r_min)
    r_hi = env.r_max_undiscounted if r_max is None else float(r_max)
    if r_hi <= r_lo:
        raise ConfigError("r_max must exceed r_min")
    if kappa_eval is None:
        k_eval = np.array([kappa_eval_default(k, env.gamma, env.max_steps) for k in kappa])
    else:
        k_eval = np.asarray(kappa_eval, dtype=np.float64)
    norm_costs = costs.mean(axis=0) / k_eval
    return EvalReport(
        reward_mean=float(rewards.mean()),
        reward_std=float(rewards.std()),
        cost_mean=costs.mean(axis=0),
        cost_std=costs.std(axis=0),
        discounted_reward_mean=float(disc_rewards.mean()),
        discounted_cost_mean=disc_costs.mean(axis=0),
        normalized_reward=float((rewards.mean() - r_lo) / (r_hi - r_lo)),
        normalized_costs=norm_costs,
        safe=norm_costs < 1.0,
        kappa=kappa,
        kappa_eval=k_eval,
        r_min=r_lo,
        r_max=r_hi,
        n_episodes=n_episodes,
        eval_seeds=seeds,
    )


@dataclass
class OracleReport:
    """Exact per-channel evaluation of one policy."""

    channel: str
    mode: str
    q: np.ndarray
    v: np.ndarray
    j: float
    residual: float
    iterations: int


def _channel_table(env: CmdpSpec, channel) -> np.ndarray:
    if channel == "reward":
        return env.reward
    return env.costs[int(channel)]


def policy_evaluation_oracle(env: CmdpSpec, policy, channel="reward",
                             stochastic: bool = False, mode: str = "auto") -> OracleReport:
    """Exact policy evaluation for one payoff channel.

    Uses the backward recursion over the episode step budget whenever
    truncation can still matter (gamma^T tail above 1e-9 of the value bound),
    and the stationary fixed point otherwise. The stationary path is solved
    directly as a linear system and its Bellman residual is verified.
    """
    pi = policy_to_table(policy, env, stochastic=stochastic)
    nu = _channel_table(env, channel)
    nu_max = max(float(np.max(nu)), 1e-300)
    if mode == "auto":
        tail = env.gamma**env.max_steps * nu_max / (1.0 - env.gamma)
        mode = "finite" if tail > 1e-9 else "infinite"
    if mode == "finite":
        q, v = oracles.policy_eval_finite(
            env.transition, nu, pi, env.gamma, env.terminal_states, env.max_steps
        )
        residual, iterations = 0.0, env.max_steps
    elif mode == "infinite":
        q, v = oracles.policy_eval_exact(env.transition, nu, pi, env.gamma, env.terminal_states)
        backup = nu + env.gamma * (env.transition @ ((pi * q).sum(axis=1)))
        backup[env.terminal_mask, :] = 0.0
        residual = float(np.max(np.abs(q - backup)))
        iterations = 1
        if residual >= 1e-10:
            raise ConfigError(f"oracle policy evaluation residual {residual} above 1e-10")
    else:
        raise ConfigError(f"unknown oracle mode {mode!r}")
    return OracleReport(
        channel=str(channel),
        mode=mode,
        q=q,
        v=v,
        j=float(env.init_dist @ v),
        residual=residual,
        iterations=iterations,
    )


def oracle_summary(env: CmdpSpec, policy, stochastic: bool = False) -> dict:
    """Exact J for the reward channel and every cost channel."""
    out = {"j_reward": policy_evaluation_oracle(env, policy, "reward", stochastic).j}
    for jc in range(env.n_costs):
        out[f"j_cost{jc}"] = policy_evaluation_oracle(env, policy, jc, stochastic).j
    return out


@dataclass
class ConcentrabilityReport:
    """Occupancy-ratio estimate of distribution shift against the behavior mix."""

    d_pi: np.ndarray
    d_beta: np.ndarray
    c_hat: float
    unvisited_mass: float


def behavior_occupancy(env: CmdpSpec, behavior: BehaviorPolicySpec) -> np.ndarray:
    """Exact occupancy of the episode-level safe/greedy mixture."""
    d_safe = oracles.occupancy_table(
        env.transition,
        epsilon_mix(scripted_safe_table(env), behavior.epsilon_explore),
        env.gamma,
        env.init_dist,
        env.terminal_states,
    )
    d_greedy = oracles.occupancy_table(
        env.transition,
        epsilon_mix(greedy_policy_table(env), behavior.epsilon_explore),
        env.gamma,
        env.init_dist,
        env.terminal_states,
    )
    f = behavior.safe_fraction
    return f * d_safe + (1.0 - f) * d_greedy


def concentrability_estimate(
    env: CmdpSpec, policy, behavior: BehaviorPolicySpec, stochastic: bool = False
) -> ConcentrabilityReport:
    """Max occupancy ratio over behavior-covered pairs, plus uncovered mass."""
    pi = policy_to_table(policy, env, stochastic=stochastic)
    d_pi = oracles.occupancy_table(env.transition, pi, env.gamma, env.init_dist, env.terminal_states)
    d_beta = behavior_occupancy(env, behavior)
    covered = d_beta > _OCCUPANCY_FLOOR
    c_hat = float(np.max(d_pi[covered] / d_beta[covered])) if covered.any() else np.inf
    unvisited = float(d_pi[~covered].sum())
    return ConcentrabilityReport(d_pi=d_pi, d_beta=d_beta, c_hat=c_hat, unvisited_mass=unvisited)


def fit_loglog_slope(ns, errors, floor: float = 1e-6) -> float:
    """OLS slope of log(error + floor) against log(n)."""
    ns = np.asarray(ns, dtype=np.float64)
    errors = np.asarray(errors, dtype=np.float64)
    if ns.shape != errors.shape or ns.size < 2:
        raise ConfigError("need matching n/error columns with at least two points")
    x = np.log(ns)
    y = np.log(errors + floor)
    x_c = x - x.mean()
    return float((x_c @ (y - y.mean())) / (x_c @ x_c))


@dataclass
class ScalingReport:
    """Per-dataset-size training errors and the fitted log-log slope."""

    n_grid: tuple[int, ...]
    seeds: tuple[int, ...]
    cells: list = field(default_factory=list)  # dicts: n, seed, violation, suboptimality, valid
    slope_suboptimality: float = np.nan
    slope_violation: float = np.nan
    d_theta: int = 0
    depth: int = 0
    j_star: float = np.nan

    def mean_errors(self, key: str) -> np.ndarray:
        out = []
        for n in self.n_grid:
            vals = [c[key] for c in self.cells if c["n"] == n and c["valid"]]
            if not vals:
                raise ConfigError(f"no valid cells for dataset size {n}")
            out.append(max(float(np.mean(vals)), 0.0))
        return np.asarray(out)


def dataset_of_size(env: CmdpSpec, behavior: BehaviorPolicySpec, n_transitions: int, seed: int) -> Dataset:
    """Generate episodes until the transition budget is met, then cut to size."""
    from .data import generate_dataset

    n_episodes = max(2 * n_transitions // env.max_steps, n_transitions // 4, 25)
    ds = generate_dataset(env, behavior, n_episodes, seed)
    while ds.n_transitions < n_transitions:
        n_episodes *= 2
        ds = generate_dataset(env, behavior, n_episodes, seed)
    return ds.truncated(n_transitions)


def scaling_sweep(
    env: CmdpSpec,
    behavior: BehaviorPolicySpec,
    estimator_factory,
    n_grid,
    seeds_per_cell: int,
    cost_thresholds,
    seeds=None,
    jobs: int = 1,
) -> ScalingReport:
    """Train at several dataset sizes and fit the error-versus-size trend.

    `estimator_factory(seed)` must return an unfitted trainer. Violation is
    max(0, J_c - kappa) on the worst channel, suboptimality is measured
    against the exact constrained optimum from the occupancy LP; both are
    computed with the exact oracle on the final greedy policy. Cells are
    independent; with jobs > 1 they run on worker threads and results are
    aggregated in (n, seed) order either way.
    """
    n_grid = tuple(int(n) for n in n_grid)
    if len(n_grid) < 4 or any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ConfigError("need at least 4 strictly increasing dataset sizes")
    if np.log10(n_grid[-1] / n_grid[0]) < 1.5:
        raise ConfigError("dataset sizes must span at least 1.5 decades")
    if seeds_per_cell < 3:
        raise ConfigError("each cell needs at least 3 seeds")
    from .trainers import TRAIN_SEEDS

    seeds = tuple(seeds) if seeds is not None else TRAIN_SEEDS[:seeds_per_cell]
    if len(seeds) != seeds_per_cell:
        raise ConfigError("seeds list must match seeds_per_cell")
    kappas = np.asarray(cost_thresholds, dtype=np.float64)
    j_star = oracles.constrained_optimum(
        env.transition, env.reward, list(env.costs), kappas, env.gamma,
        env.init_dist, env.terminal_states,
    )
    report = ScalingReport(n_grid=n_grid, seeds=seeds, j_star=j_star)

    def run_cell(task):
        n, seed = task
        ds = dataset_of_size(env, behavior, n, seed)
        est = estimator_factory(seed)
        cell = {"n": n, "seed": seed, "valid": True,
                "violation": np.nan, "suboptimality": np.nan}
        try:
            est.fit(ds, env)
            summary = oracle_summary(env, est.policy_)
            violations = [max(0.0, summary[f"j_cost{j}"] - kappas[j]) for j in range(env.n_costs)]
            cell["violation"] = max(violations)
            cell["suboptimality"] = j_star - summary["j_reward"]
        except Exception:
            cell["valid"] = False
        spec = est.state_.policy_spec if hasattr(est, "state_") else None
        return cell, spec

    tasks = [(n, seed) for n in n_grid for seed in seeds]
    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_cell, tasks))
    else:
        results = [run_cell(t) for t in tasks]
    for cell, spec in results:
        report.cells.append(cell)
        if report.d_theta == 0 and spec is not None:
            report.d_theta = spec.n_params
            report.depth = spec.depth
    report.slope_suboptimality = fit_loglog_slope(n_grid, report.mean_errors("suboptimality"))
    report.slope_violation = fit_loglog_slope(n_grid, report.mean_errors("violation"))
    return report


def behavior_clone(
    ds: Dataset,
    steps: int = 2000,
    hidden=(64, 64),
    lr: float = 3e-4,
    batch: int = 256,
    seed: int = 101,
) -> PolicyHead:
    """Plain maximum-likelihood policy fit on the dataset actions."""
    spec = MlpSpec(ds.obs_dim, tuple(hidden), ds.n_actions, "relu")
    params = init_params(spec, stream(seed, "bc", "init"))
    opt = AdamState(lr=lr, n_params=spec.n_params)
    rng = stream(seed, "bc", "batch")
    batch_size = min(batch, ds.n_transitions)
    for _ in range(steps):
        idx = sample_minibatch(ds, batch_size, rng)
        obs, actions = ds.obs[idx], ds.action[idx]
        n = obs.shape[0]
        out, acts = forward_cached(spec, params, obs)
        z = out - out.max(axis=1, keepdims=True)
        log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        grad_logits = np.exp(log_probs)
        grad_logits[np.arange(n), actions] -= 1.0
        adam_step(opt, params, backward_batch(spec, params, acts, grad_logits / n))
    return PolicyHead(spec=spec, params=params)


def mean_kl(policy: PolicyHead, reference: PolicyHead, ds: Dataset) -> float:
    """Mean KL(policy || reference) over dataset states; reference floored at 1e-8."""
    total = 0.0
    for lo in range(0, ds.n_transitions, 4096):
        obs = ds.obs[lo : lo + 4096]
        p = policy.probs(obs)
        log_p = policy.log_probs(obs)
        log_q = np.log(np.maximum(reference.probs(obs), 1e-8))
        total += float((p * (log_p - log_q)).sum())
    return total / ds.n_transitions


def kl_monitor(
    policy: PolicyHead,
    ds: Dataset,
    bc_steps: int = 2000,
    bc_hidden=(64, 64),
    bc_lr: float = 3e-4,
    bc_batch: int = 256,
    bc_seed: int = 101,
) -> float:
    """Mean KL of the policy against a freshly behavior-cloned reference.

    Deterministic in the dataset and the fixed seed. This is a proximity
    monitor reported alongside the configured tolerance, not a constraint.
    """
    bc = behavior_clone(ds, steps=bc_steps, hidden=bc_hidden, lr=bc_lr, batch=bc_batch, seed=bc_seed)
    return mean_kl(policy, bc, ds)
