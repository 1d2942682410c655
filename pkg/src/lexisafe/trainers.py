"""Lexicographic policy optimization on a shared actor network.

Every gradient step runs in a fixed order: reward critics, cost critics (one
pair per channel), smoothed batch cost estimates, multiplier updates, then
the actor phases. Cost phases reweight behavior cloning by exp(-beta_c * A_c)
so low-cost-advantage actions dominate; the reward phase reweights by
exp(beta_r * A_r - sum_j lambda_j * A_c_j) so reward advantage is pursued
only where the multiplier-scaled cost advantages allow it. Multipliers rise
whenever the smoothed cost estimate sits above its budget and decay toward
zero (never below) otherwise.

Two schedules are provided. "interleaved" runs every actor phase at every
step. "staged" walks the phases one at a time on a fixed step budget while
critics, smoothing, and multipliers keep updating throughout; the logged
curves then show each cost channel being driven under its budget in priority
order before reward climbs.

The single-cost and multi-cost paths share one step implementation, so a
multi-cost run with one channel reproduces the single-cost run bit for bit.

The estimator classes at the bottom wrap this machinery in the scikit-learn
fit/predict protocol so trained policies compose with that ecosystem.
"""

from __future__ import annotations

from contextlib import nullcontext
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    threadpool_limits = None

from . import serialize
from .critics import (
    CriticSet,
    advantage_on_batch,
    init_critics,
    update_cost_critics,
    update_reward_critics,
    v_values,
)
from .data import Dataset, sample_minibatch
from .envs import CmdpSpec, featurize_all
from .errors import ConfigError, NumericalAbort
from .nets import AdamState, MlpSpec, adam_step, backward_batch, forward_batch, forward_cached, init_params
from .oracles import greedy_table, policy_eval_finite
from .rng import stream

TRAIN_SEEDS = (7, 17, 27, 77, 777)
TEST_SEEDS = (14, 42, 84, 98, 49)


@dataclass(frozen=True)
class TrainConfig:
    """Fully resolved hyperparameters for one training run."""

    gamma: float = 0.995
    cost_thresholds: tuple[float, ...] = (0.5,)
    beta_c: tuple[float, ...] = (1.0,)
    beta_r: float = 1.0
    xi_reward: float = 0.7
    xi_cost: float = 0.7
    lr_actor: float = 3e-4
    lr_q: float = 3e-5
    lr_v: float = 3e-5
    lr_lambda: float = 1e-4
    batch_size: int = 256
    total_steps: int = 50_000
    smoothing_alpha: float = 0.05
    target_tau: float = 0.005
    kl_tolerance: float = 1.0
    weight_clip_max: float = 100.0
    hidden_dims: tuple[int, ...] = (128, 128)
    activation: str = "relu"
    schedule_mode: str = "interleaved"
    staged_phase_steps: tuple[int, ...] | None = None
    cost_priority: tuple[int, ...] | None = None
    seed: int = 7
    oracle_every: int = 0
    weights: tuple[float, ...] | None = None  # weighted-baseline only

    @property
    def n_costs(self) -> int:
        return len(self.cost_thresholds)

    def validate(self) -> None:
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError("gamma must lie in (0, 1)")
        if any(k <= 0 for k in self.cost_thresholds):
            raise ConfigError("cost thresholds must be positive")
        if len(self.beta_c) != self.n_costs:
            raise ConfigError("need one beta_c per cost channel")
        if any(b < 0 for b in self.beta_c) or self.beta_r < 0:
            raise ConfigError("inverse temperatures must be nonnegative")
        for name, lr in (
            ("lr_actor", self.lr_actor),
            ("lr_q", self.lr_q),
            ("lr_v", self.lr_v),
        ):
            if lr <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.lr_lambda < 0:
            raise ConfigError("lr_lambda must be nonnegative")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.total_steps < 0:
            raise ConfigError("total_steps must be nonnegative")
        if not 0.0 <= self.smoothing_alpha <= 1.0:
            raise ConfigError("smoothing_alpha must lie in [0, 1]")
        if not 0.0 < self.target_tau <= 1.0:
            raise ConfigError("target_tau must lie in (0, 1]")
        if self.weight_clip_max <= 0:
            raise ConfigError("weight_clip_max must be positive")
        if self.schedule_mode not in ("interleaved", "staged"):
            raise ConfigError("schedule_mode must be 'interleaved' or 'staged'")
        if self.schedule_mode == "staged":
            if self.staged_phase_steps is None or len(self.staged_phase_steps) != self.n_costs + 1:
                raise ConfigError("staged mode needs one phase budget per cost plus reward")
            if sum(self.staged_phase_steps) != self.total_steps:
                raise ConfigError("staged phase budgets must sum to total_steps")
        if self.cost_priority is not None and sorted(self.cost_priority) != list(range(self.n_costs)):
            raise ConfigError("cost_priority must be a permutation of the channels")

    @property
    def priority(self) -> tuple[int, ...]:
        return self.cost_priority if self.cost_priority is not None else tuple(range(self.n_costs))


def default_staged_budgets(total_steps: int, n_costs: int) -> tuple[int, ...]:
    """Step budgets per phase: 50/50 for one cost, 40/30/30 for two, then
    an even cost split of 70% of the run for deeper hierarchies."""
    if n_costs == 1:
        fracs = [0.5, 0.5]
    elif n_costs == 2:
        fracs = [0.4, 0.3, 0.3]
    else:
        fracs = [0.7 / n_costs] * n_costs + [0.3]
    steps = [int(total_steps * f) for f in fracs]
    steps[-1] = total_steps - sum(steps[:-1])
    return tuple(steps)


@dataclass
class PolicyHead:
    """Categorical policy: logits network plus parameter snapshot."""

    spec: MlpSpec
    params: np.ndarray

    @property
    def n_actions(self) -> int:
        return self.spec.output_dim

    def logits(self, obs: np.ndarray) -> np.ndarray:
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        return forward_batch(self.spec, self.params, obs)

    def log_probs(self, obs: np.ndarray) -> np.ndarray:
        z = self.logits(obs)
        z = z - z.max(axis=1, keepdims=True)
        return z - np.log(np.exp(z).sum(axis=1, keepdims=True))

    def probs(self, obs: np.ndarray) -> np.ndarray:
        return np.exp(self.log_probs(obs))

    def act(self, obs: np.ndarray, stochastic: bool = False, rng=None) -> int:
        """Greedy by default; ties break to the lowest action index."""
        if stochastic:
            p = self.probs(obs)[0]
            u = rng.random()
            return min(int(np.searchsorted(np.cumsum(p), u, side="right")), self.n_actions - 1)
        return int(np.argmax(self.logits(obs)[0]))

    def copy(self) -> "PolicyHead":
        return PolicyHead(spec=self.spec, params=self.params.copy())

    def save(self, path) -> int:
        meta = {
            "input_dim": self.spec.input_dim,
            "hidden_dims": list(self.spec.hidden_dims),
            "output_dim": self.spec.output_dim,
            "activation": self.spec.activation,
        }
        return serialize.save_checkpoint(path, "policy", meta, {"policy": self.params})

    @classmethod
    def load(cls, path) -> "PolicyHead":
        header, arrays = serialize.load_checkpoint(path)
        if header.get("kind") != "policy":
            raise ConfigError(f"{path} is not a policy checkpoint")
        spec = MlpSpec(
            int(header["input_dim"]),
            tuple(header["hidden_dims"]),
            int(header["output_dim"]),
            str(header["activation"]),
        )
        return cls(spec=spec, params=arrays["policy"])


@dataclass
class TrainState:
    """Mutable training state: actor, critics, multipliers, smoothing, streams."""

    policy_spec: MlpSpec
    policy_params: np.ndarray
    policy_opt: AdamState
    critics: CriticSet
    lambdas: np.ndarray
    smoothed_costs: np.ndarray
    smoothing_started: np.ndarray
    step: int
    rng_batch: np.random.Generator
    n_costs: int


def init_train_state(obs_dim: int, n_actions: int, n_costs: int, cfg: TrainConfig,
                     n_cost_critics: int | None = None) -> TrainState:
    policy_spec = MlpSpec(obs_dim, cfg.hidden_dims, n_actions, cfg.activation)
    n_cc = n_costs if n_cost_critics is None else n_cost_critics
    return TrainState(
        policy_spec=policy_spec,
        policy_params=init_params(policy_spec, stream(cfg.seed, "policy")),
        policy_opt=AdamState(lr=cfg.lr_actor, n_params=policy_spec.n_params),
        critics=init_critics(
            obs_dim, n_actions, n_cc, cfg.hidden_dims, cfg.activation,
            cfg.lr_q, cfg.lr_v, cfg.seed,
        ),
        lambdas=np.zeros(n_costs),
        smoothed_costs=np.zeros(n_costs),
        smoothing_started=np.zeros(n_costs, dtype=bool),
        step=0,
        rng_batch=stream(cfg.seed, "batch"),
        n_costs=n_costs,
    )


# ---------------------------------------------------------------------------
# Regression weights and scalar updates
# ---------------------------------------------------------------------------


def _clipped_exp(exponent, clip: float):
    """exp(exponent) capped exactly at clip, without overflow."""
    log_clip = np.log(clip)
    exponent = np.asarray(exponent, dtype=np.float64)
    out = np.where(exponent >= log_clip, clip, np.exp(np.minimum(exponent, log_clip)))
    return float(out) if out.ndim == 0 else out


def awr_weight_cost(adv_c, beta_c: float, clip: float):
    """min(exp(-beta_c * adv_c), clip): low cost advantage means high weight."""
    if clip <= 0:
        raise ConfigError("weight clip must be positive")
    return _clipped_exp(-beta_c * np.asarray(adv_c, dtype=np.float64), clip)


def awr_weight_reward(adv_r, adv_c, beta_r: float, lambdas, clip: float):
    """min(exp(beta_r * adv_r - sum_j lambda_j * adv_c_j), clip)."""
    if clip <= 0:
        raise ConfigError("weight clip must be positive")
    lambdas = np.asarray(lambdas, dtype=np.float64)
    if np.any(lambdas < 0):
        raise ConfigError("lambdas must be nonnegative")
    adv_c = np.asarray(adv_c, dtype=np.float64)
    penalty = adv_c @ lambdas if adv_c.ndim == 2 else float(lambdas @ adv_c)
    return _clipped_exp(beta_r * np.asarray(adv_r, dtype=np.float64) - penalty, clip)


def lambda_update(state: TrainState, j: int, cost_estimate: float, cfg: TrainConfig) -> float:
    """Projected ascent on constraint violation: never below zero."""
    if cost_estimate < 0:
        raise ConfigError("cost estimate must be nonnegative")
    kappa = cfg.cost_thresholds[j]
    state.lambdas[j] = max(0.0, state.lambdas[j] + cfg.lr_lambda * (cost_estimate - kappa))
    return state.lambdas[j]


def smooth_cost_estimate(state: TrainState, j: int, batch: dict, cfg: TrainConfig) -> float:
    """Exponentially smoothed mean of the cost V net over batch states.

    The raw batch mean is floored at zero: costs are nonnegative, so a
    negative reading is critic noise, and the smoothed estimate must stay a
    valid cost for the multiplier update.
    """
    estimate = max(0.0, float(np.mean(v_values(state.critics.costs[j], batch["obs"]))))
    if not state.smoothing_started[j]:
        state.smoothed_costs[j] = estimate
        state.smoothing_started[j] = True
    else:
        a = cfg.smoothing_alpha
        state.smoothed_costs[j] = (1.0 - a) * state.smoothed_costs[j] + a * estimate
    return float(state.smoothed_costs[j])


# ---------------------------------------------------------------------------
# Actor steps
# ---------------------------------------------------------------------------


def _actor_step(state: TrainState, batch: dict, weights: np.ndarray, cfg: TrainConfig) -> tuple[float, float]:
    """One weighted negative-log-likelihood step on dataset actions only."""
    obs, actions = batch["obs"], batch["action"]
    n = obs.shape[0]
    out, acts = forward_cached(state.policy_spec, state.policy_params, obs)
    z = out - out.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1, keepdims=True))
    log_probs = z - log_norm
    loss = float(-np.mean(weights * log_probs[np.arange(n), actions]))
    if not np.isfinite(loss):
        raise NumericalAbort("actor loss became non-finite", step=state.step)
    grad_logits = np.exp(log_probs) * weights[:, None]
    grad_logits[np.arange(n), actions] -= weights
    grad = backward_batch(state.policy_spec, state.policy_params, acts, grad_logits / n)
    adam_step(state.policy_opt, state.policy_params, grad)
    return loss, float(weights.max())


def _cost_advantage(state: TrainState, batch: dict, j: int) -> np.ndarray:
    """Cost advantage for channel j, cached on the batch.

    Within one training step the critics do not change between actor phases,
    so the cost phase and the reward phase share identical advantage values.
    """
    cache = batch.setdefault("adv_c", {})
    if j not in cache:
        cache[j] = advantage_on_batch(state.critics.costs[j], state.critics.n_actions, batch)
    return cache[j]


def policy_loss_cost(state: TrainState, batch: dict, j: int, cfg: TrainConfig) -> tuple[float, float]:
    """Cost-phase actor step for channel j; returns (pre-step loss, max weight)."""
    adv = _cost_advantage(state, batch, j)
    weights = awr_weight_cost(adv, cfg.beta_c[j], cfg.weight_clip_max)
    return _actor_step(state, batch, weights, cfg)


def policy_loss_reward(state: TrainState, batch: dict, cfg: TrainConfig,
                       adv_r: np.ndarray | None = None) -> tuple[float, float]:
    """Reward-phase actor step with multiplier-penalized cost advantages."""
    if adv_r is None:
        adv_r = advantage_on_batch(state.critics.reward, state.critics.n_actions, batch)
    if state.n_costs and state.critics.n_cost_channels:
        adv_c = np.stack([_cost_advantage(state, batch, j) for j in range(state.n_costs)], axis=1)
        weights = awr_weight_reward(adv_r, adv_c, cfg.beta_r, state.lambdas, cfg.weight_clip_max)
    else:
        weights = _clipped_exp(cfg.beta_r * adv_r, cfg.weight_clip_max)
    return _actor_step(state, batch, weights, cfg)


# ---------------------------------------------------------------------------
# Training steps
# ---------------------------------------------------------------------------


def phase_of_step(step: int, cfg: TrainConfig) -> int:
    """Active phase index in staged mode: 0..n_costs-1 cost phases, n_costs reward."""
    budgets = cfg.staged_phase_steps
    acc = 0
    for i, b in enumerate(budgets):
        acc += b
        if step < acc:
            return i
    return len(budgets) - 1


def _metric_columns(n_costs: int, oracle: bool) -> list[str]:
    cols = ["step", "phase", "loss_q_reward", "loss_v_reward"]
    for j in range(n_costs):
        cols += [f"loss_q_cost{j}", f"loss_v_cost{j}"]
    for j in range(n_costs):
        cols += [f"cost_smooth{j}", f"lambda{j}"]
    for j in range(n_costs):
        cols += [f"loss_actor_cost{j}"]
    cols += ["loss_actor_reward", "weight_max", "q_absmax"]
    if oracle:
        cols += ["oracle_return"]
        for j in range(n_costs):
            cols += [f"oracle_cost{j}", f"oracle_norm_cost{j}"]
    return cols


def _oracle_probe(state: TrainState, env: CmdpSpec, cfg: TrainConfig) -> dict:
    """Exact evaluation of the current greedy policy, for the training curves."""
    logits = forward_batch(state.policy_spec, state.policy_params, featurize_all(env))
    pi = greedy_table(logits)
    out = {}
    _, v_r = policy_eval_finite(env.transition, env.reward, pi, env.gamma, env.terminal_states, env.max_steps)
    out["oracle_return"] = float(env.init_dist @ v_r)
    for j in range(env.n_costs):
        _, v_c = policy_eval_finite(env.transition, env.costs[j], pi, env.gamma, env.terminal_states, env.max_steps)
        jc = float(env.init_dist @ v_c)
        out[f"oracle_cost{j}"] = jc
        out[f"oracle_norm_cost{j}"] = jc / cfg.cost_thresholds[j]
    return out


def train_step_mc(state: TrainState, ds: Dataset, cfg: TrainConfig, env: CmdpSpec | None = None) -> dict:
    """One multi-cost gradient step; returns the metrics row for this step."""
    step = state.step
    idx = sample_minibatch(ds, cfg.batch_size, state.rng_batch)
    batch = ds.gather(idx)
    row = {"step": step}

    res = update_reward_critics(state.critics, batch, cfg.gamma, cfg.xi_reward, cfg.target_tau, step)
    row["loss_q_reward"], row["loss_v_reward"] = res["loss_q"], res["loss_v"]
    q_absmax = res["q_absmax"]
    for j in range(state.n_costs):
        res = update_cost_critics(state.critics, batch, cfg.gamma, cfg.xi_cost, cfg.target_tau, j, step)
        row[f"loss_q_cost{j}"], row[f"loss_v_cost{j}"] = res["loss_q"], res["loss_v"]
        q_absmax = max(q_absmax, res["q_absmax"])
    for j in range(state.n_costs):
        row[f"cost_smooth{j}"] = smooth_cost_estimate(state, j, batch, cfg)
    for j in range(state.n_costs):
        row[f"lambda{j}"] = lambda_update(state, j, state.smoothed_costs[j], cfg)

    staged = cfg.schedule_mode == "staged"
    phase = phase_of_step(step, cfg) if staged else -1
    row["phase"] = phase
    weight_max = 0.0
    for pos, j in enumerate(cfg.priority):
        if not staged or phase == pos:
            loss, wmax = policy_loss_cost(state, batch, j, cfg)
            row[f"loss_actor_cost{j}"] = loss
            weight_max = max(weight_max, wmax)
    if not staged or phase == state.n_costs:
        loss, wmax = policy_loss_reward(state, batch, cfg)
        row["loss_actor_reward"] = loss
        weight_max = max(weight_max, wmax)
    row["weight_max"] = weight_max
    row["q_absmax"] = q_absmax

    if env is not None and cfg.oracle_every > 0 and step % cfg.oracle_every == 0:
        row.update(_oracle_probe(state, env, cfg))
    state.step += 1
    return row


def train_step_sc(state: TrainState, ds: Dataset, cfg: TrainConfig, env: CmdpSpec | None = None) -> dict:
    """Single-cost step; identical to the multi-cost step with one channel."""
    if state.n_costs != 1:
        raise ConfigError("single-cost training requires exactly one cost channel")
    return train_step_mc(state, ds, cfg, env)


def train_step_weighted_baseline(
    state: TrainState, ds: Dataset, cfg: TrainConfig, weights, env: CmdpSpec | None = None
) -> dict:
    """Flat-objective baseline: plain IQL on reward minus weighted costs."""
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0):
        raise ConfigError("baseline cost weights must be nonnegative")
    step = state.step
    idx = sample_minibatch(ds, cfg.batch_size, state.rng_batch)
    batch = dict(ds.gather(idx))
    batch["reward"] = batch["reward"] - batch["costs"] @ w
    row = {"step": step, "phase": -1}
    res = update_reward_critics(state.critics, batch, cfg.gamma, cfg.xi_reward, cfg.target_tau, step)
    row["loss_q_reward"], row["loss_v_reward"] = res["loss_q"], res["loss_v"]
    row["q_absmax"] = res["q_absmax"]
    loss, wmax = policy_loss_reward(state, batch, cfg)
    row["loss_actor_reward"] = loss
    row["weight_max"] = wmax
    if env is not None and cfg.oracle_every > 0 and step % cfg.oracle_every == 0:
        row.update(_oracle_probe(state, env, cfg))
    state.step += 1
    return row


def extract_policy(state: TrainState) -> PolicyHead:
    """Immutable snapshot of the current actor."""
    return PolicyHead(spec=state.policy_spec, params=state.policy_params.copy())


def state_arrays(state: TrainState) -> dict[str, np.ndarray]:
    from .critics import critic_arrays

    out = {"policy": state.policy_params, "lambdas": state.lambdas, "smoothed_costs": state.smoothed_costs}
    out.update(critic_arrays(state.critics))
    return out


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------


class _OfflineTrainer(BaseEstimator):
    """Shared fit/predict plumbing; subclasses define the per-step update."""

    mode = ""

    def _resolved_config(self, ds: Dataset) -> TrainConfig:
        raise NotImplementedError

    def _step(self, state, ds, cfg, env):
        raise NotImplementedError

    def _n_cost_critics(self, n_costs: int) -> int:
        return n_costs

    def fit(self, dataset: Dataset, env: CmdpSpec | None = None, checkpoint_cb=None):
        """Train on an offline dataset; `env` enables exact-oracle curve logging."""
        if env is not None:
            if (env.n_states, env.n_actions, env.n_costs) != (
                dataset.obs_dim,
                dataset.n_actions,
                dataset.n_costs,
            ):
                raise ConfigError("dataset dimensions do not match the environment")
        cfg = self._resolved_config(dataset)
        if env is not None and abs(env.gamma - cfg.gamma) > 1e-12:
            raise ConfigError(
                f"config gamma {cfg.gamma} disagrees with environment gamma {env.gamma}"
            )
        cfg.validate()
        state = init_train_state(
            dataset.obs_dim, dataset.n_actions, cfg.n_costs, cfg,
            n_cost_critics=self._n_cost_critics(cfg.n_costs),
        )
        self.config_ = cfg
        self.state_ = state
        self.metrics_ = []
        self.n_costs_ = cfg.n_costs
        # the batched net math runs fastest on one BLAS thread at these sizes
        limits = threadpool_limits(limits=1) if threadpool_limits is not None else nullcontext()
        try:
            with limits:
                for _ in range(cfg.total_steps):
                    self.metrics_.append(self._step(state, dataset, cfg, env))
                    if checkpoint_cb is not None and state.step % 1000 == 0:
                        checkpoint_cb(state)
        finally:
            self.policy_ = extract_policy(state)
        return self

    def predict(self, obs: np.ndarray) -> np.ndarray:
        """Greedy action indices for a batch of observations."""
        logits = self.policy_.logits(obs)
        return logits.argmax(axis=1)

    def predict_proba(self, obs: np.ndarray) -> np.ndarray:
        return self.policy_.probs(obs)

    def _broadcast(self, value, n: int, name: str) -> tuple[float, ...]:
        if np.isscalar(value):
            return tuple([float(value)] * n)
        out = tuple(float(v) for v in value)
        if len(out) != n:
            raise ConfigError(f"{name} must be scalar or length {n}")
        return out


class LexiSafeSC(_OfflineTrainer):
    """Single-cost lexicographic trainer (safety phase, then reward phase)."""

    mode = "sc"

    def __init__(
        self,
        gamma=0.995,
        cost_threshold=0.5,
        beta_c=1.0,
        beta_r=1.0,
        xi_reward=0.7,
        xi_cost=0.7,
        lr_actor=3e-4,
        lr_q=3e-5,
        lr_v=3e-5,
        lr_lambda=1e-4,
        batch_size=256,
        total_steps=50_000,
        smoothing_alpha=0.05,
        target_tau=0.005,
        kl_tolerance=1.0,
        weight_clip_max=100.0,
        hidden_dims=(128, 128),
        activation="relu",
        schedule_mode="interleaved",
        staged_phase_steps=None,
        seed=7,
        oracle_every=0,
    ):
        self.gamma = gamma
        self.cost_threshold = cost_threshold
        self.beta_c = beta_c
        self.beta_r = beta_r
        self.xi_reward = xi_reward
        self.xi_cost = xi_cost
        self.lr_actor = lr_actor
        self.lr_q = lr_q
        self.lr_v = lr_v
        self.lr_lambda = lr_lambda
        self.batch_size = batch_size
        self.total_steps = total_steps
        self.smoothing_alpha = smoothing_alpha
        self.target_tau = target_tau
        self.kl_tolerance = kl_tolerance
        self.weight_clip_max = weight_clip_max
        self.hidden_dims = hidden_dims
        self.activation = activation
        self.schedule_mode = schedule_mode
        self.staged_phase_steps = staged_phase_steps
        self.seed = seed
        self.oracle_every = oracle_every

    def _resolved_config(self, ds: Dataset) -> TrainConfig:
        if ds.n_costs != 1:
            raise ConfigError("LexiSafeSC needs a single-cost dataset")
        staged = self.staged_phase_steps
        if self.schedule_mode == "staged" and staged is None:
            staged = default_staged_budgets(self.total_steps, 1)
        return TrainConfig(
            gamma=self.gamma,
            cost_thresholds=(float(self.cost_threshold),),
            beta_c=(float(self.beta_c),),
            beta_r=self.beta_r,
            xi_reward=self.xi_reward,
            xi_cost=self.xi_cost,
            lr_actor=self.lr_actor,
            lr_q=self.lr_q,
            lr_v=self.lr_v,
            lr_lambda=self.lr_lambda,
            batch_size=self.batch_size,
            total_steps=self.total_steps,
            smoothing_alpha=self.smoothing_alpha,
            target_tau=self.target_tau,
            kl_tolerance=self.kl_tolerance,
            weight_clip_max=self.weight_clip_max,
            hidden_dims=tuple(self.hidden_dims),
            activation=self.activation,
            schedule_mode=self.schedule_mode,
            staged_phase_steps=tuple(staged) if staged is not None else None,
            seed=self.seed,
            oracle_every=self.oracle_every,
        )

    def _step(self, state, ds, cfg, env):
        return train_step_sc(state, ds, cfg, env)


class LexiSafeMC(_OfflineTrainer):
    """Multi-cost lexicographic trainer with per-channel priority ordering."""

    mode = "mc"

    def __init__(
        self,
        gamma=0.995,
        cost_thresholds=(0.5,),
        beta_c=1.0,
        beta_r=1.0,
        xi_reward=0.7,
        xi_cost=0.7,
        lr_actor=3e-4,
        lr_q=3e-5,
        lr_v=3e-5,
        lr_lambda=1e-4,
        batch_size=256,
        total_steps=50_000,
        smoothing_alpha=0.05,
        target_tau=0.005,
        kl_tolerance=1.0,
        weight_clip_max=100.0,
        hidden_dims=(128, 128),
        activation="relu",
        schedule_mode="interleaved",
        staged_phase_steps=None,
        cost_priority=None,
        seed=7,
        oracle_every=0,
    ):
        self.gamma = gamma
        self.cost_thresholds = cost_thresholds
        self.beta_c = beta_c
        self.beta_r = beta_r
        self.xi_reward = xi_reward
        self.xi_cost = xi_cost
        self.lr_actor = lr_actor
        self.lr_q = lr_q
        self.lr_v = lr_v
        self.lr_lambda = lr_lambda
        self.batch_size = batch_size
        self.total_steps = total_steps
        self.smoothing_alpha = smoothing_alpha
        self.target_tau = target_tau
        self.kl_tolerance = kl_tolerance
        self.weight_clip_max = weight_clip_max
        self.hidden_dims = hidden_dims
        self.activation = activation
        self.schedule_mode = schedule_mode
        self.staged_phase_steps = staged_phase_steps
        self.cost_priority = cost_priority
        self.seed = seed
        self.oracle_every = oracle_every

    def _resolved_config(self, ds: Dataset) -> TrainConfig:
        thresholds = self._broadcast(self.cost_thresholds, ds.n_costs, "cost_thresholds")
        staged = self.staged_phase_steps
        if self.schedule_mode == "staged" and staged is None:
            staged = default_staged_budgets(self.total_steps, ds.n_costs)
        return TrainConfig(
            gamma=self.gamma,
            cost_thresholds=thresholds,
            beta_c=self._broadcast(self.beta_c, ds.n_costs, "beta_c"),
            beta_r=self.beta_r,
            xi_reward=self.xi_reward,
            xi_cost=self.xi_cost,
            lr_actor=self.lr_actor,
            lr_q=self.lr_q,
            lr_v=self.lr_v,
            lr_lambda=self.lr_lambda,
            batch_size=self.batch_size,
            total_steps=self.total_steps,
            smoothing_alpha=self.smoothing_alpha,
            target_tau=self.target_tau,
            kl_tolerance=self.kl_tolerance,
            weight_clip_max=self.weight_clip_max,
            hidden_dims=tuple(self.hidden_dims),
            activation=self.activation,
            schedule_mode=self.schedule_mode,
            staged_phase_steps=tuple(staged) if staged is not None else None,
            cost_priority=tuple(self.cost_priority) if self.cost_priority is not None else None,
            seed=self.seed,
            oracle_every=self.oracle_every,
        )

    def _step(self, state, ds, cfg, env):
        return train_step_mc(state, ds, cfg, env)


class WeightedIQL(_OfflineTrainer):
    """Flat weighted-sum baseline: IQL on reward minus weighted costs."""

    mode = "weighted"

    def __init__(
        self,
        weights=(1.0,),
        gamma=0.995,
        cost_thresholds=(0.5,),
        beta_r=1.0,
        xi_reward=0.7,
        lr_actor=3e-4,
        lr_q=3e-5,
        lr_v=3e-5,
        batch_size=256,
        total_steps=50_000,
        target_tau=0.005,
        weight_clip_max=100.0,
        hidden_dims=(128, 128),
        activation="relu",
        seed=7,
        oracle_every=0,
    ):
        self.weights = weights
        self.gamma = gamma
        self.cost_thresholds = cost_thresholds
        self.beta_r = beta_r
        self.xi_reward = xi_reward
        self.lr_actor = lr_actor
        self.lr_q = lr_q
        self.lr_v = lr_v
        self.batch_size = batch_size
        self.total_steps = total_steps
        self.target_tau = target_tau
        self.weight_clip_max = weight_clip_max
        self.hidden_dims = hidden_dims
        self.activation = activation
        self.seed = seed
        self.oracle_every = oracle_every

    def _n_cost_critics(self, n_costs: int) -> int:
        return 0  # the weighted objective folds costs into the reward channel

    def _resolved_config(self, ds: Dataset) -> TrainConfig:
        return TrainConfig(
            gamma=self.gamma,
            cost_thresholds=self._broadcast(self.cost_thresholds, ds.n_costs, "cost_thresholds"),
            beta_c=tuple([0.0] * ds.n_costs),
            beta_r=self.beta_r,
            xi_reward=self.xi_reward,
            lr_actor=self.lr_actor,
            lr_q=self.lr_q,
            lr_v=self.lr_v,
            lr_lambda=0.0,
            batch_size=self.batch_size,
            total_steps=self.total_steps,
            target_tau=self.target_tau,
            weight_clip_max=self.weight_clip_max,
            hidden_dims=tuple(self.hidden_dims),
            activation=self.activation,
            seed=self.seed,
            oracle_every=self.oracle_every,
            weights=self._broadcast(self.weights, ds.n_costs, "weights"),
        )

    def _step(self, state, ds, cfg, env):
        return train_step_weighted_baseline(state, ds, cfg, cfg.weights, env)
