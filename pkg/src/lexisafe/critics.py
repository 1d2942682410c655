"""Value-function critics trained from the offline dataset only.

One Q/V pair serves the reward channel and one pair serves each cost
channel. The Q net regresses onto one-step bootstrapped targets built from
the online V net; the V net regresses onto the soft-updated target Q net
under the asymmetric expectile loss, so no out-of-dataset action is ever
queried. With an expectile above 0.5 the cost V nets lean high on purpose:
underestimating cost-to-go is what the asymmetry is there to prevent.

Q nets consume the observation concatenated with a one-hot action, so a
single code path serves any discrete action count. V nets consume the
observation alone. Targets exist for Q nets only and move via soft updates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalAbort
from .nets import (
    AdamState,
    MlpSpec,
    adam_step,
    backward_batch,
    forward_batch,
    forward_cached,
    init_params,
    soft_update,
)
from .rng import stream


@dataclass(frozen=True)
class ExpectileParams:
    """Expectile levels for the reward and cost value regressions."""

    xi_reward: float = 0.7
    xi_cost: float = 0.7

    def __post_init__(self):
        for name, xi in (("xi_reward", self.xi_reward), ("xi_cost", self.xi_cost)):
            if not 0.5 < xi < 1.0:
                raise ConfigError(f"{name} must lie strictly inside (0.5, 1.0)")


def expectile_loss(u, xi: float):
    """Asymmetric squared error: xi * u^2 for u >= 0, (1 - xi) * u^2 otherwise."""
    if not 0.0 < xi < 1.0:
        raise ConfigError("expectile level must lie in (0, 1)")
    u = np.asarray(u, dtype=np.float64)
    w = np.where(u >= 0.0, xi, 1.0 - xi)
    out = w * u * u
    return float(out) if out.ndim == 0 else out


@dataclass
class CriticPair:
    """Q net with target copy plus V net, each with its own optimizer."""

    q_spec: MlpSpec
    v_spec: MlpSpec
    q_params: np.ndarray
    q_target: np.ndarray
    v_params: np.ndarray
    q_opt: AdamState
    v_opt: AdamState

    @classmethod
    def create(cls, q_spec, v_spec, lr_q, lr_v, rng_q, rng_v):
        q_params = init_params(q_spec, rng_q)
        v_params = init_params(v_spec, rng_v)
        return cls(
            q_spec=q_spec,
            v_spec=v_spec,
            q_params=q_params,
            q_target=q_params.copy(),
            v_params=v_params,
            q_opt=AdamState(lr=lr_q, n_params=q_spec.n_params),
            v_opt=AdamState(lr=lr_v, n_params=v_spec.n_params),
        )


@dataclass
class CriticSet:
    """Reward critic pair plus one pair per cost channel."""

    obs_dim: int
    n_actions: int
    reward: CriticPair
    costs: list[CriticPair]

    @property
    def n_cost_channels(self) -> int:
        return len(self.costs)


def init_critics(
    obs_dim: int,
    n_actions: int,
    n_cost_channels: int,
    hidden_dims,
    activation: str,
    lr_q: float,
    lr_v: float,
    seed: int,
) -> CriticSet:
    q_spec = MlpSpec(obs_dim + n_actions, tuple(hidden_dims), 1, activation)
    v_spec = MlpSpec(obs_dim, tuple(hidden_dims), 1, activation)
    pairs = {}
    for role in ["reward"] + [f"cost{j}" for j in range(n_cost_channels)]:
        pairs[role] = CriticPair.create(
            q_spec,
            v_spec,
            lr_q,
            lr_v,
            stream(seed, "critic", role, "q"),
            stream(seed, "critic", role, "v"),
        )
    return CriticSet(
        obs_dim=obs_dim,
        n_actions=n_actions,
        reward=pairs["reward"],
        costs=[pairs[f"cost{j}"] for j in range(n_cost_channels)],
    )


def q_input(n_actions: int, obs: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """Observation concatenated with a one-hot action encoding."""
    out = np.zeros((obs.shape[0], obs.shape[1] + n_actions))
    out[:, : obs.shape[1]] = obs
    out[np.arange(obs.shape[0]), obs.shape[1] + actions] = 1.0
    return out


def _batch_q_input(n_actions: int, batch: dict) -> np.ndarray:
    """Q-net input rows for a minibatch, built once and cached on the batch."""
    cached = batch.get("q_in")
    if cached is None:
        cached = q_input(n_actions, batch["obs"], batch["action"])
        batch["q_in"] = cached
    return cached


def q_values(pair: CriticPair, n_actions: int, obs, actions, use_target=False) -> np.ndarray:
    params = pair.q_target if use_target else pair.q_params
    return forward_batch(pair.q_spec, params, q_input(n_actions, obs, actions))[:, 0]


def v_values(pair: CriticPair, obs) -> np.ndarray:
    return forward_batch(pair.v_spec, pair.v_params, obs)[:, 0]


def _check_finite(value: float, what: str, step: int | None):
    if not np.isfinite(value):
        raise NumericalAbort(f"{what} became non-finite", step=step)


def update_critic_pair(
    pair: CriticPair,
    n_actions: int,
    batch: dict,
    nu: np.ndarray,
    gamma: float,
    xi: float,
    tau: float,
    step: int | None = None,
) -> dict:
    """One gradient step on the Q loss, then one on the expectile V loss.

    The Q bootstrap uses the most recent online V and masks the bootstrap on
    terminal transitions; the V regression target comes from the target Q.
    Returns the pre-step loss values plus the largest |Q| seen in the batch.
    """
    obs, next_obs, done = batch["obs"], batch["next_obs"], batch["done"]
    n = obs.shape[0]

    # Q step: squared Bellman error against nu + gamma * V(s')
    v_next = v_values(pair, next_obs)
    target = nu + gamma * (1.0 - done) * v_next
    q_in = _batch_q_input(n_actions, batch)
    q_out, q_acts = forward_cached(pair.q_spec, pair.q_params, q_in)
    q = q_out[:, 0]
    diff = q - target
    loss_q = float(np.mean(diff * diff))
    _check_finite(loss_q, "critic Q loss", step)
    grad_q = backward_batch(pair.q_spec, pair.q_params, q_acts, (2.0 * diff / n)[:, None])
    adam_step(pair.q_opt, pair.q_params, grad_q)

    # V step: expectile regression of V(s) onto the target-network Q(s, a)
    q_tgt = forward_batch(pair.q_spec, pair.q_target, q_in)[:, 0]
    v_out, v_acts = forward_cached(pair.v_spec, pair.v_params, obs)
    v = v_out[:, 0]
    u = q_tgt - v
    w = np.where(u >= 0.0, xi, 1.0 - xi)
    loss_v = float(np.mean(w * u * u))
    _check_finite(loss_v, "critic V loss", step)
    grad_v = backward_batch(pair.v_spec, pair.v_params, v_acts, (-2.0 * w * u / n)[:, None])
    adam_step(pair.v_opt, pair.v_params, grad_v)

    soft_update(pair.q_target, pair.q_params, tau)
    return {
        "loss_q": loss_q,
        "loss_v": loss_v,
        "q_absmax": float(np.max(np.abs(q))),
    }


def update_reward_critics(
    critics: CriticSet, batch: dict, gamma: float, xi_reward: float, tau: float, step=None
) -> dict:
    return update_critic_pair(
        critics.reward, critics.n_actions, batch, batch["reward"], gamma, xi_reward, tau, step
    )


def update_cost_critics(
    critics: CriticSet, batch: dict, gamma: float, xi_cost: float, tau: float, j: int, step=None
) -> dict:
    if not 0 <= j < critics.n_cost_channels:
        raise ConfigError(f"cost channel {j} out of range")
    return update_critic_pair(
        critics.costs[j], critics.n_actions, batch, batch["costs"][:, j], gamma, xi_cost, tau, step
    )


def advantage_batch(pair: CriticPair, n_actions: int, obs, actions) -> np.ndarray:
    """Q(s, a) - V(s) on the online networks."""
    return q_values(pair, n_actions, obs, actions) - v_values(pair, obs)


def advantage_on_batch(pair: CriticPair, n_actions: int, batch: dict) -> np.ndarray:
    """Batch advantage reusing the cached Q-net input rows."""
    q_in = _batch_q_input(n_actions, batch)
    q = forward_batch(pair.q_spec, pair.q_params, q_in)[:, 0]
    return q - v_values(pair, batch["obs"])


def advantage(critics: CriticSet, obs, action, channel) -> float:
    """Single-point advantage for the reward channel or a cost channel index."""
    pair = critics.reward if channel == "reward" else critics.costs[int(channel)]
    obs = np.asarray(obs, dtype=np.float64)[None, :]
    actions = np.asarray([action], dtype=np.int64)
    return float(advantage_batch(pair, critics.n_actions, obs, actions)[0])


def critic_arrays(critics: CriticSet) -> dict[str, np.ndarray]:
    """Named parameter arrays for checkpointing."""
    out = {
        "reward_q": critics.reward.q_params,
        "reward_q_target": critics.reward.q_target,
        "reward_v": critics.reward.v_params,
    }
    for j, pair in enumerate(critics.costs):
        out[f"cost{j}_q"] = pair.q_params
        out[f"cost{j}_q_target"] = pair.q_target
        out[f"cost{j}_v"] = pair.v_params
    return out
