"""Offline dataset generation, binary serialization, and minibatch sampling.

Datasets are columnar. On disk they use the "LXSD" container (see
serialize.py) with float32 storage; in memory every float column is widened
to float64. Generation therefore quantizes through float32 once so that a
save/load round trip is bit-exact against the in-memory dataset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import serialize
from .envs import CmdpSpec, epsilon_mix, greedy_policy_table, rollout, scripted_safe_table
from .errors import ConfigError, HeaderMismatchError
from .rng import stream


@dataclass(frozen=True)
class BehaviorPolicySpec:
    """Per-episode mixture of a safe and a reward-greedy scripted policy."""

    safe_fraction: float = 0.5
    epsilon_explore: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.safe_fraction <= 1.0:
            raise ConfigError("safe_fraction must lie in [0, 1]")
        if not 0.0 <= self.epsilon_explore <= 1.0:
            raise ConfigError("epsilon_explore must lie in [0, 1]")


_HEADER_KEYS = (
    "env_name",
    "obs_dim",
    "n_actions",
    "n_costs",
    "n_transitions",
    "behavior_mix",
    "gen_seed",
)


@dataclass
class Dataset:
    """Columnar offline dataset; immutable by convention after construction."""

    env_name: str
    obs_dim: int
    n_actions: int
    n_costs: int
    behavior_mix: float
    gen_seed: int
    obs: np.ndarray  # (N, obs_dim) f64
    action: np.ndarray  # (N,) int64
    reward: np.ndarray  # (N,) f64
    costs: np.ndarray  # (N, n_costs) f64
    next_obs: np.ndarray  # (N, obs_dim) f64
    done: np.ndarray  # (N,) uint8
    episode_id: np.ndarray  # (N,) int64

    @property
    def n_transitions(self) -> int:
        return self.obs.shape[0]

    def validate(self) -> None:
        n = self.n_transitions
        cols = (self.action, self.reward, self.costs, self.next_obs, self.done, self.episode_id)
        if any(col.shape[0] != n for col in cols):
            raise HeaderMismatchError("dataset columns disagree in length")
        if self.obs.shape[1] != self.obs_dim or self.next_obs.shape[1] != self.obs_dim:
            raise HeaderMismatchError("observation width disagrees with header")
        if self.costs.shape[1] != self.n_costs:
            raise HeaderMismatchError("cost width disagrees with header")
        if np.any(np.diff(self.episode_id) < 0):
            raise ConfigError("episode ids must be nondecreasing")

    def gather(self, idx: np.ndarray) -> dict:
        """Assemble a minibatch (float64 views/copies) from row indices."""
        return {
            "obs": self.obs[idx],
            "action": self.action[idx],
            "reward": self.reward[idx],
            "costs": self.costs[idx],
            "next_obs": self.next_obs[idx],
            "done": self.done[idx].astype(np.float64),
        }

    def truncated(self, n: int) -> "Dataset":
        """First-n-rows copy (used by dataset-size sweeps)."""
        if not 1 <= n <= self.n_transitions:
            raise ConfigError("truncation length out of range")
        return Dataset(
            env_name=self.env_name,
            obs_dim=self.obs_dim,
            n_actions=self.n_actions,
            n_costs=self.n_costs,
            behavior_mix=self.behavior_mix,
            gen_seed=self.gen_seed,
            obs=self.obs[:n].copy(),
            action=self.action[:n].copy(),
            reward=self.reward[:n].copy(),
            costs=self.costs[:n].copy(),
            next_obs=self.next_obs[:n].copy(),
            done=self.done[:n].copy(),
            episode_id=self.episode_id[:n].copy(),
        )


def _quantize(arr: np.ndarray) -> np.ndarray:
    """Round-trip through float32 so disk storage is lossless afterwards."""
    return arr.astype(np.float32).astype(np.float64)


def generate_dataset(
    env: CmdpSpec, behavior: BehaviorPolicySpec, n_episodes: int, seed: int
) -> Dataset:
    """Roll out the scripted behavior mixture and record every transition.

    Each episode draws from its own named stream, so generation is
    order-independent across episodes and fully determined by the seed.
    """
    if n_episodes < 1:
        raise ConfigError("need at least one episode")
    eye = np.eye(env.n_states, dtype=np.float64)
    tables = {
        "safe": epsilon_mix(scripted_safe_table(env), behavior.epsilon_explore),
        "greedy": epsilon_mix(greedy_policy_table(env), behavior.epsilon_explore),
    }
    obs, action, reward, costs, next_obs, done, episode_id = [], [], [], [], [], [], []
    for ep in range(n_episodes):
        rng = stream(seed, "episode", ep)
        table = tables["safe"] if rng.random() < behavior.safe_fraction else tables["greedy"]
        traj = rollout(env, table, rng)
        for s, a, r, cvec, s2, d in traj.steps:
            obs.append(eye[s])
            action.append(a)
            reward.append(r)
            costs.append(cvec)
            next_obs.append(eye[s2])
            done.append(1 if d else 0)
            episode_id.append(ep)
    ds = Dataset(
        env_name=env.name,
        obs_dim=env.n_states,
        n_actions=env.n_actions,
        n_costs=env.n_costs,
        behavior_mix=behavior.safe_fraction,
        gen_seed=seed,
        obs=_quantize(np.asarray(obs)),
        action=np.asarray(action, dtype=np.int64),
        reward=_quantize(np.asarray(reward)),
        costs=_quantize(np.asarray(costs)),
        next_obs=_quantize(np.asarray(next_obs)),
        done=np.asarray(done, dtype=np.uint8),
        episode_id=np.asarray(episode_id, dtype=np.int64),
    )
    ds.validate()
    return ds


def safe_episode_fraction(ds: Dataset) -> float:
    """Fraction of episodes whose total cost over every channel is zero."""
    ep = ds.episode_id
    ep_cost = np.zeros(int(ep.max()) + 1)
    np.add.at(ep_cost, ep, ds.costs.sum(axis=1))
    return float(np.mean(ep_cost == 0.0))


def save_dataset(ds: Dataset, path) -> int:
    """Write an LXSD v1 file; returns the trailing checksum."""
    ds.validate()
    n = ds.n_transitions
    header = {
        "env_name": ds.env_name,
        "obs_dim": ds.obs_dim,
        "n_actions": ds.n_actions,
        "n_costs": ds.n_costs,
        "n_transitions": n,
        "behavior_mix": ds.behavior_mix,
        "gen_seed": ds.gen_seed,
    }
    cols = [
        ds.obs.astype("<f4").tobytes(),
        ds.action.astype("<u4").tobytes(),
        ds.reward.astype("<f4").tobytes(),
        ds.costs.astype("<f4").tobytes(),
        ds.next_obs.astype("<f4").tobytes(),
        ds.done.astype("u1").tobytes(),
        ds.episode_id.astype("<u4").tobytes(),
    ]
    return serialize.write_container(path, serialize.DATASET_MAGIC, header, cols)


def _column_sizes(header: dict) -> list[int]:
    try:
        n = int(header["n_transitions"])
        obs_dim = int(header["obs_dim"])
        n_costs = int(header["n_costs"])
    except (KeyError, TypeError, ValueError) as exc:
        raise HeaderMismatchError(f"malformed dataset header: {exc}") from exc
    return [4 * n * obs_dim, 4 * n, 4 * n, 4 * n * n_costs, 4 * n * obs_dim, n, 4 * n]


def load_dataset(path) -> Dataset:
    """Read an LXSD v1 file back into memory (floats widened to 64-bit)."""
    header, cols = serialize.read_container(path, serialize.DATASET_MAGIC, _column_sizes)
    missing = [k for k in _HEADER_KEYS if k not in header]
    if missing:
        raise HeaderMismatchError(f"dataset header missing keys: {missing}")
    n = int(header["n_transitions"])
    obs_dim = int(header["obs_dim"])
    n_costs = int(header["n_costs"])
    ds = Dataset(
        env_name=str(header["env_name"]),
        obs_dim=obs_dim,
        n_actions=int(header["n_actions"]),
        n_costs=n_costs,
        behavior_mix=float(header["behavior_mix"]),
        gen_seed=int(header["gen_seed"]),
        obs=np.frombuffer(cols[0], dtype="<f4").astype(np.float64).reshape(n, obs_dim),
        action=np.frombuffer(cols[1], dtype="<u4").astype(np.int64),
        reward=np.frombuffer(cols[2], dtype="<f4").astype(np.float64),
        costs=np.frombuffer(cols[3], dtype="<f4").astype(np.float64).reshape(n, n_costs),
        next_obs=np.frombuffer(cols[4], dtype="<f4").astype(np.float64).reshape(n, obs_dim),
        done=np.frombuffer(cols[5], dtype="u1").copy(),
        episode_id=np.frombuffer(cols[6], dtype="<u4").astype(np.int64),
    )
    ds.validate()
    return ds


def sample_minibatch(ds: Dataset, batch_size: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform-with-replacement row indices, deterministic in the stream state."""
    n = ds.n_transitions
    if not 1 <= batch_size <= n:
        raise ConfigError(f"batch_size {batch_size} out of range [1, {n}]")
    return rng.integers(0, n, size=batch_size)
