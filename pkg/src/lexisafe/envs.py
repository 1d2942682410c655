"""Tabular constrained MDPs used both as simulators and verification targets.

Two desk-scale families ship with the package:

* ``chain_hazard`` -- a forward-only track. ``right`` advances one cell,
  ``sprint`` advances two and pays a step reward plus a finish bonus near the
  end, ``left`` is blocked by the conveyor and keeps the agent in place.
  Every third cell is a hazard: sprinting from it incurs the hazard cost.
  The reward-optimal policy sprints everywhere (including hazards), so the
  reward/cost conflict is structural; cost-free policies that sprint only
  from safe cells still reach the terminal bonus.

* ``grid_twocost`` -- navigation from the top-right corner to the
  bottom-right goal. Single moves (4 directions) are free; double moves
  cover two cells and trigger the "speed" cost channel. An obstacle band
  blocks the middle row except for a gap at column 0; entering or crossing
  an obstacle triggers the "crash" cost channel. The fast route runs
  straight through the band with double moves, the safe route detours
  through the gap with single moves, so reward and both costs all conflict.

Transitions have a configurable slip probability (default 0.1) to a uniformly
random neighbor cell; rewards and costs are pure (state, action) tables, so
slipping never changes what an action pays or costs.
"""

from __future__ import annotations

import inspect
from dataclasses import dataclass, field

import numpy as np

from . import oracles
from .errors import ConfigError

_ATOL = 1e-12


@dataclass(frozen=True)
class CmdpSpec:
    """Immutable definition of one tabular constrained MDP."""

    name: str
    n_states: int
    n_actions: int
    n_costs: int
    transition: np.ndarray  # (S, A, S)
    reward: np.ndarray  # (S, A)
    costs: np.ndarray  # (n_costs, S, A)
    gamma: float
    init_dist: np.ndarray  # (S,)
    max_steps: int
    terminal_states: frozenset[int]
    r_max_bound: float
    c_max_bound: float
    r_min_undiscounted: float = 0.0
    r_max_undiscounted: float = 1.0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_costs < 1:
            raise ConfigError("need at least one cost channel")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError("gamma must lie in (0, 1)")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be positive")
        p = self.transition
        if p.shape != (self.n_states, self.n_actions, self.n_states):
            raise ConfigError("transition table has the wrong shape")
        if np.any(p < 0.0) or np.any(np.abs(p.sum(axis=2) - 1.0) > _ATOL):
            raise ConfigError("every transition row must be a distribution")
        if abs(self.init_dist.sum() - 1.0) > _ATOL or np.any(self.init_dist < 0.0):
            raise ConfigError("init_dist must be a distribution")
        if np.any(self.reward < 0.0) or np.any(self.reward > self.r_max_bound + _ATOL):
            raise ConfigError("rewards must lie in [0, r_max_bound]")
        if np.any(self.costs < 0.0) or np.any(self.costs > self.c_max_bound + _ATOL):
            raise ConfigError("costs must lie in [0, c_max_bound]")

    @property
    def obs_dim(self) -> int:
        return self.n_states

    @property
    def terminal_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_states, dtype=bool)
        mask[sorted(self.terminal_states)] = True
        return mask


@dataclass(frozen=True)
class StepResult:
    next_state: int
    reward: float
    costs: np.ndarray
    done: bool


@dataclass
class Trajectory:
    """One rolled-out episode with its discounted sums precomputed."""

    steps: list  # (state, action, reward, costs, next_state, done)
    episode_return: float
    episode_costs: np.ndarray
    undiscounted_return: float
    undiscounted_costs: np.ndarray


def featurize(spec: CmdpSpec, state: int) -> np.ndarray:
    """One-hot observation vector for a state index."""
    if not 0 <= state < spec.n_states:
        raise ValueError(f"state {state} out of range [0, {spec.n_states})")
    vec = np.zeros(spec.n_states, dtype=np.float64)
    vec[state] = 1.0
    return vec


def featurize_all(spec: CmdpSpec) -> np.ndarray:
    """Stacked one-hot features for every state, shape (S, S)."""
    return np.eye(spec.n_states, dtype=np.float64)


def env_step(spec: CmdpSpec, state: int, action: int, rng: np.random.Generator) -> StepResult:
    """Sample one transition. Terminal states cannot be stepped."""
    if not 0 <= state < spec.n_states:
        raise ValueError(f"state {state} out of range")
    if not 0 <= action < spec.n_actions:
        raise ValueError(f"action {action} out of range")
    if state in spec.terminal_states:
        raise ValueError(f"cannot step terminal state {state}")
    row = spec.transition[state, action]
    u = rng.random()
    next_state = int(np.searchsorted(np.cumsum(row), u, side="right"))
    next_state = min(next_state, spec.n_states - 1)
    done = next_state in spec.terminal_states
    return StepResult(
        next_state=next_state,
        reward=float(spec.reward[state, action]),
        costs=spec.costs[:, state, action].copy(),
        done=done,
    )


def _with_slip(intended: np.ndarray, neighbors: list[list[int]], slip: float) -> np.ndarray:
    """Mix an intended one-hot row with uniform slip over neighbor cells."""
    row = (1.0 - slip) * intended
    share = slip / len(neighbors)
    for n in neighbors:
        row[n] += share
    return row


def _finish_spec(spec: CmdpSpec) -> CmdpSpec:
    """Attach exact undiscounted return extremes used for metric normalization."""
    v_min, v_max = oracles.finite_extremes(
        spec.transition, spec.reward, spec.terminal_states, spec.max_steps
    )
    r_min = float(spec.init_dist @ v_min)
    r_max = float(spec.init_dist @ v_max)
    object.__setattr__(spec, "r_min_undiscounted", r_min)
    object.__setattr__(spec, "r_max_undiscounted", r_max)
    return spec


def make_chain_hazard(
    length: int,
    hazard_cost: float = 1.0,
    seed: int = 0,
    slip: float = 0.1,
    gamma: float = 0.995,
    max_steps: int | None = None,
) -> CmdpSpec:
    """Single-cost hazard chain. Layout is deterministic in its parameters."""
    if length < 5:
        raise ConfigError("chain length must be at least 5")
    del seed  # accepted for interface uniformity; the layout has no random part
    n_states, n_actions = length, 3
    terminal = length - 1
    sprint_reward = 0.3
    finish_bonus = 1.0

    p = np.zeros((n_states, n_actions, n_states))
    r = np.zeros((n_states, n_actions))
    c = np.zeros((1, n_states, n_actions))
    for s in range(n_states):
        if s == terminal:
            p[s, :, s] = 1.0
            continue
        neighbors = [max(s - 1, 0), min(s + 1, n_states - 1)]
        targets = {0: s, 1: min(s + 1, terminal), 2: min(s + 2, terminal)}
        for a, t in targets.items():
            intended = np.zeros(n_states)
            intended[t] = 1.0
            # holding still is deterministic; only movement can slip
            p[s, a] = intended if a == 0 else _with_slip(intended, neighbors, slip)
        r[s, 1] = finish_bonus if targets[1] == terminal else 0.0
        r[s, 2] = sprint_reward + (finish_bonus if targets[2] == terminal else 0.0)
        if s % 3 == 0:
            c[0, s, 2] = hazard_cost

    spec = CmdpSpec(
        name="chain_hazard",
        n_states=n_states,
        n_actions=n_actions,
        n_costs=1,
        transition=p,
        reward=r,
        costs=c,
        gamma=gamma,
        init_dist=np.eye(n_states)[0],
        max_steps=max_steps if max_steps is not None else 4 * length + 4,
        terminal_states=frozenset({terminal}),
        r_max_bound=sprint_reward + finish_bonus,
        c_max_bound=hazard_cost,
        params={"length": length, "hazard_cost": hazard_cost, "slip": slip},
    )
    return _finish_spec(spec)


_GRID_DIRS = ((-1, 0), (1, 0), (0, -1), (0, 1))  # up, down, left, right


def make_grid_twocost(
    width: int,
    height: int,
    seed: int = 0,
    slip: float = 0.1,
    gamma: float = 0.9,
    max_steps: int | None = None,
) -> CmdpSpec:
    """Two-cost grid: channel 0 is "crash" (obstacles), channel 1 is "speed" (double moves)."""
    if width < 4 or height < 4:
        raise ConfigError("grid dimensions must be at least 4x4")
    n_states = width * height
    n_actions = 8  # 4 single moves + 4 double moves
    band_row = height // 2
    start = (0, width - 1)
    goal = (height - 1, width - 1)

    def sid(rc):
        return rc[0] * width + rc[1]

    def clip(rc):
        return (min(max(rc[0], 0), height - 1), min(max(rc[1], 0), width - 1))

    obstacles = {(band_row, col) for col in range(1, width)}
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x6B696467]))
    candidates = [
        (row, col)
        for row in range(1, height - 1)
        if row != band_row
        for col in range(1, width)
    ]
    n_extra = (width * height) // 18
    if n_extra > 0 and candidates:
        picks = rng.choice(len(candidates), size=min(n_extra, len(candidates)), replace=False)
        obstacles.update(candidates[i] for i in sorted(picks))
    obstacles.discard(start)
    obstacles.discard(goal)

    def dist(rc):
        return abs(rc[0] - goal[0]) + abs(rc[1] - goal[1])

    p = np.zeros((n_states, n_actions, n_states))
    r = np.zeros((n_states, n_actions))
    c = np.zeros((2, n_states, n_actions))
    for row in range(height):
        for col in range(width):
            s = (row, col)
            if s == goal:
                p[sid(s), :, sid(s)] = 1.0
                continue
            neighbors = [sid(clip((row + dr, col + dc))) for dr, dc in _GRID_DIRS]
            for a in range(n_actions):
                dr, dc = _GRID_DIRS[a % 4]
                if a < 4:
                    path = [clip((row + dr, col + dc))]
                else:
                    mid = clip((row + dr, col + dc))
                    path = [mid, clip((mid[0] + dr, mid[1] + dc))]
                target = path[-1]
                intended = np.zeros(n_states)
                intended[sid(target)] = 1.0
                p[sid(s), a] = _with_slip(intended, neighbors, slip)
                progress = max(dist(s) - dist(target), 0)
                r[sid(s), a] = 0.05 * progress + (3.0 if target == goal else 0.0)
                if any(cell in obstacles for cell in path):
                    c[0, sid(s), a] = 1.0
                if a >= 4:
                    c[1, sid(s), a] = 1.0

    spec = CmdpSpec(
        name="grid_twocost",
        n_states=n_states,
        n_actions=n_actions,
        n_costs=2,
        transition=p,
        reward=r,
        costs=c,
        gamma=gamma,
        init_dist=np.eye(n_states)[sid(start)],
        max_steps=max_steps if max_steps is not None else 4 * (width + height),
        terminal_states=frozenset({sid(goal)}),
        r_max_bound=3.1,
        c_max_bound=1.0,
        params={"width": width, "height": height, "seed": seed, "slip": slip},
    )
    return _finish_spec(spec)


ENV_BUILDERS = {
    "chain_hazard": make_chain_hazard,
    "grid_twocost": make_grid_twocost,
}


def build_env(name: str, **params) -> CmdpSpec:
    """Construct a registered environment by name, validating parameter names."""
    if name not in ENV_BUILDERS:
        raise ConfigError(
            f"unknown environment {name!r}; known: {sorted(ENV_BUILDERS)}"
        )
    builder = ENV_BUILDERS[name]
    accepted = set(inspect.signature(builder).parameters)
    unknown = set(params) - accepted
    if unknown:
        raise ConfigError(f"unknown {name} parameters: {sorted(unknown)}")
    return builder(**params)


# ---------------------------------------------------------------------------
# Scripted reference policies (used for data collection and as eval baselines)
# ---------------------------------------------------------------------------


def greedy_policy_table(spec: CmdpSpec) -> np.ndarray:
    """Reward-optimal deterministic policy, ignoring every cost channel."""
    q = oracles.value_iteration(spec.transition, spec.reward, spec.gamma, spec.terminal_states)
    return oracles.greedy_table(q)


def safe_policy_table(spec: CmdpSpec) -> np.ndarray:
    """Best deterministic policy restricted to actions with zero cost in all channels."""
    allowed = np.all(spec.costs == 0.0, axis=0)
    # every state keeps at least one permitted action, else fall back to all
    no_choice = ~allowed.any(axis=1)
    allowed[no_choice, :] = True
    q = oracles.value_iteration(
        spec.transition, spec.reward, spec.gamma, spec.terminal_states, allowed=allowed
    )
    return oracles.greedy_table(q, allowed=allowed)


def scripted_safe_table(spec: CmdpSpec) -> np.ndarray:
    """The cautious data-collection policy.

    Avoids every action type that incurs cost anywhere (on the chain this
    bans sprinting outright, so the collector is deliberately slower than
    the best zero-cost policy and the trainers must compose exploration
    samples to beat it). Where no action type is globally clean, falls back
    to avoiding costly state-action pairs.
    """
    clean_action = np.all(spec.costs == 0.0, axis=(0, 1))
    if clean_action.any():
        allowed = np.tile(clean_action, (spec.n_states, 1))
        q = oracles.value_iteration(
            spec.transition, spec.reward, spec.gamma, spec.terminal_states, allowed=allowed
        )
        return oracles.greedy_table(q, allowed=allowed)
    return safe_policy_table(spec)


def epsilon_mix(table: np.ndarray, epsilon: float) -> np.ndarray:
    """Blend a policy table with uniform exploration."""
    if not 0.0 <= epsilon <= 1.0:
        raise ConfigError("epsilon must lie in [0, 1]")
    n_actions = table.shape[1]
    return (1.0 - epsilon) * table + epsilon / n_actions


def rollout(
    spec: CmdpSpec, policy: np.ndarray, rng: np.random.Generator
) -> Trajectory:
    """Roll one episode from the start distribution under a policy table."""
    u = rng.random()
    state = int(np.searchsorted(np.cumsum(spec.init_dist), u, side="right"))
    state = min(state, spec.n_states - 1)
    steps = []
    disc_r, disc_c = 0.0, np.zeros(spec.n_costs)
    flat_r, flat_c = 0.0, np.zeros(spec.n_costs)
    g = 1.0
    for t in range(spec.max_steps):
        if state in spec.terminal_states:
            break
        ua = rng.random()
        action = int(np.searchsorted(np.cumsum(policy[state]), ua, side="right"))
        action = min(action, spec.n_actions - 1)
        res = env_step(spec, state, action, rng)
        done = res.done or t == spec.max_steps - 1
        steps.append((state, action, res.reward, res.costs, res.next_state, done))
        disc_r += g * res.reward
        disc_c += g * res.costs
        flat_r += res.reward
        flat_c += res.costs
        g *= spec.gamma
        state = res.next_state
        if done:
            break
    return Trajectory(
        steps=steps,
        episode_return=disc_r,
        episode_costs=disc_c,
        undiscounted_return=flat_r,
        undiscounted_costs=flat_c,
    )
