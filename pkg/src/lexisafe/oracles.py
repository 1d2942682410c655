"""Exact tabular solvers for finite CMDPs.

Everything here works on raw arrays (P: (S, A, S), per-channel tables
nu: (S, A), policy tables pi: (S, A)) so it stays independent of the neural
training path and can serve as its oracle. Terminal states are treated as
absorbing with zero payoff everywhere.
"""

from __future__ import annotations

import numpy as np
from scipy import optimize

from .errors import ConfigError


def _terminal_vector(n_states: int, terminal_states) -> np.ndarray:
    mask = np.zeros(n_states, dtype=bool)
    for s in terminal_states:
        mask[s] = True
    return mask


def policy_matrices(P: np.ndarray, nu: np.ndarray, pi: np.ndarray):
    """Collapse action choice: returns (P_pi: (S,S), nu_pi: (S,))."""
    p_pi = np.einsum("sa,sat->st", pi, P)
    nu_pi = (pi * nu).sum(axis=1)
    return p_pi, nu_pi


def policy_eval_exact(
    P: np.ndarray, nu: np.ndarray, pi: np.ndarray, gamma: float, terminal_states
) -> tuple[np.ndarray, np.ndarray]:
    """Infinite-horizon policy evaluation by direct linear solve.

    Returns (Q, V) with Q(s, a) = nu(s, a) + gamma * sum_s' P V(s'), zero at
    terminal states. Exact up to the linear solver's machine precision.
    """
    n_states = P.shape[0]
    term = _terminal_vector(n_states, terminal_states)
    p_pi, nu_pi = policy_matrices(P, nu, pi)
    a_mat = np.eye(n_states) - gamma * p_pi
    a_mat[term, :] = 0.0
    a_mat[term, term] = 1.0
    rhs = nu_pi.copy()
    rhs[term] = 0.0
    v = np.linalg.solve(a_mat, rhs)
    q = nu + gamma * (P @ v)
    q[term, :] = 0.0
    return q, v


def policy_eval_finite(
    P: np.ndarray,
    nu: np.ndarray,
    pi: np.ndarray,
    gamma: float,
    terminal_states,
    horizon: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Backward recursion over a hard step budget; returns start-of-episode (Q, V)."""
    n_states = P.shape[0]
    term = _terminal_vector(n_states, terminal_states)
    v = np.zeros(n_states)
    for _ in range(horizon):
        q = nu + gamma * (P @ v)
        q[term, :] = 0.0
        v = (pi * q).sum(axis=1)
        v[term] = 0.0
    q = nu + gamma * (P @ v)
    q[term, :] = 0.0
    v = (pi * q).sum(axis=1)
    v[term] = 0.0
    return q, v


def value_iteration(
    P: np.ndarray,
    nu: np.ndarray,
    gamma: float,
    terminal_states,
    allowed: np.ndarray | None = None,
    tol: float = 1e-13,
    max_iter: int = 200_000,
) -> np.ndarray:
    """Optimal Q via fixed-point iteration, optionally restricted to allowed actions.

    `allowed` is a boolean (S, A) mask; disallowed actions get -inf value during
    the max but their Q entries are still reported from the final backup.
    """
    n_states = P.shape[0]
    term = _terminal_vector(n_states, terminal_states)
    v = np.zeros(n_states)
    neg = np.float64(-1e300)
    for _ in range(max_iter):
        q = nu + gamma * (P @ v)
        q[term, :] = 0.0
        if allowed is not None:
            masked = np.where(allowed, q, neg)
            v_new = masked.max(axis=1)
        else:
            v_new = q.max(axis=1)
        v_new[term] = 0.0
        done = np.max(np.abs(v_new - v)) < tol
        v = v_new
        if done:
            break
    else:
        raise ConfigError("value iteration failed to converge")
    q = nu + gamma * (P @ v)
    q[term, :] = 0.0
    return q


def greedy_table(q: np.ndarray, allowed: np.ndarray | None = None) -> np.ndarray:
    """Deterministic policy table from Q; ties break to the lowest action index."""
    if allowed is not None:
        q = np.where(allowed, q, -np.inf)
    pi = np.zeros_like(q)
    pi[np.arange(q.shape[0]), q.argmax(axis=1)] = 1.0
    return pi


def finite_extremes(
    P: np.ndarray, r: np.ndarray, terminal_states, horizon: int
) -> tuple[float, float]:
    """Per-state pessimal and optimal undiscounted episode returns.

    Backward induction with gamma = 1 over the step budget; returns the two
    (S,) value arrays, to be reduced by a start distribution.
    """
    n_states = P.shape[0]
    term = _terminal_vector(n_states, terminal_states)
    v_min = np.zeros(n_states)
    v_max = np.zeros(n_states)
    for _ in range(horizon):
        q_min = r + P @ v_min
        q_max = r + P @ v_max
        q_min[term, :] = 0.0
        q_max[term, :] = 0.0
        v_min = q_min.min(axis=1)
        v_max = q_max.max(axis=1)
        v_min[term] = 0.0
        v_max[term] = 0.0
    return v_min, v_max


def occupancy_table(
    P: np.ndarray, pi: np.ndarray, gamma: float, d0: np.ndarray, terminal_states
) -> np.ndarray:
    """Discounted state-action occupancy d(s,a), normalized to sum to 1.

    Terminal states absorb; their mass is reported under action index 0 for
    every policy so occupancy ratios at terminals compare state visitation
    only, not an arbitrary action choice.
    """
    n_states, n_actions = pi.shape
    term = _terminal_vector(n_states, terminal_states)
    p_pi = np.einsum("sa,sat->st", pi, P)
    p_pi[term, :] = 0.0
    p_pi[term, term] = 1.0
    # d_state = (1 - gamma) * d0 (I - gamma P_pi)^-1, solved as a linear system
    a_mat = np.eye(n_states) - gamma * p_pi.T
    d_state = np.linalg.solve(a_mat, (1.0 - gamma) * d0)
    table = d_state[:, None] * pi
    table[term, :] = 0.0
    table[term, 0] = d_state[term]
    return table


def constrained_optimum(
    P: np.ndarray,
    r: np.ndarray,
    cost_tables: list[np.ndarray],
    kappas,
    gamma: float,
    d0: np.ndarray,
    terminal_states,
) -> float:
    """Exact best discounted return subject to discounted cost budgets.

    Solves the occupancy-measure linear program over non-terminal state-action
    pairs (terminal states are zero-payoff sinks). This is the reference
    optimum for suboptimality measurements and is fully independent of the
    gradient-based training path.
    """
    n_states, n_actions = r.shape
    term = _terminal_vector(n_states, terminal_states)
    live = np.flatnonzero(~term)
    n_live = live.size
    idx = {s: i for i, s in enumerate(live)}
    n_var = n_live * n_actions

    c_obj = -r[live, :].reshape(n_var)
    a_eq = np.zeros((n_live, n_var))
    for i, s in enumerate(live):
        a_eq[i, i * n_actions : (i + 1) * n_actions] += 1.0
    for j, s in enumerate(live):
        for a in range(n_actions):
            col = j * n_actions + a
            for s2 in live:
                p = P[s, a, s2]
                if p > 0.0:
                    a_eq[idx[s2], col] -= gamma * p
    b_eq = d0[live].astype(np.float64)

    a_ub = np.stack([ct[live, :].reshape(n_var) for ct in cost_tables])
    b_ub = np.asarray(kappas, dtype=np.float64)

    res = optimize.linprog(
        c_obj,
        A_ub=a_ub,
        b_ub=b_ub,
        A_eq=a_eq,
        b_eq=b_eq,
        bounds=(0, None),
        method="highs",
    )
    if not res.success:
        raise ConfigError(f"constrained optimum LP failed: {res.message}")
    return float(-res.fun)
