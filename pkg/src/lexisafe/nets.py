"""Minimal dense-network machinery on flat float64 parameter vectors.

Every actor and critic in the package is a fully connected net whose
parameters live in a single flat array (layer by layer: weight matrix
row-major, then bias). Keeping parameters flat makes optimizer state,
target-network updates, checkpoints, and finite-difference checks trivial.

All numerics are 64-bit. Forward and backward are pure functions of their
arguments; the optimizer mutates in place and is the only stateful piece.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalAbort

ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class MlpSpec:
    """Architecture of one dense network."""

    input_dim: int
    hidden_dims: tuple[int, ...]
    output_dim: int
    activation: str = "relu"

    def __post_init__(self):
        if self.input_dim <= 0 or self.output_dim <= 0:
            raise ConfigError("input_dim and output_dim must be positive")
        if any(h <= 0 for h in self.hidden_dims):
            raise ConfigError("hidden dims must be positive")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) per affine layer."""
        dims = [self.input_dim, *self.hidden_dims, self.output_dim]
        return [(dims[i], dims[i + 1]) for i in range(len(dims) - 1)]

    @property
    def n_params(self) -> int:
        return sum((fi + 1) * fo for fi, fo in self.layer_dims)

    @property
    def depth(self) -> int:
        return len(self.hidden_dims) + 1


def unpack(spec: MlpSpec, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views (W, b) per layer into the flat vector. No copies."""
    if params.shape != (spec.n_params,):
        raise ConfigError(
            f"parameter vector has length {params.shape}, spec needs ({spec.n_params},)"
        )
    out = []
    ofs = 0
    for fi, fo in spec.layer_dims:
        w = params[ofs : ofs + fi * fo].reshape(fo, fi)
        ofs += fi * fo
        b = params[ofs : ofs + fo]
        ofs += fo
        out.append((w, b))
    return out


def init_params(spec: MlpSpec, rng: np.random.Generator) -> np.ndarray:
    """Glorot-uniform weights, zero biases."""
    params = np.zeros(spec.n_params, dtype=np.float64)
    for w, _ in unpack(spec, params):
        fo, fi = w.shape
        limit = np.sqrt(6.0 / (fi + fo))
        w[...] = rng.uniform(-limit, limit, size=(fo, fi))
    return params


def _act(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0, out=z)
    return np.tanh(z, out=z)


def forward_batch(spec: MlpSpec, params: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Forward pass on a (B, input_dim) batch; returns (B, output_dim)."""
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ConfigError(f"input has shape {x.shape}, spec needs (*, {spec.input_dim})")
    layers = unpack(spec, params)
    h = x
    for w, b in layers[:-1]:
        z = h @ w.T
        z += b
        h = _act(z, spec.activation)
    w, b = layers[-1]
    out = h @ w.T
    out += b
    return out


def forward(spec: MlpSpec, params: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Forward pass on a single input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (spec.input_dim,):
        raise ConfigError(f"input has shape {x.shape}, spec needs ({spec.input_dim},)")
    return forward_batch(spec, params, x[None, :])[0]


def forward_cached(spec: MlpSpec, params: np.ndarray, x: np.ndarray):
    """Forward pass keeping post-activation values for backward."""
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ConfigError(f"input has shape {x.shape}, spec needs (*, {spec.input_dim})")
    layers = unpack(spec, params)
    acts = [x]
    h = x
    for w, b in layers[:-1]:
        z = h @ w.T
        z += b
        h = _act(z, spec.activation)
        acts.append(h)
    w, b = layers[-1]
    out = h @ w.T
    out += b
    return out, acts


def backward_batch(
    spec: MlpSpec, params: np.ndarray, acts: list[np.ndarray], out_grad: np.ndarray
) -> np.ndarray:
    """Gradient of sum_i out_grad[i] . f(x[i]) with respect to the flat params.

    `acts` is the activation cache from forward_cached on the same inputs.
    """
    if out_grad.ndim != 2 or out_grad.shape[1] != spec.output_dim:
        raise ConfigError(
            f"output grad has shape {out_grad.shape}, spec needs (*, {spec.output_dim})"
        )
    layers = unpack(spec, params)
    grad = np.empty(spec.n_params, dtype=np.float64)
    gviews = unpack(spec, grad)
    delta = out_grad
    for li in range(len(layers) - 1, -1, -1):
        w, _ = layers[li]
        gw, gb = gviews[li]
        a_prev = acts[li]
        np.matmul(delta.T, a_prev, out=gw)
        np.sum(delta, axis=0, out=gb)
        if li > 0:
            delta = delta @ w
            if spec.activation == "relu":
                delta *= a_prev > 0.0
            else:
                delta *= 1.0 - a_prev * a_prev
    return grad


def backward(
    spec: MlpSpec, params: np.ndarray, x: np.ndarray, out_grad: np.ndarray
) -> np.ndarray:
    """Gradient of out_grad . f(x) with respect to the flat params (single input)."""
    x = np.asarray(x, dtype=np.float64)
    out_grad = np.asarray(out_grad, dtype=np.float64)
    if x.shape != (spec.input_dim,):
        raise ConfigError(f"input has shape {x.shape}, spec needs ({spec.input_dim},)")
    if out_grad.shape != (spec.output_dim,):
        raise ConfigError(
            f"output grad has shape {out_grad.shape}, spec needs ({spec.output_dim},)"
        )
    _, acts = forward_cached(spec, params, x[None, :])
    return backward_batch(spec, params, acts, out_grad[None, :])


@dataclass
class AdamState:
    """Adaptive-moment optimizer state for one flat parameter vector."""

    lr: float
    n_params: int
    beta1: float = 0.9
    beta2: float = 0.999
    eps_stab: float = 1e-8
    step_count: int = 0
    m: np.ndarray = field(default=None)
    v: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.lr < 0:
            raise ConfigError("learning rate must be nonnegative")
        if self.eps_stab <= 0:
            raise ConfigError("eps_stab must be positive")
        if self.m is None:
            self.m = np.zeros(self.n_params, dtype=np.float64)
        if self.v is None:
            self.v = np.zeros(self.n_params, dtype=np.float64)


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray) -> None:
    """One bias-corrected adaptive-moment update, in place."""
    if grad.shape != params.shape or params.shape != state.m.shape:
        raise ConfigError("gradient/parameter/optimizer-state lengths disagree")
    if not np.all(np.isfinite(grad)):
        idx = int(np.flatnonzero(~np.isfinite(grad))[0])
        raise NumericalAbort(
            f"non-finite gradient at index {idx}", detail={"index": idx}
        )
    state.step_count += 1
    t = state.step_count
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grad
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * (grad * grad)
    # bias-corrected update, folded into one scale factor per step:
    # lr * (m / bc1) / (sqrt(v / bc2) + eps) == (lr * sqrt(bc2) / bc1) * m / (sqrt(v) + eps * sqrt(bc2))
    bc2_sqrt = np.sqrt(1.0 - state.beta2**t)
    scale = state.lr * bc2_sqrt / (1.0 - state.beta1**t)
    denom = np.sqrt(state.v)
    denom += state.eps_stab * bc2_sqrt
    update = state.m / denom
    update *= scale
    params -= update
    if not np.all(np.isfinite(params)):
        idx = int(np.flatnonzero(~np.isfinite(params))[0])
        raise NumericalAbort(
            f"non-finite parameter at index {idx} after optimizer step",
            detail={"index": idx},
        )


def soft_update(target: np.ndarray, online: np.ndarray, tau: float) -> None:
    """target <- (1 - tau) * target + tau * online, in place."""
    if not 0.0 < tau <= 1.0:
        raise ConfigError("tau must be in (0, 1]")
    if target.shape != online.shape:
        raise ConfigError("target/online length mismatch")
    target *= 1.0 - tau
    target += tau * online
