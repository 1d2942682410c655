"""Command-line entry point for reproducible, config-driven runs.

Configs are flat INI-style documents (sections of ``key = value``). Parsing
is strict: unknown sections or keys are fatal, with a close-match suggestion.
Before any computation every command writes a canonical snapshot of the fully
resolved configuration (defaults expanded, keys sorted) into the output
directory, so a run directory is self-describing and re-runnable.

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical abort.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import difflib
import inspect
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import oracles, serialize
from .data import BehaviorPolicySpec, generate_dataset, load_dataset, safe_episode_fraction, save_dataset
from .envs import ENV_BUILDERS, CmdpSpec, build_env
from .errors import ConfigError, DataError, LexiSafeError, NumericalAbort
from .evaluation import (
    concentrability_estimate,
    kl_monitor,
    oracle_summary,
    rollout_eval,
    scaling_sweep,
)
from .plots import svg_line_plot
from .trainers import (
    TEST_SEEDS,
    TRAIN_SEEDS,
    LexiSafeMC,
    LexiSafeSC,
    PolicyHead,
    WeightedIQL,
    _metric_columns,
    state_arrays,
)

# ---------------------------------------------------------------------------
# Config schema
# ---------------------------------------------------------------------------

_UNSET = object()

# section -> key -> (type tag, default). _UNSET defaults are required when the
# consuming command needs them; None defaults mean "optional, may stay unset".
_SCHEMA = {
    "env": {
        "name": ("str", _UNSET),
        "length": ("int", 9),
        "hazard_cost": ("float", 1.0),
        "width": ("int", 6),
        "height": ("int", 6),
        "seed": ("int", 0),
        "slip": ("float", 0.1),
        "gamma": ("float", None),
        "max_steps": ("int", None),
    },
    "behavior": {
        "safe_fraction": ("float", 0.5),
        "epsilon_explore": ("float", 0.1),
    },
    "dataset": {
        "path": ("str", _UNSET),
        "n_episodes": ("int", 1000),
        "seed": ("int", 0),
    },
    "train": {
        "mode": ("str", "sc"),
        "gamma": ("float", None),
        "cost_thresholds": ("floats", _UNSET),
        "beta_c": ("floats", (1.0,)),
        "beta_r": ("float", 1.0),
        "xi_reward": ("float", 0.7),
        "xi_cost": ("float", 0.7),
        "lr_actor": ("float", 3e-4),
        "lr_q": ("float", 3e-5),
        "lr_v": ("float", 3e-5),
        "lr_lambda": ("float", 1e-4),
        "batch_size": ("int", 256),
        "total_steps": ("int", 50_000),
        "smoothing_alpha": ("float", 0.05),
        "target_tau": ("float", 0.005),
        "kl_tolerance": ("float", 1.0),
        "weight_clip_max": ("float", 100.0),
        "hidden_dims": ("ints", (128, 128)),
        "activation": ("str", "relu"),
        "schedule_mode": ("str", "interleaved"),
        "staged_phase_steps": ("ints", None),
        "cost_priority": ("ints", None),
        "seed": ("int", 7),
        "oracle_every": ("int", 50),
        "weights": ("floats", None),
    },
    "eval": {
        "n_episodes": ("int", 200),
        "seeds": ("ints", TEST_SEEDS),
        "stochastic": ("bool", False),
        "r_min": ("float", None),
        "r_max": ("float", None),
        "kappa_eval": ("floats", None),
    },
    "sweep": {
        "n_grid": ("ints", _UNSET),
        "seeds_per_cell": ("int", 3),
        "total_steps": ("int", None),
    },
    "ablate": {
        "weights": ("pairs", ((1.0, 1.0), (10.0, 1.0), (100.0, 1.0), (1000.0, 1.0), (5000.0, 1.0))),
        "seeds": ("ints", TRAIN_SEEDS),
        "total_steps": ("int", None),
    },
    "output": {
        "dir": ("str", None),
    },
}


def _parse_value(raw: str, kind: str, where: str):
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "str":
            return raw
        if kind == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind == "ints":
            return tuple(int(tok) for tok in raw.split(",") if tok.strip())
        if kind == "floats":
            return tuple(float(tok) for tok in raw.split(",") if tok.strip())
        if kind == "pairs":
            pairs = []
            for chunk in raw.split(";"):
                if not chunk.strip():
                    continue
                parts = [float(tok) for tok in chunk.split(",")]
                pairs.append(tuple(parts))
            return tuple(pairs)
    except ValueError as exc:
        raise ConfigError(f"bad value for {where}: {exc}") from exc
    raise ConfigError(f"unknown schema kind {kind}")


def _suggest(key: str, options) -> str:
    close = difflib.get_close_matches(key, list(options), n=1)
    return f"; did you mean {close[0]!r}?" if close else ""


def load_config(path) -> dict:
    """Parse and validate a config file against the strict schema."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    cfg = {section: dict() for section in _SCHEMA}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]{_suggest(section, _SCHEMA)}")
        for key, raw in parser[section].items():
            if key not in _SCHEMA[section]:
                raise ConfigError(
                    f"unknown config key {key!r} in [{section}]{_suggest(key, _SCHEMA[section])}"
                )
            kind, _ = _SCHEMA[section][key]
            cfg[section][key] = _parse_value(raw, kind, f"[{section}] {key}")
    for section, keys in _SCHEMA.items():
        for key, (kind, default) in keys.items():
            if key not in cfg[section] and default is not _UNSET:
                cfg[section][key] = default
    return cfg


def _require(cfg: dict, section: str, key: str):
    if key not in cfg[section] or cfg[section][key] is None:
        raise ConfigError(f"config key [{section}] {key} is required for this command")
    return cfg[section][key]


def resolve_config(cfg: dict) -> dict:
    """Fill cross-section defaults (environment gamma vs training gamma)."""
    name = cfg["env"].get("name")
    if name is not None:
        if name not in ENV_BUILDERS:
            raise ConfigError(f"unknown environment {name!r}{_suggest(name, ENV_BUILDERS)}")
        builder_gamma = inspect.signature(ENV_BUILDERS[name]).parameters["gamma"].default
        if cfg["env"].get("gamma") is None:
            cfg["env"]["gamma"] = cfg["train"].get("gamma") or builder_gamma
        if cfg["train"].get("gamma") is None:
            cfg["train"]["gamma"] = cfg["env"]["gamma"]
        if abs(cfg["train"]["gamma"] - cfg["env"]["gamma"]) > 1e-12:
            raise ConfigError("train gamma and env gamma disagree")
    return cfg


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return "; ".join(",".join(repr(float(x)) for x in pair) for pair in value)
        return ",".join(_format_value(v) for v in value)
    return str(value)


def write_snapshot(cfg: dict, out_dir: Path) -> Path:
    """Canonical resolved-config snapshot: sorted sections and keys."""
    lines = []
    for section in sorted(cfg):
        body = {k: v for k, v in cfg[section].items() if v is not None}
        if not body:
            continue
        lines.append(f"[{section}]")
        for key in sorted(body):
            lines.append(f"{key} = {_format_value(body[key])}")
        lines.append("")
    path = out_dir / "config.resolved.ini"
    path.write_text("\n".join(lines), encoding="utf-8")
    return path


def prepare_out_dir(out, force: bool) -> Path:
    out = Path(out)
    if out.exists() and any(out.iterdir()) and not force:
        raise ConfigError(f"output directory {out} is not empty; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Shared build helpers
# ---------------------------------------------------------------------------


def _build_env(cfg: dict) -> CmdpSpec:
    name = _require(cfg, "env", "name")
    params = {}
    if name == "chain_hazard":
        params = {"length": cfg["env"]["length"], "hazard_cost": cfg["env"]["hazard_cost"]}
    elif name == "grid_twocost":
        params = {"width": cfg["env"]["width"], "height": cfg["env"]["height"]}
    params["seed"] = cfg["env"]["seed"]
    params["slip"] = cfg["env"]["slip"]
    if cfg["env"].get("gamma") is not None:
        params["gamma"] = cfg["env"]["gamma"]
    if cfg["env"].get("max_steps") is not None:
        params["max_steps"] = cfg["env"]["max_steps"]
    return build_env(name, **params)


def _behavior(cfg: dict) -> BehaviorPolicySpec:
    return BehaviorPolicySpec(
        safe_fraction=cfg["behavior"]["safe_fraction"],
        epsilon_explore=cfg["behavior"]["epsilon_explore"],
    )


def _estimator(cfg: dict, mode: str, n_costs: int, seed=None, total_steps=None,
               oracle_every=None, weights=None):
    t = cfg["train"]
    common = dict(
        gamma=t["gamma"],
        beta_r=t["beta_r"],
        xi_reward=t["xi_reward"],
        lr_actor=t["lr_actor"],
        lr_q=t["lr_q"],
        lr_v=t["lr_v"],
        batch_size=t["batch_size"],
        total_steps=total_steps if total_steps is not None else t["total_steps"],
        target_tau=t["target_tau"],
        weight_clip_max=t["weight_clip_max"],
        hidden_dims=t["hidden_dims"],
        activation=t["activation"],
        seed=seed if seed is not None else t["seed"],
        oracle_every=oracle_every if oracle_every is not None else t["oracle_every"],
    )
    thresholds = _require(cfg, "train", "cost_thresholds")
    if mode == "sc":
        if len(thresholds) != 1:
            raise ConfigError("sc mode needs exactly one cost threshold")
        return LexiSafeSC(
            cost_threshold=thresholds[0],
            beta_c=t["beta_c"][0] if len(t["beta_c"]) == 1 else t["beta_c"],
            xi_cost=t["xi_cost"],
            lr_lambda=t["lr_lambda"],
            smoothing_alpha=t["smoothing_alpha"],
            kl_tolerance=t["kl_tolerance"],
            schedule_mode=t["schedule_mode"],
            staged_phase_steps=t["staged_phase_steps"],
            **common,
        )
    if mode == "mc":
        return LexiSafeMC(
            cost_thresholds=thresholds if len(thresholds) > 1 else thresholds[0],
            beta_c=t["beta_c"] if len(t["beta_c"]) > 1 else t["beta_c"][0],
            xi_cost=t["xi_cost"],
            lr_lambda=t["lr_lambda"],
            smoothing_alpha=t["smoothing_alpha"],
            kl_tolerance=t["kl_tolerance"],
            schedule_mode=t["schedule_mode"],
            staged_phase_steps=t["staged_phase_steps"],
            cost_priority=t["cost_priority"],
            **common,
        )
    if mode == "weighted":
        if weights is None:
            weights = _require(cfg, "train", "weights")
        return WeightedIQL(weights=weights, cost_thresholds=thresholds, **common)
    raise ConfigError(f"unknown train mode {mode!r}")


def _fmt_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, columns: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt_cell(row.get(col)) for col in columns])


def read_metrics(path) -> tuple[list[str], list[dict]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        columns = next(reader)
        rows = []
        for raw in reader:
            row = {}
            for col, cell in zip(columns, raw):
                row[col] = float(cell) if cell != "" else None
            rows.append(row)
    return columns, rows


_SCHEMA_NOTES = {
    "step": "gradient step index (0-based)",
    "phase": "active phase in staged mode (cost phases in priority order, then reward); -1 when interleaved",
    "loss_q_reward": "pre-step squared Bellman loss of the reward Q net",
    "loss_v_reward": "pre-step expectile loss of the reward V net",
    "loss_actor_reward": "pre-step weighted NLL of the reward-phase actor step (blank if phase inactive)",
    "weight_max": "largest regression weight used by any actor step this step",
    "q_absmax": "largest |Q| seen in this step's batches (divergence canary)",
    "oracle_return": "exact discounted return of the current greedy policy (every oracle_every steps)",
}


def write_schema_md(path, columns: list[str]) -> None:
    lines = ["# metrics.csv columns", ""]
    for col in columns:
        note = _SCHEMA_NOTES.get(col)
        if note is None:
            if col.startswith("loss_q_cost"):
                note = f"pre-step squared Bellman loss of cost-channel {col[-1]} Q net"
            elif col.startswith("loss_v_cost"):
                note = f"pre-step expectile loss of cost-channel {col[-1]} V net"
            elif col.startswith("loss_actor_cost"):
                note = f"pre-step weighted NLL of the cost-phase actor step for channel {col[-1]} (blank if inactive)"
            elif col.startswith("cost_smooth"):
                note = f"exponentially smoothed batch estimate of cost channel {col[-1]}"
            elif col.startswith("lambda"):
                note = f"multiplier for cost channel {col[-1]} after this step's update"
            elif col.startswith("oracle_norm_cost"):
                note = f"exact discounted cost of channel {col[-1]} divided by its threshold (every oracle_every steps)"
            elif col.startswith("oracle_cost"):
                note = f"exact discounted cost of channel {col[-1]} (every oracle_every steps)"
            else:
                note = ""
        lines.append(f"- `{col}`: {note}")
    lines.append("")
    Path(path).write_text("\n".join(lines), encoding="utf-8")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_gen_data(cfg: dict, out: Path, args) -> int:
    env = _build_env(cfg)
    behavior = _behavior(cfg)
    ds_path = Path(_require(cfg, "dataset", "path"))
    ds = generate_dataset(env, behavior, cfg["dataset"]["n_episodes"], cfg["dataset"]["seed"])
    ds_path.parent.mkdir(parents=True, exist_ok=True)
    checksum = save_dataset(ds, ds_path)
    manifest = {
        "path": str(ds_path),
        "checksum_fnv1a64": f"{checksum:016x}",
        "n_transitions": ds.n_transitions,
        "n_episodes": cfg["dataset"]["n_episodes"],
        "safe_episode_fraction": safe_episode_fraction(ds),
        "env_name": env.name,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2), encoding="utf-8")
    print(f"wrote {ds_path} ({ds.n_transitions} transitions, checksum {checksum:016x})")
    return 0


def _write_eval_outputs(out: Path, env: CmdpSpec, policy: PolicyHead, cfg: dict, ds=None) -> dict:
    thresholds = _require(cfg, "train", "cost_thresholds")
    report = rollout_eval(
        env,
        policy,
        cfg["eval"]["n_episodes"],
        cfg["eval"]["seeds"],
        thresholds,
        stochastic=cfg["eval"]["stochastic"],
        r_min=cfg["eval"]["r_min"],
        r_max=cfg["eval"]["r_max"],
        kappa_eval=cfg["eval"]["kappa_eval"],
    )
    summary = oracle_summary(env, policy)
    conc = concentrability_estimate(env, policy, _behavior(cfg))
    columns = report.header() + [f"{k}_oracle" for k in summary] + [
        "kl_divergence", "kl_tolerance", "concentrability", "unvisited_mass",
    ]
    row = dict(zip(report.header(), report.row()))
    for k, v in summary.items():
        row[f"{k}_oracle"] = v
    row["kl_divergence"] = kl_monitor(policy, ds) if ds is not None else None
    row["kl_tolerance"] = cfg["train"]["kl_tolerance"]
    row["concentrability"] = conc.c_hat
    row["unvisited_mass"] = conc.unvisited_mass
    write_csv(out / "eval_report.csv", columns, [row])
    return row


def cmd_train(cfg: dict, out: Path, args) -> int:
    env = _build_env(cfg)
    ds = load_dataset(_require(cfg, "dataset", "path"))
    if (ds.obs_dim, ds.n_actions, ds.n_costs) != (env.n_states, env.n_actions, env.n_costs):
        raise DataError(
            f"dataset dims (obs {ds.obs_dim}, actions {ds.n_actions}, costs {ds.n_costs}) "
            f"do not match env {env.name}"
        )
    mode = cfg["train"]["mode"]
    est = _estimator(cfg, mode, ds.n_costs)

    def checkpoint_cb(state):
        serialize.save_checkpoint(
            out / "last_good.lxck", "train_state", {"step": state.step}, state_arrays(state)
        )

    columns = _metric_columns(ds.n_costs, oracle=True) if mode != "weighted" else [
        "step", "phase", "loss_q_reward", "loss_v_reward", "loss_actor_reward",
        "weight_max", "q_absmax", "oracle_return",
    ] + [c for j in range(ds.n_costs) for c in (f"oracle_cost{j}", f"oracle_norm_cost{j}")]
    try:
        est.fit(ds, env, checkpoint_cb=checkpoint_cb)
    except NumericalAbort as exc:
        if hasattr(est, "metrics_"):
            write_csv(out / "metrics.csv", columns, est.metrics_)
        print(f"numerical abort at step {exc.step}: {exc}", file=sys.stderr)
        raise
    write_csv(out / "metrics.csv", columns, est.metrics_)
    write_schema_md(out / "SCHEMA.md", columns)
    est.policy_.save(out / "final_policy.lxck")
    serialize.save_checkpoint(
        out / "final_state.lxck", "train_state", {"step": est.state_.step}, state_arrays(est.state_)
    )
    row = _write_eval_outputs(out, env, est.policy_, cfg, ds=ds)
    print(
        f"run complete: normalized_reward {row['normalized_reward']:.4f}, "
        + ", ".join(f"norm_cost{j} {row[f'normalized_cost{j}']:.4f}" for j in range(ds.n_costs))
    )
    return 0


def cmd_eval(cfg: dict, out: Path, args) -> int:
    if not args.policy:
        raise ConfigError("eval requires --policy <checkpoint>")
    env = _build_env(cfg)
    policy = PolicyHead.load(args.policy)
    if policy.spec.input_dim != env.n_states or policy.spec.output_dim != env.n_actions:
        raise DataError("policy checkpoint dimensions do not match the environment")
    ds = load_dataset(_require(cfg, "dataset", "path"))
    row = _write_eval_outputs(out, env, policy, cfg, ds=ds)
    print(f"eval complete: normalized_reward {row['normalized_reward']:.4f}")
    return 0


def cmd_sweep(cfg: dict, out: Path, args) -> int:
    env = _build_env(cfg)
    n_grid = _require(cfg, "sweep", "n_grid")
    thresholds = _require(cfg, "train", "cost_thresholds")
    mode = cfg["train"]["mode"]
    steps = cfg["sweep"]["total_steps"]

    def factory(seed):
        return _estimator(cfg, mode, env.n_costs, seed=seed, total_steps=steps, oracle_every=0)

    report = scaling_sweep(
        env,
        _behavior(cfg),
        factory,
        n_grid,
        cfg["sweep"]["seeds_per_cell"],
        thresholds,
        jobs=args.jobs,
    )
    write_csv(
        out / "scaling_cells.csv",
        ["n", "seed", "violation", "suboptimality", "valid"],
        report.cells,
    )
    summary = {
        "slope_suboptimality": report.slope_suboptimality,
        "slope_violation": report.slope_violation,
        "j_star": report.j_star,
        "d_theta": report.d_theta,
        "depth": report.depth,
        "seeds_per_cell": len(report.seeds),
    }
    write_csv(out / "scaling_summary.csv", list(summary), [summary])
    ns = list(report.n_grid)
    svg_line_plot(
        out / "scaling.svg",
        [
            ("suboptimality", np.log10(ns), np.log10(report.mean_errors("suboptimality") + 1e-6)),
            ("violation", np.log10(ns), np.log10(report.mean_errors("violation") + 1e-6)),
        ],
        title="error vs dataset size (log10/log10)",
        xlabel="log10 N",
        ylabel="log10 error",
    )
    print(f"sweep complete: suboptimality slope {report.slope_suboptimality:.4f}")
    return 0


def _ablate_one(task) -> dict:
    cfg, method, weights, seed = task
    env = _build_env(cfg)
    behavior = _behavior(cfg)
    steps = cfg["ablate"]["total_steps"]
    ds = generate_dataset(env, behavior, cfg["dataset"]["n_episodes"], cfg["dataset"]["seed"])
    if method == "lexisafe_mc":
        est = _estimator(cfg, "mc", env.n_costs, seed=seed, total_steps=steps, oracle_every=0)
    else:
        est = _estimator(cfg, "weighted", env.n_costs, seed=seed, total_steps=steps,
                         oracle_every=0, weights=weights)
    est.fit(ds, env)
    summary = oracle_summary(env, est.policy_)
    thresholds = _require(cfg, "train", "cost_thresholds")
    lo, hi = _discounted_extremes(env)
    row = {
        "method": method,
        "seed": seed,
        "w0": weights[0] if weights else None,
        "w1": weights[1] if weights and len(weights) > 1 else None,
        "j_reward": summary["j_reward"],
        "normalized_reward": (summary["j_reward"] - lo) / (hi - lo),
    }
    for j in range(env.n_costs):
        row[f"j_cost{j}"] = summary[f"j_cost{j}"]
        row[f"normalized_cost{j}"] = summary[f"j_cost{j}"] / thresholds[j]
        row[f"safe{j}"] = summary[f"j_cost{j}"] / thresholds[j] < 1.0
    return row


def _discounted_extremes(env: CmdpSpec) -> tuple[float, float]:
    q_max = oracles.value_iteration(env.transition, env.reward, env.gamma, env.terminal_states)
    q_min = -oracles.value_iteration(env.transition, -env.reward, env.gamma, env.terminal_states)
    top = float(env.init_dist @ q_max.max(axis=1))
    bottom = float(env.init_dist @ q_min.min(axis=1))
    return bottom, top


def cmd_ablate(cfg: dict, out: Path, args) -> int:
    env = _build_env(cfg)
    if env.n_costs != 2:
        raise ConfigError("ablate needs a two-cost environment")
    tasks = []
    for seed in cfg["ablate"]["seeds"]:
        tasks.append((cfg, "lexisafe_mc", None, seed))
    for weights in cfg["ablate"]["weights"]:
        if len(weights) != env.n_costs:
            raise ConfigError("each ablation weight tuple needs one weight per cost channel")
        for seed in cfg["ablate"]["seeds"]:
            tasks.append((cfg, "weighted_iql", weights, seed))
    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_ablate_one, tasks))
    else:
        rows = [_ablate_one(t) for t in tasks]
    rows.sort(key=lambda r: (r["method"], r["w0"] or 0.0, r["seed"]))
    columns = ["method", "w0", "w1", "seed", "j_reward", "normalized_reward"]
    for j in range(env.n_costs):
        columns += [f"j_cost{j}", f"normalized_cost{j}", f"safe{j}"]
    write_csv(out / "ablation.csv", columns, rows)

    # method-level means for the comparison figure
    settings = []
    for weights in cfg["ablate"]["weights"]:
        sub = [r for r in rows if r["method"] == "weighted_iql" and r["w0"] == weights[0]]
        settings.append((f"w={tuple(int(w) for w in weights)}", sub))
    lexi = [r for r in rows if r["method"] == "lexisafe_mc"]
    xs = list(range(len(settings)))
    series = []
    for key, label in (("normalized_cost0", "crash cost"), ("normalized_cost1", "speed cost"), ("normalized_reward", "reward")):
        series.append((f"weighted {label}", xs, [float(np.mean([r[key] for r in sub])) for _, sub in settings]))
        series.append((f"lexisafe {label}", xs, [float(np.mean([r[key] for r in lexi]))] * len(xs)))
    svg_line_plot(
        out / "ablation.svg",
        series,
        title="lexicographic vs weighted objective (x = weight setting index)",
        xlabel="weight setting",
        ylabel="normalized value",
        hlines=(1.0,),
    )
    print(f"ablation complete: {len(rows)} rows")
    return 0


def cmd_report(cfg: dict, out: Path, args) -> int:
    run_dir = out.parent
    metrics_path = run_dir / "metrics.csv"
    if not metrics_path.exists():
        raise DataError(f"no metrics.csv in {run_dir}; point --out at <run_dir>/report")
    columns, rows = read_metrics(metrics_path)
    steps = [r["step"] for r in rows]
    n_costs = len([c for c in columns if c.startswith("lambda")])

    probe = [(r["step"], r) for r in rows if r.get("oracle_return") is not None]
    if probe:
        xs = [s for s, _ in probe]
        series = [("return", xs, [r["oracle_return"] for _, r in probe])]
        for j in range(n_costs):
            series.append((f"norm cost {j}", xs, [r[f"oracle_norm_cost{j}"] for _, r in probe]))
        svg_line_plot(
            out / "training_curves.svg", series,
            title="exact policy metrics during training",
            xlabel="step", ylabel="value", hlines=(1.0,),
        )
    if n_costs:
        svg_line_plot(
            out / "multipliers.svg",
            [(f"lambda {j}", steps, [r[f"lambda{j}"] for r in rows]) for j in range(n_costs)]
            + [(f"smoothed cost {j}", steps, [r[f"cost_smooth{j}"] for r in rows]) for j in range(n_costs)],
            title="multipliers and smoothed cost estimates",
            xlabel="step", ylabel="value",
        )
    svg_line_plot(
        out / "losses.svg",
        [("reward Q loss", steps, [r["loss_q_reward"] for r in rows]),
         ("reward V loss", steps, [r["loss_v_reward"] for r in rows])],
        title="critic losses", xlabel="step", ylabel="loss",
    )
    lines = [f"run directory: {run_dir}", f"steps logged: {len(rows)}"]
    if probe:
        last = probe[-1][1]
        lines.append(f"final oracle return: {last['oracle_return']:.4f}")
        for j in range(n_costs):
            lines.append(f"final oracle normalized cost {j}: {last[f'oracle_norm_cost{j}']:.4f}")
    (out / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    return 0


_COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "ablate": cmd_ablate,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="lexisafe", description=__doc__)
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="path to the run config file")
    parser.add_argument("--out", default=None, help="output directory (overrides [output] dir)")
    parser.add_argument("--force", action="store_true", help="allow writing into a non-empty output directory")
    parser.add_argument("--jobs", type=int, default=1, help="worker threads for sweep/ablate cells")
    parser.add_argument("--policy", default=None, help="policy checkpoint for eval")
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(load_config(args.config))
        out = args.out or cfg["output"].get("dir")
        if out is None:
            raise ConfigError("no output directory: pass --out or set [output] dir")
        out = prepare_out_dir(out, args.force)
        write_snapshot(cfg, out)
        return _COMMANDS[args.command](cfg, out, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 4
    except LexiSafeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
