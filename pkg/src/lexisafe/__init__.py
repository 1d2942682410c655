"""Desk-scale offline safe reinforcement learning with lexicographic training.

Single- and multi-cost trainers learn from fixed datasets collected in
built-in tabular constrained MDPs, and every headline quantity (safety,
return, scaling trends) can be checked against exact tabular oracles.
"""

from .critics import CriticSet, ExpectileParams, advantage, expectile_loss
from .data import BehaviorPolicySpec, Dataset, generate_dataset, load_dataset, sample_minibatch, save_dataset
from .envs import CmdpSpec, StepResult, Trajectory, build_env, env_step, featurize, make_chain_hazard, make_grid_twocost
from .errors import (
    BadMagicError,
    ChecksumMismatchError,
    ConfigError,
    DataError,
    HeaderMismatchError,
    LexiSafeError,
    NumericalAbort,
    TruncatedDataError,
    VersionMismatchError,
)
from .evaluation import (
    ConcentrabilityReport,
    EvalReport,
    OracleReport,
    ScalingReport,
    concentrability_estimate,
    fit_loglog_slope,
    kl_monitor,
    policy_evaluation_oracle,
    rollout_eval,
    scaling_sweep,
)
from .nets import AdamState, MlpSpec, adam_step, backward, forward, init_params, soft_update
from .trainers import (
    LexiSafeMC,
    LexiSafeSC,
    PolicyHead,
    TrainConfig,
    TrainState,
    WeightedIQL,
    awr_weight_cost,
    awr_weight_reward,
    extract_policy,
    lambda_update,
    smooth_cost_estimate,
    train_step_mc,
    train_step_sc,
    train_step_weighted_baseline,
)

__version__ = "0.1.0"
