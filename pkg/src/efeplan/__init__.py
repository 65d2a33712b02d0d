"""Discrete-state active inference engine with a T-maze foraging harness."""

from .harness import (
    ExperimentConfig,
    ExperimentRecord,
    TrialRecord,
    emit_plot_data,
    run_experiment,
    run_trial,
    write_records,
)
from .inference import BeliefEnsemble, InferenceResult, bma_beliefs, infer_states, vfe
from .model import (
    GenerativeModel,
    ModelSpecError,
    Policy,
    PolicySet,
    load_spec,
    save_spec,
    validate,
)
from .numerics import (
    Categorical,
    DegenerateDistributionError,
    entropy,
    kl_divergence,
    normalize,
    softmax,
)
from .planning import (
    ConfigurationError,
    EfeBreakdown,
    ObjectiveKind,
    PlanContext,
    action_marginal,
    ambiguity,
    evidence_bound_diagnostic,
    expected_free_energy,
    expected_info_gain,
    extrinsic_value,
    policy_posterior,
    predictive_outcome,
    predictive_states,
    risk_states,
    select_action,
    state_outcome_utility_comparison,
)
from .tmaze import (
    ContextSchedule,
    TmazeEnv,
    build_tmaze_model,
    context_at,
    default_schedule,
    score_outcome,
)

__all__ = [
    "BeliefEnsemble",
    "Categorical",
    "ConfigurationError",
    "ContextSchedule",
    "DegenerateDistributionError",
    "EfeBreakdown",
    "ExperimentConfig",
    "ExperimentRecord",
    "GenerativeModel",
    "InferenceResult",
    "ModelSpecError",
    "ObjectiveKind",
    "PlanContext",
    "Policy",
    "PolicySet",
    "TmazeEnv",
    "TrialRecord",
    "action_marginal",
    "ambiguity",
    "bma_beliefs",
    "build_tmaze_model",
    "context_at",
    "default_schedule",
    "emit_plot_data",
    "entropy",
    "evidence_bound_diagnostic",
    "expected_free_energy",
    "expected_info_gain",
    "extrinsic_value",
    "infer_states",
    "kl_divergence",
    "load_spec",
    "normalize",
    "policy_posterior",
    "predictive_outcome",
    "predictive_states",
    "risk_states",
    "run_experiment",
    "run_trial",
    "save_spec",
    "score_outcome",
    "select_action",
    "softmax",
    "state_outcome_utility_comparison",
    "validate",
    "vfe",
    "write_records",
]
