"""Policy scoring and action selection.

The full planning objective for a future timestep combines two values to be
maximized: expected information gain about states (how much a predicted
outcome would update state beliefs) and extrinsic value (expected normalized
log-preference of predicted outcomes). Reduced objectives keep one of the two
or score states against a reference prior instead. Per-timestep scores are
summed over the remaining horizon and mapped to a policy distribution by a
softmax at a configurable precision, restricted to policies consistent with
the actions already executed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .model import GenerativeModel, Policy, PolicySet
from .numerics import (
    Categorical,
    clamped_log,
    entropy,
    kl_divergence,
    log_sum_exp,
    softmax,
)


class ConfigurationError(ValueError):
    """Raised when an objective needs inputs the plan context does not carry."""


class ObjectiveKind(Enum):
    """Closed enumeration of planning objectives."""

    EXPECTED_FREE_ENERGY = "efe"          # -info_gain - extrinsic_value
    INFO_GAIN_ONLY = "eig"                # -info_gain
    EXPECTED_UTILITY_OUTCOMES = "eu"      # -extrinsic_value
    EXPECTED_UTILITY_STATES = "eu-states"  # -E_q[log reference_prior(s)]
    RISK_ONLY = "klc"                     # KL(predicted states || reference prior)


@dataclass(frozen=True)
class EfeBreakdown:
    """Score components for one (policy, timestep), all in nats.

    risk_states and evidence_bound need a reference state prior; they are NaN
    when the plan context does not provide one.
    """

    risk_states: float
    ambiguity: float
    intrinsic: float
    extrinsic: float
    evidence_bound: float
    total: float


@dataclass(frozen=True)
class PlanContext:
    """Where the planner stands: epoch, history, and selection parameters."""

    current_epoch: int
    executed_actions: tuple[int, ...] = ()
    precision: float = 1.0
    tie_tolerance: float = 1e-9
    prior_states_for_risk: Categorical | None = None

    def __post_init__(self):
        object.__setattr__(self, "executed_actions", tuple(int(a) for a in self.executed_actions))
        if len(self.executed_actions) != self.current_epoch - 1:
            raise ValueError(
                f"expected {self.current_epoch - 1} executed actions for epoch "
                f"{self.current_epoch}, got {len(self.executed_actions)}"
            )
        if not (math.isfinite(self.precision) and self.precision >= 0.0):
            raise ValueError(f"precision must be a nonnegative real, got {self.precision!r}")


def predictive_states(
    model: GenerativeModel,
    q_now: Categorical,
    policy: Policy,
    from_epoch: int,
    to_epoch: int,
) -> Categorical:
    """Propagate the current state belief along the policy's transitions."""
    if not 1 <= from_epoch <= to_epoch <= model.horizon:
        raise ValueError(
            f"need 1 <= from_epoch <= to_epoch <= {model.horizon}, "
            f"got {from_epoch}..{to_epoch}"
        )
    q = q_now.probs
    for tau in range(from_epoch + 1, to_epoch + 1):
        q = model.transitions[policy.actions[tau - 2]] @ q
    return Categorical(q / q.sum())


def predictive_outcome(q_s: Categorical, likelihood: np.ndarray) -> Categorical:
    """Outcome distribution implied by a state belief."""
    if likelihood.shape[1] != len(q_s):
        raise ValueError(
            f"likelihood has {likelihood.shape[1]} state columns, belief has {len(q_s)}"
        )
    q_o = likelihood @ q_s.probs
    return Categorical(q_o / q_o.sum())


def risk_states(q_s: Categorical, prior_s: Categorical) -> float:
    """Divergence of predicted states from the reference state prior, nats."""
    return kl_divergence(q_s, prior_s)


def ambiguity(q_s: Categorical, likelihood: np.ndarray) -> float:
    """Expected conditional outcome entropy under the state belief, nats."""
    if likelihood.shape[1] != len(q_s):
        raise ValueError(
            f"likelihood has {likelihood.shape[1]} state columns, belief has {len(q_s)}"
        )
    column_entropies = np.where(
        likelihood > 0.0, -likelihood * np.log(np.where(likelihood > 0.0, likelihood, 1.0)), 0.0
    ).sum(axis=0)
    return float(q_s.probs @ column_entropies)


def _outcome_conditioned_posteriors(q_s: np.ndarray, likelihood: np.ndarray):
    """Yield (outcome probability, posterior over states) for outcomes with mass."""
    q_o = likelihood @ q_s
    for o in range(likelihood.shape[0]):
        if q_o[o] <= 0.0:
            continue
        yield float(q_o[o]), likelihood[o] * q_s / q_o[o]


def expected_info_gain(q_s: Categorical, likelihood: np.ndarray) -> float:
    """Mutual information between states and outcomes under the predictive joint.

    Computed as predicted-outcome entropy minus ambiguity; asserts agreement
    with the expected posterior-update divergence when assertions are enabled.
    """
    gain = entropy(predictive_outcome(q_s, likelihood)) - ambiguity(q_s, likelihood)
    if __debug__:
        q = q_s.probs
        by_update = 0.0
        for p_o, post in _outcome_conditioned_posteriors(q, likelihood):
            mask = post > 0.0
            by_update += p_o * float(
                (post[mask] * (np.log(post[mask]) - np.log(q[mask]))).sum()
            )
        assert abs(gain - by_update) < 1e-12, (gain, by_update)
    return gain


def extrinsic_value(q_o: Categorical, preferences: np.ndarray) -> float:
    """Expected normalized log-preference of predicted outcomes, nats."""
    if preferences.shape != (len(q_o),):
        raise ValueError(
            f"preferences has shape {preferences.shape}, expected ({len(q_o)},)"
        )
    return float(q_o.probs @ (preferences - log_sum_exp(preferences)))


def expected_free_energy(
    model: GenerativeModel,
    q_now: Categorical,
    policy: Policy,
    plan_ctx: PlanContext,
    objective: ObjectiveKind,
) -> tuple[float, list[EfeBreakdown]]:
    """Score one policy over the remaining horizon.

    Returns the summed score (lower is better) and a per-future-timestep
    breakdown with every component populated regardless of objective.
    """
    t = plan_ctx.current_epoch
    if t >= model.horizon:
        raise ValueError(f"no future timesteps to plan at epoch {t} of {model.horizon}")
    prior = plan_ctx.prior_states_for_risk
    if objective in (ObjectiveKind.EXPECTED_UTILITY_STATES, ObjectiveKind.RISK_ONLY) and prior is None:
        raise ConfigurationError(
            f"objective {objective.value} requires prior_states_for_risk in the plan context"
        )

    breakdowns: list[EfeBreakdown] = []
    total = 0.0
    for tau in range(t + 1, model.horizon + 1):
        q_s = predictive_states(model, q_now, policy, t, tau)
        q_o = predictive_outcome(q_s, model.likelihood)
        intrinsic = expected_info_gain(q_s, model.likelihood)
        extrinsic = extrinsic_value(q_o, model.preferences)
        ambig = ambiguity(q_s, model.likelihood)
        if prior is not None:
            risk = risk_states(q_s, prior)
            bound = _expected_evidence_bound(q_s.probs, model.likelihood, prior.probs)
        else:
            risk = math.nan
            bound = math.nan

        if objective is ObjectiveKind.EXPECTED_FREE_ENERGY:
            score = -intrinsic - extrinsic
        elif objective is ObjectiveKind.INFO_GAIN_ONLY:
            score = -intrinsic
        elif objective is ObjectiveKind.EXPECTED_UTILITY_OUTCOMES:
            score = -extrinsic
        elif objective is ObjectiveKind.EXPECTED_UTILITY_STATES:
            score = -float(q_s.probs @ clamped_log(prior.probs))
        else:  # RISK_ONLY
            score = risk_states(q_s, prior)

        breakdowns.append(
            EfeBreakdown(
                risk_states=risk,
                ambiguity=ambig,
                intrinsic=intrinsic,
                extrinsic=extrinsic,
                evidence_bound=bound,
                total=score,
            )
        )
        total += score
    return total, breakdowns


def _expected_evidence_bound(q_s: np.ndarray, likelihood: np.ndarray, prior_s: np.ndarray) -> float:
    """E over predicted outcomes of KL[state posterior under q_s || state
    posterior under the reference prior]."""
    p_o_prior = likelihood @ prior_s
    total = 0.0
    q_o = likelihood @ q_s
    for o in range(likelihood.shape[0]):
        if q_o[o] <= 0.0:
            continue
        post_q = likelihood[o] * q_s / q_o[o]
        if p_o_prior[o] > 0.0:
            post_prior = likelihood[o] * prior_s / p_o_prior[o]
        else:
            post_prior = np.zeros_like(prior_s)
        mask = post_q > 0.0
        total += float(q_o[o]) * float(
            (post_q[mask] * (np.log(post_q[mask]) - clamped_log(post_prior[mask]))).sum()
        )
    return total


def policy_posterior(
    g_values,
    policies: PolicySet,
    plan_ctx: PlanContext,
) -> Categorical:
    """Softmax of negative scores at the context precision, restricted to
    policies whose action prefix matches the executed actions."""
    g = np.asarray(g_values, dtype=np.float64)
    if g.shape != (len(policies),):
        raise ValueError(f"expected one score per policy ({len(policies)}), got shape {g.shape}")
    executed = plan_ctx.executed_actions
    viable = [
        i for i, pol in enumerate(policies)
        if pol.actions[: len(executed)] == executed
    ]
    if not viable:
        raise ValueError(f"no policy is consistent with executed actions {executed}")
    if not np.all(np.isfinite(g[viable])):
        raise ValueError("scores of viable policies must be finite")
    kept = softmax(-g[viable], plan_ctx.precision)
    probs = np.zeros(len(policies))
    probs[viable] = kept.probs
    return Categorical(probs)


def action_marginal(
    policy_post: Categorical,
    policies: PolicySet,
    epoch: int,
    num_actions: int,
) -> Categorical:
    """Marginal probability of each action at the given epoch under the posterior."""
    if not policies or len(policy_post) != len(policies):
        raise ValueError("policy posterior and policy set sizes differ")
    horizon_steps = len(policies[0].actions)
    if not 1 <= epoch <= horizon_steps:
        raise ValueError(f"epoch {epoch} outside 1..{horizon_steps}")
    marginal = np.zeros(num_actions)
    for prob, pol in zip(policy_post.probs, policies):
        marginal[pol.actions[epoch - 1]] += prob
    return Categorical(marginal / marginal.sum())


def select_action(
    action_marg: Categorical,
    rng: np.random.Generator,
    tie_tolerance: float = 1e-9,
) -> int:
    """Most likely action; ties within tie_tolerance break uniformly at random.

    Consumes exactly one draw from the generator per call so matched seeds
    stay aligned whether or not a tie occurs.
    """
    probs = action_marg.probs
    tied = np.flatnonzero(probs >= probs.max() - tie_tolerance)
    draw = rng.random()
    return int(tied[int(draw * len(tied))])


def evidence_bound_diagnostic(
    model: GenerativeModel,
    q_now: Categorical,
    policy: Policy,
    plan_ctx: PlanContext,
    prior_states: Categorical,
) -> list[tuple[float, float, float]]:
    """Per future timestep: (info_gain, expected_log_evidence, evidence_bound).

    expected_log_evidence is the predicted-outcome expectation of the log
    marginal outcome probability under the reference prior; the bound is the
    nonnegative gap separating the full score from the other two terms.
    """
    if prior_states is None:
        raise ConfigurationError("evidence_bound_diagnostic requires prior_states")
    t = plan_ctx.current_epoch
    if t >= model.horizon:
        raise ValueError(f"no future timesteps to plan at epoch {t} of {model.horizon}")
    rows: list[tuple[float, float, float]] = []
    p_o = model.likelihood @ prior_states.probs
    for tau in range(t + 1, model.horizon + 1):
        q_s = predictive_states(model, q_now, policy, t, tau)
        info_gain = expected_info_gain(q_s, model.likelihood)
        q_o = model.likelihood @ q_s.probs
        expected_log_evidence = float(q_o @ clamped_log(p_o))
        bound = _expected_evidence_bound(q_s.probs, model.likelihood, prior_states.probs)
        rows.append((info_gain, expected_log_evidence, bound))
    return rows


def state_outcome_utility_comparison(
    model: GenerativeModel,
    q_s: Categorical,
    prior_states: Categorical,
) -> tuple[float, float]:
    """(expected log state prior, expected log outcome prior) under the belief.

    Reported side by side for diagnostics; neither side is asserted to bound
    the other.
    """
    if len(q_s) != model.num_states or len(prior_states) != model.num_states:
        raise ValueError("belief and prior must both range over the model's states")
    e_log_ps = float(q_s.probs @ clamped_log(prior_states.probs))
    q_o = model.likelihood @ q_s.probs
    p_o = model.likelihood @ prior_states.probs
    e_log_po = float(q_o @ clamped_log(p_o))
    return e_log_ps, e_log_po
