"""Per-policy state estimation and free-energy evaluation.

Beliefs Q(s_tau | policy) are obtained by fixed-point sweeps over timesteps:
each sweep replaces Q(s_tau) with the normalized product of the forward
prediction (transition applied to Q(s_{tau-1}), the state prior at tau = 1)
and the likelihood row of the observation at tau, when one exists. Sweeps
repeat until the largest elementwise change drops below the tolerance or the
sweep cap is hit; the result carries a convergence flag either way.

Backward (future-to-past) messages are deliberately not applied: iterating
them to a fixed point re-counts the same evidence every sweep and collapses
beliefs to deltas, and it breaks the pure-prediction contract for unobserved
timesteps. The converged beliefs here are the exact filtered posteriors, for
which the free energy below telescopes to the exact surprisal bound.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import GenerativeModel, Policy
from .numerics import Categorical, clamped_log

CONVERGENCE_TOL = 1e-6
MAX_SWEEPS = 32


@dataclass(frozen=True)
class InferenceResult:
    """Converged (or capped) per-timestep state beliefs for one policy."""

    states: tuple[Categorical, ...]   # Q(s_tau | policy), tau = 1..horizon
    converged: bool
    sweeps: int


@dataclass(frozen=True)
class BeliefEnsemble:
    """Per-policy state beliefs plus the policy posterior for one epoch.

    per_policy_states[i] is None for policies whose action prefix contradicts
    the executed actions; those policies must carry zero posterior mass.
    """

    per_policy_states: tuple[tuple[Categorical, ...] | None, ...]
    policy_posterior: Categorical
    observed: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if len(self.per_policy_states) != len(self.policy_posterior):
            raise ValueError("one belief sequence per policy is required")
        times = [t for t, _ in self.observed]
        if any(later <= earlier for earlier, later in zip(times, times[1:])):
            raise ValueError(f"observed timesteps must be strictly increasing, got {times}")
        for i, states in enumerate(self.per_policy_states):
            if states is None and self.policy_posterior.probs[i] > 0.0:
                raise ValueError(f"policy {i} has posterior mass but no beliefs")


def _check_observed(model: GenerativeModel, observed) -> dict[int, int]:
    obs_map: dict[int, int] = {}
    for timestep, outcome in observed:
        if not 1 <= timestep <= model.horizon:
            raise ValueError(f"observed timestep {timestep} outside 1..{model.horizon}")
        if not 0 <= outcome < model.num_outcomes:
            raise ValueError(f"observed outcome {outcome} outside 0..{model.num_outcomes - 1}")
        if timestep in obs_map:
            raise ValueError(f"duplicate observation for timestep {timestep}")
        obs_map[timestep] = outcome
    return obs_map


def infer_states(
    model: GenerativeModel,
    policy: Policy,
    observed,
    *,
    tol: float = CONVERGENCE_TOL,
    max_sweeps: int = MAX_SWEEPS,
) -> InferenceResult:
    """Estimate Q(s_tau | policy) for tau = 1..horizon given (timestep, outcome) pairs."""
    obs_map = _check_observed(model, observed)
    horizon = model.horizon
    if len(policy.actions) != horizon - 1:
        raise ValueError(f"policy length {len(policy.actions)} does not match horizon {horizon}")

    n = model.num_states
    beliefs = [np.full(n, 1.0 / n) for _ in range(horizon)]
    converged = False
    sweeps = 0
    while sweeps < max_sweeps and not converged:
        sweeps += 1
        delta = 0.0
        for tau in range(1, horizon + 1):
            if tau == 1:
                pred = model.state_prior.probs
            else:
                pred = model.transitions[policy.actions[tau - 2]] @ beliefs[tau - 2]
            if tau in obs_map:
                weighted = model.likelihood[obs_map[tau]] * pred
                total = weighted.sum()
                if total <= 0.0:
                    raise ValueError(
                        f"outcome {obs_map[tau]} at timestep {tau} has zero probability "
                        f"under policy {policy.actions}"
                    )
                new = weighted / total
            else:
                new = pred / pred.sum()
            delta = max(delta, float(np.abs(new - beliefs[tau - 1]).max()))
            beliefs[tau - 1] = new
        converged = delta < tol
    return InferenceResult(
        states=tuple(Categorical(q) for q in beliefs),
        converged=converged,
        sweeps=sweeps,
    )


def vfe(model: GenerativeModel, q_states, observed, policy: Policy) -> float:
    """Variational free energy of the given beliefs, in nats.

    Per timestep: KL from the belief to its forward prediction, minus expected
    log-likelihood of the observation at that timestep if one exists. At the
    converged beliefs this equals the exact surprisal -log P(o_{1:t} | policy).
    """
    obs_map = _check_observed(model, observed)
    if len(q_states) != model.horizon:
        raise ValueError(f"expected {model.horizon} belief vectors, got {len(q_states)}")
    total = 0.0
    for tau in range(1, model.horizon + 1):
        q = q_states[tau - 1].probs
        if q.size != model.num_states:
            raise ValueError(f"belief at timestep {tau} has wrong length {q.size}")
        if tau == 1:
            pred = model.state_prior.probs
        else:
            pred = model.transitions[policy.actions[tau - 2]] @ q_states[tau - 2].probs
        mask = q > 0.0
        total += float((q[mask] * (np.log(q[mask]) - clamped_log(pred[mask]))).sum())
        if tau in obs_map:
            total -= float((q * clamped_log(model.likelihood[obs_map[tau]])).sum())
    return total


def bma_beliefs(ensemble: BeliefEnsemble, timestep: int) -> Categorical:
    """Posterior-weighted average of per-policy state beliefs at one timestep."""
    weights = ensemble.policy_posterior.probs
    mixed = None
    for w, states in zip(weights, ensemble.per_policy_states):
        if w <= 0.0:
            continue
        if timestep < 1 or timestep > len(states):
            raise ValueError(f"timestep {timestep} outside 1..{len(states)}")
        contribution = w * states[timestep - 1].probs
        mixed = contribution if mixed is None else mixed + contribution
    if mixed is None:
        raise ValueError("policy posterior has no mass")
    return Categorical(mixed / mixed.sum())
