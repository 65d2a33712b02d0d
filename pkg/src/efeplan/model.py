"""Discrete POMDP generative models: definition, validation, file round-trip.

A model is the tuple (likelihood, transitions, preferences, state_prior,
policies, horizon). Likelihood columns are outcome distributions per state;
each transition matrix column is a next-state distribution per current state.
Preferences are raw utilities (unnormalized log-preferences over outcomes);
normalization happens at use-site in planning so the configured values are
preserved verbatim.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numerics import NORM_TOL, Categorical


class ModelSpecError(ValueError):
    """Raised when a model spec file is missing, malformed, or invalid."""


@dataclass(frozen=True)
class Policy:
    """A fixed sequence of action indices, one per transition of the horizon."""

    actions: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(int(a) for a in self.actions))


@dataclass(frozen=True)
class PolicySet:
    """Ordered, duplicate-free collection of policies."""

    policies: tuple[Policy, ...]

    def __post_init__(self):
        object.__setattr__(self, "policies", tuple(self.policies))
        if len(self.policies) == 0:
            raise ValueError("policy set must be nonempty")
        if len({p.actions for p in self.policies}) != len(self.policies):
            raise ValueError("policy set contains duplicates")

    def __len__(self) -> int:
        return len(self.policies)

    def __iter__(self):
        return iter(self.policies)

    def __getitem__(self, i: int) -> Policy:
        return self.policies[i]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64).copy()
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class GenerativeModel:
    """Immutable discrete POMDP. Invariants are checked by validate(), not here,
    so deliberately broken models can be constructed and reported on."""

    num_states: int
    num_outcomes: int
    num_actions: int
    horizon: int
    likelihood: np.ndarray            # num_outcomes x num_states, columns stochastic
    transitions: tuple[np.ndarray, ...]  # per action, num_states x num_states, columns stochastic
    preferences: np.ndarray           # raw utilities over outcomes, nats up to normalization
    state_prior: Categorical          # over states at the first epoch
    policies: PolicySet
    state_labels: tuple[str, ...] | None = None
    outcome_labels: tuple[str, ...] | None = None
    action_labels: tuple[str, ...] | None = None
    risk_state_prior: Categorical | None = None  # optional reference prior for risk-based objectives

    def __post_init__(self):
        object.__setattr__(self, "likelihood", _readonly(self.likelihood))
        object.__setattr__(self, "transitions", tuple(_readonly(b) for b in self.transitions))
        object.__setattr__(self, "preferences", _readonly(self.preferences))


def _check_columns(name: str, matrix: np.ndarray, violations: list[str]) -> None:
    for col in range(matrix.shape[1]):
        column = matrix[:, col]
        if np.any(column < 0.0):
            violations.append(f"{name} column {col} has a negative entry")
        total = column.sum()
        if abs(total - 1.0) > NORM_TOL:
            violations.append(f"{name} column {col} sums to {total!r}, expected 1")


def validate(model: GenerativeModel) -> list[str]:
    """Return every invariant violation with its location; empty means valid."""
    v: list[str] = []
    if model.num_states < 1 or model.num_outcomes < 1 or model.num_actions < 1:
        v.append("num_states, num_outcomes, num_actions must all be positive")
        return v
    if model.horizon < 1:
        v.append(f"horizon must be positive, got {model.horizon}")

    if model.likelihood.shape != (model.num_outcomes, model.num_states):
        v.append(
            f"likelihood has shape {model.likelihood.shape}, "
            f"expected ({model.num_outcomes}, {model.num_states})"
        )
    else:
        _check_columns("likelihood", model.likelihood, v)

    if len(model.transitions) != model.num_actions:
        v.append(f"expected {model.num_actions} transition matrices, got {len(model.transitions)}")
    for u, b in enumerate(model.transitions):
        if b.shape != (model.num_states, model.num_states):
            v.append(
                f"transition[{u}] has shape {b.shape}, "
                f"expected ({model.num_states}, {model.num_states})"
            )
        else:
            _check_columns(f"transition[{u}]", b, v)

    if model.preferences.shape != (model.num_outcomes,):
        v.append(
            f"preferences has length {model.preferences.shape}, expected {model.num_outcomes}"
        )
    if len(model.state_prior) != model.num_states:
        v.append(f"state prior has length {len(model.state_prior)}, expected {model.num_states}")
    if model.risk_state_prior is not None and len(model.risk_state_prior) != model.num_states:
        v.append(
            f"risk state prior has length {len(model.risk_state_prior)}, "
            f"expected {model.num_states}"
        )

    for i, policy in enumerate(model.policies):
        if len(policy.actions) != model.horizon - 1:
            v.append(
                f"policy {i} has length {len(policy.actions)}, expected {model.horizon - 1}"
            )
        for j, a in enumerate(policy.actions):
            if not 0 <= a < model.num_actions:
                v.append(f"policy {i} action {j} is {a}, outside 0..{model.num_actions - 1}")
    return v


# ---------------------------------------------------------------------------
# Spec-file round trip. The on-disk format is a JSON key-value tree; floats
# are written with repr precision (>= 15 significant digits) so a save/load
# cycle is numerically exact.
# ---------------------------------------------------------------------------

_REQUIRED_KEYS = ("num_states", "num_outcomes", "num_actions", "horizon",
                  "A", "B", "C", "D", "policies")


def _require_matrix(name: str, raw, rows: int, cols: int) -> np.ndarray:
    if not isinstance(raw, list) or len(raw) != rows:
        raise ModelSpecError(f"{name} must be a list of {rows} rows")
    out = np.empty((rows, cols), dtype=np.float64)
    for i, row in enumerate(raw):
        if not isinstance(row, list) or len(row) != cols:
            raise ModelSpecError(f"{name} row {i} must be a list of {cols} numbers")
        for j, x in enumerate(row):
            if not isinstance(x, (int, float)) or isinstance(x, bool):
                raise ModelSpecError(f"{name}[{i}][{j}] is not a number: {x!r}")
            if x < 0.0:
                raise ModelSpecError(f"{name}[{i}][{j}] = {x!r}: negative probability")
            out[i, j] = float(x)
    return out


def _require_vector(name: str, raw, length: int, nonnegative: bool) -> np.ndarray:
    if not isinstance(raw, list) or len(raw) != length:
        raise ModelSpecError(f"{name} must be a list of {length} numbers")
    out = np.empty(length, dtype=np.float64)
    for i, x in enumerate(raw):
        if not isinstance(x, (int, float)) or isinstance(x, bool):
            raise ModelSpecError(f"{name}[{i}] is not a number: {x!r}")
        if nonnegative and x < 0.0:
            raise ModelSpecError(f"{name}[{i}] = {x!r}: negative probability")
        out[i] = float(x)
    return out


def _optional_labels(doc: dict, key: str, length: int) -> tuple[str, ...] | None:
    raw = doc.get(key)
    if raw is None:
        return None
    if not isinstance(raw, list) or len(raw) != length or not all(isinstance(s, str) for s in raw):
        raise ModelSpecError(f"{key} must be a list of {length} strings")
    return tuple(raw)


def load_spec(path) -> GenerativeModel:
    """Read a model spec file, checking schema and invariants."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"model spec file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ModelSpecError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelSpecError("model spec must be a key-value tree")

    for key in _REQUIRED_KEYS:
        if key not in doc:
            raise ModelSpecError(f"missing required key: {key}")
    dims = {}
    for key in ("num_states", "num_outcomes", "num_actions", "horizon"):
        value = doc[key]
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            raise ModelSpecError(f"{key} must be a positive integer, got {value!r}")
        dims[key] = value
    n_s, n_o, n_u, horizon = (dims[k] for k in
                              ("num_states", "num_outcomes", "num_actions", "horizon"))

    a = _require_matrix("A", doc["A"], n_o, n_s)
    raw_b = doc["B"]
    if not isinstance(raw_b, list) or len(raw_b) != n_u:
        raise ModelSpecError(f"B must be a list of {n_u} matrices")
    b = tuple(_require_matrix(f"B[{u}]", raw_b[u], n_s, n_s) for u in range(n_u))
    c = _require_vector("C", doc["C"], n_o, nonnegative=False)
    d = _require_vector("D", doc["D"], n_s, nonnegative=True)

    raw_policies = doc["policies"]
    if not isinstance(raw_policies, list) or not raw_policies:
        raise ModelSpecError("policies must be a nonempty list of integer lists")
    policies = []
    for i, seq in enumerate(raw_policies):
        if not isinstance(seq, list) or not all(
            isinstance(x, int) and not isinstance(x, bool) for x in seq
        ):
            raise ModelSpecError(f"policies[{i}] must be a list of integers")
        policies.append(Policy(tuple(seq)))

    risk_prior = None
    if doc.get("risk_state_prior") is not None:
        risk_prior = Categorical(_require_vector("risk_state_prior", doc["risk_state_prior"],
                                                 n_s, nonnegative=True))

    try:
        state_prior = Categorical(d)
    except ValueError as exc:
        raise ModelSpecError(f"D is not a valid distribution: {exc}") from exc

    model = GenerativeModel(
        num_states=n_s,
        num_outcomes=n_o,
        num_actions=n_u,
        horizon=horizon,
        likelihood=a,
        transitions=b,
        preferences=c,
        state_prior=state_prior,
        policies=PolicySet(tuple(policies)),
        state_labels=_optional_labels(doc, "state_labels", n_s),
        outcome_labels=_optional_labels(doc, "outcome_labels", n_o),
        action_labels=_optional_labels(doc, "action_labels", n_u),
        risk_state_prior=risk_prior,
    )
    violations = validate(model)
    if violations:
        raise ModelSpecError("invalid model: " + "; ".join(violations))
    return model


def save_spec(model: GenerativeModel, path) -> None:
    """Write a model spec file that load_spec reads back exactly."""
    doc: dict = {
        "num_states": model.num_states,
        "num_outcomes": model.num_outcomes,
        "num_actions": model.num_actions,
        "horizon": model.horizon,
        "A": model.likelihood.tolist(),
        "B": [b.tolist() for b in model.transitions],
        "C": model.preferences.tolist(),
        "D": model.state_prior.probs.tolist(),
        "policies": [list(p.actions) for p in model.policies],
    }
    if model.state_labels is not None:
        doc["state_labels"] = list(model.state_labels)
    if model.outcome_labels is not None:
        doc["outcome_labels"] = list(model.outcome_labels)
    if model.action_labels is not None:
        doc["action_labels"] = list(model.action_labels)
    if model.risk_state_prior is not None:
        doc["risk_state_prior"] = model.risk_state_prior.probs.tolist()
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
