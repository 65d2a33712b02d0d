"""Closed-loop trial runner, experiment driver, and result persistence.

Each trial runs perceive -> infer -> plan -> act over the model horizon,
re-planning every epoch with policies filtered to the executed action prefix.
Beliefs reset between trials. One master seed derives an independent
(environment, tie-break) generator pair per trial, so environment draws on
matched seeds are identical across agents.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .inference import BeliefEnsemble, bma_beliefs, infer_states
from .model import GenerativeModel, ModelSpecError, load_spec, validate
from .planning import (
    ConfigurationError,
    EfeBreakdown,
    ObjectiveKind,
    PlanContext,
    action_marginal,
    expected_free_energy,
    policy_posterior,
    select_action,
)
from .tmaze import (
    ACTION_LABELS,
    CONTEXT_LABELS,
    LOCATION_LABELS,
    TmazeEnv,
    build_tmaze_model,
    context_at,
    default_schedule,
    score_outcome,
)

_OBJECTIVES_NEEDING_PRIOR = (ObjectiveKind.EXPECTED_UTILITY_STATES, ObjectiveKind.RISK_ONLY)


@dataclass(frozen=True)
class ExperimentConfig:
    agent: ObjectiveKind = ObjectiveKind.EXPECTED_FREE_ENERGY
    trials: int = 50
    seed: int = 0
    precision: float = 1.0
    tie_tolerance: float = 1e-9
    reward_prob: float = 0.98
    model_path: str | None = None
    output_dir: str | None = None
    output_format: str = "csv"

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if not (math.isfinite(self.precision) and self.precision >= 0.0):
            raise ValueError(f"precision must be a nonnegative real, got {self.precision!r}")
        if self.output_format not in ("csv", "json"):
            raise ValueError(f"output_format must be csv or json, got {self.output_format!r}")


@dataclass(frozen=True)
class EpochRecord:
    """Everything observed, believed, and decided at one epoch of a trial."""

    epoch: int
    observation: int
    action: int | None                      # None at the final epoch
    action_marginal: tuple[float, ...] | None
    policy_posterior: tuple[float, ...]
    bma_states: tuple[tuple[float, ...], ...]  # state marginal per timestep 1..horizon
    g_values: tuple[float, ...]             # NaN for prefix-inconsistent policies
    breakdowns: tuple[EfeBreakdown | None, ...]  # summed over future epochs; None if not planned


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    true_context: int
    epochs: tuple[EpochRecord, ...]
    actions: tuple[int, ...]
    score_delta: int
    cumulative_score: int


@dataclass(frozen=True)
class ExperimentRecord:
    config: ExperimentConfig
    trials: tuple[TrialRecord, ...]
    final_score: int
    duration_seconds: float


def _sum_breakdowns(parts: list[EfeBreakdown]) -> EfeBreakdown:
    return EfeBreakdown(
        risk_states=sum(p.risk_states for p in parts),
        ambiguity=sum(p.ambiguity for p in parts),
        intrinsic=sum(p.intrinsic for p in parts),
        extrinsic=sum(p.extrinsic for p in parts),
        evidence_bound=sum(p.evidence_bound for p in parts),
        total=sum(p.total for p in parts),
    )


def run_trial(
    model: GenerativeModel,
    env: TmazeEnv,
    config: ExperimentConfig,
    rng: np.random.Generator,
    *,
    trial: int = 1,
    cumulative_before: int = 0,
) -> TrialRecord:
    """One full trial; the env must already sit at the center with its context set."""
    policies = model.policies
    horizon = model.horizon
    prior = model.risk_state_prior

    observations = [env.observe()]
    executed: list[int] = []
    epoch_records: list[EpochRecord] = []

    for epoch in range(1, horizon + 1):
        observed = tuple((i + 1, o) for i, o in enumerate(observations))
        prefix = tuple(executed)
        viable = [i for i, pol in enumerate(policies) if pol.actions[: len(prefix)] == prefix]
        beliefs: list[tuple | None] = [None] * len(policies)
        for i in viable:
            beliefs[i] = infer_states(model, policies[i], observed).states

        ctx = PlanContext(
            current_epoch=epoch,
            executed_actions=prefix,
            precision=config.precision,
            tie_tolerance=config.tie_tolerance,
            prior_states_for_risk=prior,
        )
        g = np.full(len(policies), math.nan)
        breakdowns: list[EfeBreakdown | None] = [None] * len(policies)
        if epoch < horizon:
            for i in viable:
                g[i], per_tau = expected_free_energy(
                    model, beliefs[i][epoch - 1], policies[i], ctx, config.agent
                )
                breakdowns[i] = _sum_breakdowns(per_tau)
        else:
            g[viable] = 0.0  # no future left; posterior reduces to the prefix filter

        post = policy_posterior(g, policies, ctx)
        ensemble = BeliefEnsemble(
            per_policy_states=tuple(beliefs),
            policy_posterior=post,
            observed=observed,
        )
        bma_states = tuple(
            tuple(float(x) for x in bma_beliefs(ensemble, tau).probs)
            for tau in range(1, horizon + 1)
        )

        action = None
        marginal = None
        if epoch < horizon:
            marg = action_marginal(post, policies, epoch, model.num_actions)
            marginal = tuple(float(x) for x in marg.probs)
            action = select_action(marg, rng, config.tie_tolerance)
            executed.append(action)
            observations.append(env.step(action))

        epoch_records.append(
            EpochRecord(
                epoch=epoch,
                observation=observed[-1][1],
                action=action,
                action_marginal=marginal,
                policy_posterior=tuple(float(x) for x in post.probs),
                bma_states=bma_states,
                g_values=tuple(float(x) for x in g),
                breakdowns=tuple(breakdowns),
            )
        )

    score_delta = sum(score_outcome(o) for o in observations)
    return TrialRecord(
        trial=trial,
        true_context=env.true_context,
        epochs=tuple(epoch_records),
        actions=tuple(executed),
        score_delta=score_delta,
        cumulative_score=cumulative_before + score_delta,
    )


def _resolve_model(config: ExperimentConfig) -> GenerativeModel:
    if config.model_path is not None:
        model = load_spec(config.model_path)
    else:
        model = build_tmaze_model(config.reward_prob)
    violations = validate(model)
    if violations:
        raise ModelSpecError("invalid model: " + "; ".join(violations))
    if config.agent in _OBJECTIVES_NEEDING_PRIOR and model.risk_state_prior is None:
        raise ConfigurationError(
            f"agent '{config.agent.value}' requires a model spec that provides "
            "risk_state_prior (the built-in maze model does not define one)"
        )
    return model


def _require_maze_shape(model: GenerativeModel) -> None:
    shape = (model.num_states, model.num_outcomes, model.num_actions, model.horizon)
    if shape != (8, 7, 4, 3):
        raise ModelSpecError(
            f"the experiment driver needs a maze-shaped model "
            f"(8 states, 7 outcomes, 4 actions, horizon 3); got {shape}"
        )


def run_experiment(config: ExperimentConfig) -> ExperimentRecord:
    """Run the scheduled trials; fully deterministic for a given config."""
    start = time.perf_counter()
    model = _resolve_model(config)
    _require_maze_shape(model)
    schedule = default_schedule(config.trials)
    streams = np.random.SeedSequence(config.seed).spawn(2 * config.trials)

    records: list[TrialRecord] = []
    cumulative = 0
    for index in range(config.trials):
        trial = index + 1
        env = TmazeEnv(
            rng=np.random.default_rng(streams[2 * index]),
            reward_prob=config.reward_prob,
        )
        env.reset(context_at(schedule, trial))
        tie_rng = np.random.default_rng(streams[2 * index + 1])
        record = run_trial(
            model, env, config, tie_rng, trial=trial, cumulative_before=cumulative
        )
        cumulative = record.cumulative_score
        records.append(record)

    return ExperimentRecord(
        config=config,
        trials=tuple(records),
        final_score=cumulative,
        duration_seconds=time.perf_counter() - start,
    )


# ---------------------------------------------------------------------------
# Persistence. Floats are printed with 12 significant digits; every file is
# byte-identical across runs of the same config (no timestamps).
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        if math.isnan(x):
            return ""
        return f"{x:.12g}"
    return str(x)


def _jsonable(x):
    if isinstance(x, float):
        if math.isnan(x):
            return None
        return float(f"{x:.12g}")
    return x


def _config_echo(config: ExperimentConfig) -> dict:
    return {
        "agent": config.agent.value,
        "trials": config.trials,
        "seed": config.seed,
        "precision": config.precision,
        "tie_tolerance": config.tie_tolerance,
        "reward_prob": config.reward_prob,
        "model_path": config.model_path,
        "output_format": config.output_format,
    }


def _state_marginal_columns(num_states: int) -> list[str]:
    if num_states == 8:
        return ["loc_center", "loc_left", "loc_right", "loc_cue", "ctx_white", "ctx_black"]
    return [f"state_{s}" for s in range(num_states)]


def _state_marginal_values(bma: tuple[float, ...]) -> list[float]:
    if len(bma) == 8:
        probs = np.asarray(bma).reshape(2, 4)
        return [*probs.sum(axis=0).tolist(), *probs.sum(axis=1).tolist()]
    return list(bma)


def build_tables(record: ExperimentRecord) -> dict[str, tuple[list[str], list[list]]]:
    """Assemble the output tables as (header, rows) pairs keyed by table name."""
    num_policies = len(record.trials[0].epochs[0].policy_posterior)
    num_states = len(record.trials[0].epochs[0].bma_states[0])

    trials_rows = []
    beliefs_rows = []
    policies_rows = []
    breakdown_rows = []
    for tr in record.trials:
        planning_epochs = [e for e in tr.epochs if e.action is not None]
        trials_rows.append([
            tr.trial,
            CONTEXT_LABELS[tr.true_context],
            *[ACTION_LABELS[a] for a in tr.actions],
            tr.score_delta,
            tr.cumulative_score,
        ])
        for e in tr.epochs:
            beliefs_rows.append(
                [tr.trial, e.epoch, *_state_marginal_values(e.bma_states[e.epoch - 1])]
            )
        final_planning = planning_epochs[-1]
        policies_rows.append([tr.trial, *final_planning.policy_posterior])
        for e in planning_epochs:
            for i in range(num_policies):
                b = e.breakdowns[i]
                viable = 0 if b is None else 1
                breakdown_rows.append([
                    tr.trial, e.epoch, i + 1, viable,
                    None if b is None else b.risk_states,
                    None if b is None else b.ambiguity,
                    None if b is None else b.intrinsic,
                    None if b is None else b.extrinsic,
                    None if b is None else b.total,
                ])

    action_cols = [f"action{k}" for k in range(1, len(record.trials[0].actions) + 1)]
    return {
        "trials": (
            ["trial", "context", *action_cols, "score", "cumulative"],
            trials_rows,
        ),
        "beliefs": (
            ["trial", "epoch", *_state_marginal_columns(num_states)],
            beliefs_rows,
        ),
        "policies": (
            ["trial", *[f"policy{i + 1}" for i in range(num_policies)]],
            policies_rows,
        ),
        "breakdown": (
            ["trial", "epoch", "policy", "viable",
             "risk", "ambiguity", "intrinsic", "extrinsic", "G"],
            breakdown_rows,
        ),
    }


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(x) for x in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


def write_records(record: ExperimentRecord, output_dir, fmt: str = "csv") -> list[Path]:
    """Emit the trials/beliefs/policies/breakdown tables plus a config echo."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    tables = build_tables(record)
    written: list[Path] = []
    if fmt == "csv":
        for name, (header, rows) in tables.items():
            path = out / f"{name}.csv"
            _write_csv(path, header, rows)
            written.append(path)
        config_path = out / "config.json"
        config_path.write_text(json.dumps(_config_echo(record.config), indent=2) + "\n")
        written.append(config_path)
    elif fmt == "json":
        doc = {"config": _config_echo(record.config)}
        for name, (header, rows) in tables.items():
            doc[name] = [
                {key: _jsonable(value) for key, value in zip(header, row)} for row in rows
            ]
        path = out / "records.json"
        path.write_text(json.dumps(doc, indent=2) + "\n")
        written.append(path)
    else:
        raise ValueError(f"unknown output format: {fmt!r}")
    return written


def _black_bands(contexts: list[int]) -> list[tuple[int, int]]:
    bands = []
    start = None
    for trial, context in enumerate(contexts, start=1):
        if context == 1 and start is None:
            start = trial
        elif context != 1 and start is not None:
            bands.append((start, trial - 1))
            start = None
    if start is not None:
        bands.append((start, len(contexts)))
    return bands


def emit_plot_data(record: ExperimentRecord, output_dir) -> list[Path]:
    """Numeric tables for the first-trial belief matrices and the run series."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    first = record.trials[0]
    horizon = len(first.epochs)
    num_states = len(first.epochs[0].bma_states[0])
    if num_states != 8:
        raise ValueError("plot data emission expects the 8-state maze layout")

    held_cols = [f"at_epoch{h}" for h in range(1, horizon + 1)]
    position_rows = []
    context_rows = []
    for about in range(1, horizon + 1):
        grids = [
            np.asarray(first.epochs[h - 1].bma_states[about - 1]).reshape(2, 4)
            for h in range(1, horizon + 1)
        ]
        for loc in range(4):
            position_rows.append(
                [about, LOCATION_LABELS[loc], *[float(g.sum(axis=0)[loc]) for g in grids]]
            )
        for ctx in range(2):
            context_rows.append(
                [about, CONTEXT_LABELS[ctx], *[float(g.sum(axis=1)[ctx]) for g in grids]]
            )

    written = []
    path = out / "fig2_position_trial1.csv"
    _write_csv(path, ["epoch", "location", *held_cols], position_rows)
    written.append(path)
    path = out / "fig2_context_trial1.csv"
    _write_csv(path, ["epoch", "context", *held_cols], context_rows)
    written.append(path)

    num_policies = len(first.epochs[0].policy_posterior)
    policy_rows = []
    score_rows = []
    for tr in record.trials:
        final_planning = [e for e in tr.epochs if e.action is not None][-1]
        policy_rows.append([tr.trial, *final_planning.policy_posterior])
        score_rows.append([tr.trial, CONTEXT_LABELS[tr.true_context], tr.cumulative_score])
    path = out / "fig3_policies.csv"
    _write_csv(path, ["trial", *[f"policy{i + 1}" for i in range(num_policies)]], policy_rows)
    written.append(path)
    path = out / "fig3_score.csv"
    _write_csv(path, ["trial", "context", "cumulative"], score_rows)
    written.append(path)

    bands = _black_bands([tr.true_context for tr in record.trials])
    path = out / "fig3_context_bands.csv"
    _write_csv(path, ["start", "end"], [list(band) for band in bands])
    written.append(path)
    return written
