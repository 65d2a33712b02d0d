"""Command-line interface.

Subcommands: run (full experiment), trial (one trial, verbose), decompose
(score-component table for a model and belief), validate (model spec check).
Exit codes: 0 success, 1 usage error, 2 model/validation error, 3 I/O error.
"""
from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from .harness import (
    ExperimentConfig,
    _sum_breakdowns,
    emit_plot_data,
    run_experiment,
    run_trial,
    write_records,
)
from .model import GenerativeModel, ModelSpecError, load_spec, validate
from .numerics import normalize
from .planning import ConfigurationError, ObjectiveKind, PlanContext, expected_free_energy
from .tmaze import (
    ACTION_LABELS,
    CONTEXT_LABELS,
    OUTCOME_LABELS,
    TmazeEnv,
    build_tmaze_model,
    context_at,
    default_schedule,
)

AGENT_NAMES = tuple(kind.value for kind in ObjectiveKind)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); the contract is 1
        raise UsageError(message)


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--agent", choices=AGENT_NAMES, default="efe",
                   help="planning objective (default: efe)")
    p.add_argument("--seed", type=int, default=0, help="master seed (default: 0)")
    p.add_argument("--precision", type=float, default=1.0,
                   help="softmax inverse temperature over policy scores (default: 1.0)")
    p.add_argument("--tie-tolerance", type=float, default=1e-9,
                   help="action probabilities within this of the maximum tie (default: 1e-9)")
    p.add_argument("--reward-prob", type=float, default=0.98,
                   help="arm reward probability for the built-in maze (default: 0.98)")
    p.add_argument("--model", default=None, help="model spec file (default: built-in maze)")


def parse_cli(argv) -> argparse.Namespace:
    parser = _Parser(prog="efeplan", description="Expected-free-energy planning in a T-maze")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a full multi-trial experiment")
    _add_common_flags(run_p)
    run_p.add_argument("--trials", type=int, default=50, help="number of trials (default: 50)")
    run_p.add_argument("--out", default=None, help="directory for result tables")
    run_p.add_argument("--format", choices=("csv", "json"), default="csv",
                       help="table format (default: csv)")

    trial_p = sub.add_parser("trial", help="run one trial and print the planning detail")
    _add_common_flags(trial_p)
    trial_p.add_argument("--trial", type=int, default=1,
                         help="scheduled trial index to run (default: 1)")

    dec_p = sub.add_parser("decompose", help="print per-policy score components")
    dec_p.add_argument("--model", default=None, help="model spec file (default: built-in maze)")
    dec_p.add_argument("--agent", choices=AGENT_NAMES, default="efe")
    dec_p.add_argument("--beliefs", default=None,
                       help="comma-separated state weights (default: the model's state prior)")
    dec_p.add_argument("--epoch", type=int, default=1, help="planning epoch (default: 1)")
    dec_p.add_argument("--executed", default="",
                       help="comma-separated actions already executed before the epoch")
    dec_p.add_argument("--precision", type=float, default=1.0)

    val_p = sub.add_parser("validate", help="check a model spec file")
    val_p.add_argument("--model", required=True, help="model spec file")

    return parser.parse_args(argv)


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    return ExperimentConfig(
        agent=ObjectiveKind(args.agent),
        trials=getattr(args, "trials", 50),
        seed=args.seed,
        precision=args.precision,
        tie_tolerance=args.tie_tolerance,
        reward_prob=args.reward_prob,
        model_path=args.model,
        output_dir=getattr(args, "out", None),
        output_format=getattr(args, "format", "csv"),
    )


def _load_model(args) -> GenerativeModel:
    if args.model is not None:
        return load_spec(args.model)
    return build_tmaze_model(getattr(args, "reward_prob", 0.98))


def _cmd_run(args) -> int:
    config = config_from_args(args)
    record = run_experiment(config)
    print(f"agent={config.agent.value} trials={config.trials} seed={config.seed} "
          f"final-score={record.final_score} duration={record.duration_seconds:.3f}s")
    if config.output_dir is not None:
        written = write_records(record, config.output_dir, config.output_format)
        written += emit_plot_data(record, config.output_dir)
        for path in written:
            print(f"wrote {path}")
    return 0


def _breakdown_lines(model, g_values, breakdowns) -> list[str]:
    lines = ["policy            G        risk   ambiguity   intrinsic   extrinsic"]
    for i, policy in enumerate(model.policies):
        b = breakdowns[i]
        name = "(" + ",".join(str(a) for a in policy.actions) + ")"
        if b is None:
            lines.append(f"{name:<12} {'-':>10}")
            continue
        risk = "nan" if math.isnan(b.risk_states) else f"{b.risk_states:10.4f}"
        lines.append(
            f"{name:<12} {g_values[i]:10.4f} {risk:>10} {b.ambiguity:11.4f} "
            f"{b.intrinsic:11.4f} {b.extrinsic:11.4f}"
        )
    return lines


def _cmd_trial(args) -> int:
    config = config_from_args(args)
    model = build_tmaze_model(config.reward_prob) if config.model_path is None \
        else load_spec(config.model_path)
    violations = validate(model)
    if violations:
        raise ModelSpecError("invalid model: " + "; ".join(violations))
    schedule = default_schedule(max(args.trial, 50))
    context = context_at(schedule, args.trial)
    streams = np.random.SeedSequence(config.seed).spawn(2 * args.trial)
    env = TmazeEnv(rng=np.random.default_rng(streams[2 * (args.trial - 1)]),
                   reward_prob=config.reward_prob)
    env.reset(context)
    tie_rng = np.random.default_rng(streams[2 * (args.trial - 1) + 1])
    record = run_trial(model, env, config, tie_rng, trial=args.trial)

    print(f"trial {record.trial}: context={CONTEXT_LABELS[record.true_context]} "
          f"agent={config.agent.value}")
    for e in record.epochs:
        print(f"epoch {e.epoch}: observed {OUTCOME_LABELS[e.observation]}")
        if e.action is not None:
            print("\n".join(_breakdown_lines(model, e.g_values, e.breakdowns)))
            marg = " ".join(
                f"{ACTION_LABELS[a]}={p:.4f}" for a, p in enumerate(e.action_marginal)
            )
            print(f"  action marginal: {marg}")
            print(f"  selected: {ACTION_LABELS[e.action]}")
    print(f"score: {record.score_delta}")
    return 0


def _cmd_decompose(args) -> int:
    model = _load_model(args)
    violations = validate(model)
    if violations:
        raise ModelSpecError("invalid model: " + "; ".join(violations))
    if args.beliefs is None:
        q_now = model.state_prior
    else:
        q_now = normalize(np.array([float(x) for x in args.beliefs.split(",")]))
    executed = tuple(int(x) for x in args.executed.split(",")) if args.executed else ()
    ctx = PlanContext(
        current_epoch=args.epoch,
        executed_actions=executed,
        precision=args.precision,
        prior_states_for_risk=model.risk_state_prior,
    )
    objective = ObjectiveKind(args.agent)
    g_values = []
    sums = []
    for policy in model.policies:
        if policy.actions[: len(executed)] != executed:
            g_values.append(math.nan)
            sums.append(None)
            continue
        total, per_tau = expected_free_energy(model, q_now, policy, ctx, objective)
        g_values.append(total)
        sums.append(_sum_breakdowns(per_tau))
    print("\n".join(_breakdown_lines(model, g_values, sums)))
    return 0


def _cmd_validate(args) -> int:
    model = load_spec(args.model)  # raises on schema or invariant problems
    print(f"{args.model}: valid "
          f"({model.num_states} states, {model.num_outcomes} outcomes, "
          f"{model.num_actions} actions, horizon {model.horizon}, "
          f"{len(model.policies)} policies)")
    return 0


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parse_cli(argv)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "trial":
            return _cmd_trial(args)
        if args.command == "decompose":
            return _cmd_decompose(args)
        return _cmd_validate(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ModelSpecError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
