"""Trial loop, experiment driver, persistence, and CLI parsing."""
import json
import math

import numpy as np
import pytest

from efeplan.cli import UsageError, config_from_args, main, parse_cli
from efeplan.harness import (
    ExperimentConfig,
    build_tables,
    emit_plot_data,
    run_experiment,
    write_records,
)
from efeplan.model import save_spec
from efeplan.planning import ObjectiveKind
from efeplan.tmaze import BLACK, WHITE, build_tmaze_model, score_outcome


def _config(**kwargs) -> ExperimentConfig:
    return ExperimentConfig(**kwargs)


@pytest.fixture(scope="module")
def efe_record():
    return run_experiment(_config(agent=ObjectiveKind.EXPECTED_FREE_ENERGY))


class TestRunTrial:
    def test_efe_first_trial_goes_cue_then_left(self, efe_record):
        assert efe_record.trials[0].actions == (3, 1)

    def test_info_gain_first_action_is_cue(self):
        record = run_experiment(_config(agent=ObjectiveKind.INFO_GAIN_ONLY, trials=1))
        assert record.trials[0].actions[0] == 3

    def test_expected_utility_trial_start_posterior_is_uniform(self):
        record = run_experiment(_config(agent=ObjectiveKind.EXPECTED_UTILITY_OUTCOMES, trials=1))
        posterior = np.array(record.trials[0].epochs[0].policy_posterior)
        assert np.abs(posterior - 0.1).max() < 1e-9

    def test_expected_utility_first_action_is_a_coin_flip(self):
        # the stay-center and go-cue marginals tie at 0.4; arms sit at 0.1
        picks = set()
        for seed in range(12):
            record = run_experiment(
                _config(agent=ObjectiveKind.EXPECTED_UTILITY_OUTCOMES, trials=1, seed=seed)
            )
            picks.add(record.trials[0].actions[0])
        assert picks == {0, 3}

    def test_replanning_filters_executed_prefix(self, efe_record):
        for trial in efe_record.trials:
            first_action = trial.actions[0]
            posterior = np.array(trial.epochs[1].policy_posterior)
            model = build_tmaze_model()
            for i, policy in enumerate(model.policies):
                if policy.actions[0] != first_action:
                    assert posterior[i] == 0.0

    def test_context_belief_resolves_after_cue(self, efe_record):
        for trial in efe_record.trials:
            bma = np.array(trial.epochs[1].bma_states[1]).reshape(2, 4)
            assert bma.sum(axis=1)[trial.true_context] >= 0.999

    def test_score_accounts_for_every_outcome(self, efe_record):
        total = 0
        for trial in efe_record.trials:
            observed = [epoch.observation for epoch in trial.epochs]
            total += sum(score_outcome(o) for o in observed)
            assert trial.score_delta == sum(score_outcome(o) for o in observed)
        assert efe_record.final_score == total

    def test_cumulative_increments_are_single_outcomes(self, efe_record):
        previous = 0
        for trial in efe_record.trials:
            delta = trial.cumulative_score - previous
            assert delta in (-6, 0, 6)
            previous = trial.cumulative_score


class TestRunExperiment:
    def test_schedule_is_applied(self, efe_record):
        for trial in efe_record.trials:
            expected = BLACK if 10 <= trial.trial <= 12 or trial.trial == 30 else WHITE
            assert trial.true_context == expected

    def test_same_seed_reproduces_records(self):
        a = run_experiment(_config(trials=10, seed=99))
        b = run_experiment(_config(trials=10, seed=99))
        for ta, tb in zip(a.trials, b.trials):
            assert ta.actions == tb.actions
            assert ta.epochs[0].policy_posterior == tb.epochs[0].policy_posterior
            assert ta.score_delta == tb.score_delta

    def test_environment_draws_match_across_agents(self):
        # the cue-first agents visit the same locations, so matched seeds must
        # give them identical outcome sequences
        a = run_experiment(_config(agent=ObjectiveKind.EXPECTED_FREE_ENERGY, trials=5, seed=3))
        b = run_experiment(_config(agent=ObjectiveKind.EXPECTED_FREE_ENERGY, trials=5, seed=3,
                                   precision=2.0))
        for ta, tb in zip(a.trials, b.trials):
            assert [e.observation for e in ta.epochs] == [e.observation for e in tb.epochs]

    def test_custom_trial_count(self):
        record = run_experiment(_config(trials=3))
        assert len(record.trials) == 3

    def test_state_objectives_need_a_risk_prior(self):
        from efeplan.planning import ConfigurationError
        with pytest.raises(ConfigurationError, match="risk_state_prior"):
            run_experiment(_config(agent=ObjectiveKind.EXPECTED_UTILITY_STATES, trials=1))

    def test_state_objectives_run_with_model_supplied_prior(self, tmp_path):
        model = build_tmaze_model()
        path = tmp_path / "maze.json"
        save_spec(model, path)
        doc = json.loads(path.read_text())
        doc["risk_state_prior"] = [0.125] * 8
        path.write_text(json.dumps(doc))
        for agent in (ObjectiveKind.EXPECTED_UTILITY_STATES, ObjectiveKind.RISK_ONLY):
            record = run_experiment(_config(agent=agent, trials=2, model_path=str(path)))
            assert len(record.trials) == 2
            breakdown = record.trials[0].epochs[0].breakdowns[0]
            assert math.isfinite(breakdown.risk_states)
            assert math.isfinite(breakdown.evidence_bound)

    def test_agent_ordering_on_default_seed(self, efe_record):
        eig = run_experiment(_config(agent=ObjectiveKind.INFO_GAIN_ONLY))
        eu = run_experiment(_config(agent=ObjectiveKind.EXPECTED_UTILITY_OUTCOMES))
        assert efe_record.final_score - eu.final_score >= 100
        assert efe_record.final_score - eig.final_score >= 100

    def test_non_maze_model_is_rejected(self, tmp_path):
        import helpers
        rng = np.random.default_rng(71)
        model = helpers.random_model(rng, max_states=3, max_outcomes=3, max_horizon=2)
        path = tmp_path / "small.json"
        save_spec(model, path)
        from efeplan.model import ModelSpecError
        with pytest.raises(ModelSpecError, match="maze-shaped"):
            run_experiment(_config(trials=1, model_path=str(path)))


class TestWriteRecords:
    def test_row_counts(self, efe_record, tmp_path):
        write_records(efe_record, tmp_path, "csv")
        trials = (tmp_path / "trials.csv").read_text().strip().splitlines()
        beliefs = (tmp_path / "beliefs.csv").read_text().strip().splitlines()
        policies = (tmp_path / "policies.csv").read_text().strip().splitlines()
        breakdown = (tmp_path / "breakdown.csv").read_text().strip().splitlines()
        assert len(trials) == 51        # header + 50
        assert len(beliefs) == 151      # header + 50 trials x 3 epochs
        assert len(policies) == 51
        assert len(breakdown) == 1 + 50 * 2 * 10

    def test_cumulative_column_steps(self, efe_record, tmp_path):
        write_records(efe_record, tmp_path, "csv")
        rows = (tmp_path / "trials.csv").read_text().strip().splitlines()[1:]
        previous = 0
        for row in rows:
            cumulative = int(row.split(",")[-1])
            assert cumulative - previous in (-6, 0, 6)
            previous = cumulative

    def test_csv_round_trip(self, efe_record, tmp_path):
        write_records(efe_record, tmp_path, "csv")
        header, *rows = (tmp_path / "policies.csv").read_text().strip().splitlines()
        for row, trial in zip(rows, efe_record.trials):
            values = row.split(",")
            assert int(values[0]) == trial.trial
            stored = trial.epochs[1].policy_posterior
            for text, value in zip(values[1:], stored):
                assert float(text or "nan") == pytest.approx(value, rel=1e-11, abs=1e-12)

    def test_json_single_document(self, efe_record, tmp_path):
        write_records(efe_record, tmp_path, "json")
        doc = json.loads((tmp_path / "records.json").read_text())
        assert doc["config"]["agent"] == "efe"
        assert len(doc["trials"]) == 50
        assert len(doc["beliefs"]) == 150
        assert len(doc["policies"]) == 50
        assert len(doc["breakdown"]) == 50 * 2 * 10
        assert doc["trials"][0]["action1"] == "go-cue"

    def test_byte_identical_across_runs(self, tmp_path):
        for sub in ("a", "b"):
            record = run_experiment(_config(trials=10, seed=5))
            write_records(record, tmp_path / sub, "csv")
            emit_plot_data(record, tmp_path / sub)
        for name in ("trials.csv", "beliefs.csv", "policies.csv", "breakdown.csv",
                     "config.json", "fig2_position_trial1.csv", "fig3_score.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


class TestEmitPlotData:
    def test_first_trial_matrices(self, efe_record, tmp_path):
        emit_plot_data(efe_record, tmp_path)
        position = (tmp_path / "fig2_position_trial1.csv").read_text().strip().splitlines()
        context = (tmp_path / "fig2_context_trial1.csv").read_text().strip().splitlines()
        assert len(position) == 13      # header + 4 locations x 3 epochs
        assert len(context) == 7        # header + 2 contexts x 3 epochs
        assert position[0].split(",") == ["epoch", "location",
                                          "at_epoch1", "at_epoch2", "at_epoch3"]
        assert all(len(line.split(",")) == 5 for line in position[1:])

    def test_score_series_and_bands(self, efe_record, tmp_path):
        emit_plot_data(efe_record, tmp_path)
        score = (tmp_path / "fig3_score.csv").read_text().strip().splitlines()
        assert len(score) == 51
        bands = (tmp_path / "fig3_context_bands.csv").read_text().strip().splitlines()
        assert bands[1:] == ["10,12", "30,30"]

    def test_policy_heatmap_rows(self, efe_record, tmp_path):
        emit_plot_data(efe_record, tmp_path)
        rows = (tmp_path / "fig3_policies.csv").read_text().strip().splitlines()
        assert len(rows) == 51
        assert rows[0].split(",")[1] == "policy1"


class TestParseCli:
    def test_run_defaults(self):
        config = config_from_args(parse_cli(["run", "--agent", "efe", "--seed", "7"]))
        assert config.agent is ObjectiveKind.EXPECTED_FREE_ENERGY
        assert config.trials == 50
        assert config.seed == 7
        assert config.precision == 1.0
        assert config.reward_prob == 0.98
        assert config.output_format == "csv"

    def test_every_agent_name_maps(self):
        names = {
            "efe": ObjectiveKind.EXPECTED_FREE_ENERGY,
            "eig": ObjectiveKind.INFO_GAIN_ONLY,
            "eu": ObjectiveKind.EXPECTED_UTILITY_OUTCOMES,
            "eu-states": ObjectiveKind.EXPECTED_UTILITY_STATES,
            "klc": ObjectiveKind.RISK_ONLY,
        }
        for name, kind in names.items():
            config = config_from_args(parse_cli(["run", "--agent", name]))
            assert config.agent is kind

    def test_unknown_agent_is_usage_error(self):
        with pytest.raises(UsageError):
            parse_cli(["run", "--agent", "bogus"])

    def test_malformed_flag_is_usage_error(self):
        with pytest.raises(UsageError):
            parse_cli(["run", "--trials", "many"])

    def test_main_exit_codes(self, tmp_path, capsys):
        assert main(["run", "--agent", "bogus"]) == 1
        assert main(["run", "--agent", "eu-states", "--trials", "1"]) == 2
        assert main(["validate", "--model", str(tmp_path / "absent.json")]) == 3
        capsys.readouterr()

    def test_main_run_and_validate_succeed(self, tmp_path, capsys):
        save_spec(build_tmaze_model(), tmp_path / "maze.json")
        assert main(["validate", "--model", str(tmp_path / "maze.json")]) == 0
        assert main(["run", "--trials", "2", "--out", str(tmp_path / "out")]) == 0
        assert (tmp_path / "out" / "trials.csv").exists()
        capsys.readouterr()

    def test_main_trial_and_decompose_succeed(self, capsys):
        assert main(["trial", "--agent", "eu", "--seed", "0"]) == 0
        assert main(["decompose", "--agent", "efe"]) == 0
        out = capsys.readouterr().out
        assert "policy" in out


class TestBuildTables:
    def test_breakdown_marks_unviable_policies(self, efe_record):
        tables = build_tables(efe_record)
        header, rows = tables["breakdown"]
        viable_column = header.index("viable")
        epoch_column = header.index("epoch")
        epoch2 = [r for r in rows if r[epoch_column] == 2]
        assert any(r[viable_column] == 0 for r in epoch2)
        for row in epoch2:
            if row[viable_column] == 0:
                assert row[header.index("G")] is None
