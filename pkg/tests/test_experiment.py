import json
from dataclasses import replace

import pytest

from ccd.backends import read_trace, write_trace
from ccd.cli import main
from ccd.experiment import (
    ALPHA_GRID,
    CSV_COLUMNS,
    ConfigError,
    ExperimentConfig,
    GAMMA_GRID,
    csv_row,
    format_csv,
    load_experiment_config,
    parse_config_file,
    record_first_episode_trace,
    run_experiment,
    run_random_prior,
    run_sweep,
    write_run_outputs,
)

QUICK = dict(episodes=8, seed=5)


class TestConfigFile:
    def test_parse_overrides_and_echo(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text(
            "# standard world\n"
            "episodes = 12\n"
            "alpha = 0.25\n"
            "gamma = off\n"
            "expert = random\n"
        )
        cfg = load_experiment_config(path, alpha=0.75, seed=3)
        assert cfg.episodes == 12
        assert cfg.alpha == 0.75  # flag wins over file
        assert cfg.gamma is None
        assert cfg.expert == "random"
        assert cfg.seed == 3

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("episodess = 3\n")
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config_file(path)

    def test_bad_value_rejected(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("alpha = banana\n")
        with pytest.raises(ConfigError):
            parse_config_file(path)

    def test_range_validation_on_load(self):
        with pytest.raises(ConfigError):
            load_experiment_config(None, alpha=3.0)
        with pytest.raises(ConfigError):
            load_experiment_config(None, episodes=0)


class TestRunExperiment:
    def test_deterministic_report(self):
        cfg = ExperimentConfig(**QUICK)
        a = run_experiment(cfg)
        b = run_experiment(cfg)
        assert a.report == b.report
        assert a.episodes == b.episodes

    def test_csv_row_schema(self):
        cfg = ExperimentConfig(**QUICK)
        row = csv_row(cfg, run_experiment(cfg).report)
        assert len(row) == len(CSV_COLUMNS)
        header = format_csv([row]).splitlines()[0]
        assert header == ",".join(CSV_COLUMNS)

    def test_gamma_off_renders_in_csv(self):
        cfg = ExperimentConfig(gamma=None, **QUICK)
        row = csv_row(cfg, run_experiment(cfg).report)
        assert row[CSV_COLUMNS.index("gamma")] == "off"

    def test_outputs_written_and_byte_identical(self, tmp_path):
        cfg = ExperimentConfig(**QUICK)
        run = run_experiment(cfg)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        write_run_outputs(out1, cfg, run)
        write_run_outputs(out2, cfg, run_experiment(cfg))
        for name in ("results.csv", "episodes.jsonl", "config.txt"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
        episodes = [json.loads(l) for l in (out1 / "episodes.jsonl").read_text().splitlines()]
        assert len(episodes) == cfg.episodes

    def test_expert_from_label_file(self, tmp_path):
        from ccd.expert import ClinicalLabelSet, save_label_set
        from ccd.vocab import symptom_names

        labels = ClinicalLabelSet.from_pairs(
            (n, 0.99) for n in symptom_names(14))
        path = tmp_path / "labels.jsonl"
        save_label_set(labels, path)
        cfg = ExperimentConfig(expert=str(path), episodes=2, seed=1)
        run = run_experiment(cfg)
        assert run.report.episode_count == 2


class TestSweeps:
    def test_alpha_sweep_default_grid(self):
        rows, reports = run_sweep(ExperimentConfig(**QUICK), "alpha")
        assert len(rows) == len(ALPHA_GRID)
        got = [float(r[CSV_COLUMNS.index("alpha")]) for r in rows]
        assert got == sorted(got) == list(ALPHA_GRID)

    def test_gamma_grid_includes_disabled(self):
        rows, _ = run_sweep(ExperimentConfig(**QUICK), "gamma")
        gammas = [r[CSV_COLUMNS.index("gamma")] for r in rows]
        assert gammas == ["2.0", "5.0", "10.0", "off"]
        assert len(rows) == len(GAMMA_GRID)

    def test_custom_values_sorted(self):
        rows, _ = run_sweep(ExperimentConfig(**QUICK), "alpha", values=[1.0, 0.0])
        got = [float(r[CSV_COLUMNS.index("alpha")]) for r in rows]
        assert got == [0.0, 1.0]

    def test_rerun_identical(self):
        base = ExperimentConfig(**QUICK)
        a = format_csv(run_sweep(base, "beta", values=[0.0, 0.5])[0])
        b = format_csv(run_sweep(base, "beta", values=[0.0, 0.5])[0])
        assert a == b

    def test_bad_axis_and_values(self):
        with pytest.raises(ConfigError):
            run_sweep(ExperimentConfig(**QUICK), "tau")
        with pytest.raises(ConfigError):
            run_sweep(ExperimentConfig(**QUICK), "alpha", values=[2.0])


class TestRandomPrior:
    def test_two_rows_shared_seeds(self):
        rows, reports = run_random_prior(ExperimentConfig(**QUICK))
        assert len(rows) == 2
        experts = [r[CSV_COLUMNS.index("expert")] for r in rows]
        assert experts == ["noisy", "random"]
        seeds = {r[CSV_COLUMNS.index("seed")] for r in rows}
        assert seeds == {str(QUICK["seed"])}

    def test_identical_case_streams(self):
        # same world seeds: episode truths agree across the pair
        base = ExperimentConfig(**QUICK)
        noisy = run_experiment(base)
        rand = run_experiment(replace(base, expert="random"))
        for a, b in zip(noisy.episodes, rand.episodes):
            assert a.truth == b.truth


class TestReplayPath:
    def test_trace_record_and_replay_reproduces_decode(self, tmp_path):
        from ccd.expert import save_label_set

        cfg = ExperimentConfig(episodes=1, seed=9)
        trace, labels = record_first_episode_trace(cfg)
        path = tmp_path / "ep0.trace"
        labels_path = tmp_path / "ep0.labels"
        write_trace(trace, path)
        save_label_set(labels, labels_path)
        assert read_trace(path) == trace

        original = run_experiment(cfg)
        replay_cfg = ExperimentConfig(
            backend="replay", trace=str(path), expert=str(labels_path),
            episodes=1, seed=9)
        replayed = run_experiment(replay_cfg)
        assert replayed.first_generation.tokens == original.first_generation.tokens
        assert replayed.first_generation.text == original.first_generation.text

    def test_replay_without_labels_still_decodes(self, tmp_path):
        cfg = ExperimentConfig(episodes=1, seed=9)
        trace, _ = record_first_episode_trace(cfg)
        path = tmp_path / "ep0.trace"
        write_trace(trace, path)
        replayed = run_experiment(ExperimentConfig(
            backend="replay", trace=str(path), episodes=1, seed=9))
        assert len(replayed.first_generation.tokens) <= trace.n_steps

    def test_replay_requires_trace(self):
        with pytest.raises(ConfigError):
            run_experiment(ExperimentConfig(backend="replay"))


class TestCli:
    def test_run_writes_outputs_and_figure(self, tmp_path, capsys):
        out = tmp_path / "run"
        rc = main(["run", "--episodes", "6", "--seed", "3", "--out", str(out)])
        assert rc == 0
        printed = capsys.readouterr().out
        assert printed.splitlines()[0] == ",".join(CSV_COLUMNS)
        assert (out / "results.csv").exists()
        assert (out / "results.png").exists()
        assert (out / "episodes.jsonl").exists()

    def test_sweep_cli(self, tmp_path, capsys):
        out = tmp_path / "sweep"
        rc = main(["sweep", "--axis", "gamma", "--values", "2,off",
                   "--episodes", "4", "--seed", "1", "--out", str(out)])
        assert rc == 0
        lines = (out / "sweep_gamma.csv").read_text().splitlines()
        assert len(lines) == 3
        assert (out / "sweep_gamma.png").exists()

    def test_random_prior_cli(self, capsys):
        rc = main(["random-prior", "--episodes", "4", "--seed", "2"])
        assert rc == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 3

    def test_replay_cli(self, tmp_path, capsys):
        trace_path = tmp_path / "t.trace"
        rc = main(["run", "--episodes", "1", "--seed", "4",
                   "--trace", str(trace_path)])
        assert rc == 0
        assert trace_path.exists()
        rc = main(["replay", "--trace", str(trace_path),
                   "--labels", f"{trace_path}.labels"])
        assert rc == 0
        assert "text:" in capsys.readouterr().out

    def test_ablation_flag_spelling(self, capsys):
        rc = main(["run", "--episodes", "2", "--seed", "1",
                   "--ablation", "scd-only"])
        assert rc == 0
        assert ",scd_only," in capsys.readouterr().out

    def test_unknown_config_key_exits_nonzero(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("nope = 1\n")
        rc = main(["run", "--config", str(bad)])
        assert rc == 2

    def test_backend_failure_exits_nonzero(self, tmp_path, capsys):
        corrupt = tmp_path / "corrupt.trace"
        corrupt.write_text('{"vocab": ["<eos>", "a"], "eos_id": 0, "token_map": {}}\n'
                           '{"step": 5, "branch": "original", "logits": [0.0, 0.0]}\n')
        rc = main(["replay", "--trace", str(corrupt)])
        assert rc == 1

    def test_plot_command(self, tmp_path, capsys):
        out = tmp_path / "r"
        main(["run", "--episodes", "4", "--seed", "7", "--out", str(out)])
        fig_dir = tmp_path / "figs"
        rc = main(["plot", "--csv", str(out / "results.csv"), "--out", str(fig_dir)])
        assert rc == 0
        assert (fig_dir / "results.png").exists()
