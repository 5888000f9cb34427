"""Config parsing, replicate execution, CSV plumbing, and the CLI."""

from __future__ import annotations

import os
from dataclasses import replace

import numpy as np
import pytest

from wavesel import cli
from wavesel.errors import (
    EmptyInput,
    InvalidInput,
    IoError,
    ParseError,
    ValidationError,
)
from wavesel.harness import (
    AGG_HEADER,
    PER_CPI_HEADER,
    PER_TRACK_HEADER,
    PHYSICAL_MU_STAR,
    SYNTHETIC_MU_STAR,
    ExperimentConfig,
    aggregate,
    aggregate_directory,
    build_scene,
    cpi_csv_path,
    load_config,
    parse_config,
    read_track_table,
    run,
    run_experiment,
    serialize_config,
    track_csv_path,
    worker_count,
    write_aggregates,
)
from wavesel.meta import POLICIES, policy_index


def _tiny_config(out_dir: str, **overrides) -> ExperimentConfig:
    base = dict(m=2, n=16, k=3, seeds=(0, 1), out_dir=out_dir)
    base.update(overrides)
    return replace(ExperimentConfig(), **base)


# ---------------------------------------------------------------------------
# config parsing


def test_empty_config_gives_defaults():
    config = parse_config("")
    assert config.m == 50
    assert config.n == 200
    assert config.k == 5
    assert config.d == 3
    assert config.seeds == tuple(range(20))
    assert config.policies == POLICIES
    assert config.mode == "synthetic"
    assert config.mu_star is None


def test_comments_and_blank_lines_are_skipped():
    text = "\n# full comment\n  \nm = 3  # trailing comment\n"
    assert parse_config(text).m == 3


def test_later_lines_win():
    assert parse_config("m = 3\nm = 7\n").m == 7


def test_m_zero_is_rejected_by_name():
    with pytest.raises(ValidationError) as info:
        parse_config("m = 0\n")
    assert info.value.field == "m"


def test_unknown_key_is_rejected():
    with pytest.raises(ValidationError) as info:
        parse_config("cadence = 4\n")
    assert info.value.field == "cadence"


def test_missing_equals_reports_line_and_column():
    with pytest.raises(ParseError) as info:
        parse_config("m = 3\njust words\n")
    assert info.value.line == 2
    assert info.value.column == 1


def test_missing_key_reports_column_one():
    with pytest.raises(ParseError) as info:
        parse_config(" = 5\n")
    assert info.value.line == 1
    assert info.value.column == 1


def test_missing_value_points_past_equals():
    with pytest.raises(ParseError) as info:
        parse_config("n =\n")
    assert info.value.line == 1
    assert info.value.column == 4


def test_bad_value_reports_location():
    with pytest.raises(ParseError) as info:
        parse_config("m = 3\nn = x\n")
    assert info.value.line == 2
    assert info.value.column == 4


@pytest.mark.parametrize(
    "line,field",
    [
        ("sigma_q_sq = 0.0", "sigma_q_sq"),
        ("sigma_sq = -1.0", "sigma_sq"),
        ("obs_flip_prob = 1.5", "obs_flip_prob"),
        ("n_states = 1", "n_states"),
        ("mode = simulated", "mode"),
        ("policies = random,epsilon-greedy", "policies"),
        ("mu_star = 0.1,0.2", "mu_star"),
        ("out_dir =  ", None),
    ],
)
def test_validation_failures_name_the_field(line, field):
    if field is None:
        # a blank value is a parse failure, not a validation failure
        with pytest.raises(ParseError):
            parse_config(line + "\n")
        return
    with pytest.raises(ValidationError) as info:
        parse_config(line + "\n")
    assert info.value.field == field


def test_mu_star_auto_means_unset():
    assert parse_config("mu_star = auto\n").mu_star is None
    assert parse_config("mu_star = 0.5,-0.25,1.0\n").mu_star == (0.5, -0.25, 1.0)


def test_serialize_round_trip_defaults():
    config = ExperimentConfig()
    assert parse_config(serialize_config(config)) == config


def test_serialize_round_trip_explicit_values():
    config = replace(
        ExperimentConfig(),
        m=7,
        sigma_sq=0.0625,
        mu_star=(0.1, -2.5, 0.75),
        seeds=(3, 11),
        policies=("meta-ts", "random"),
        mode="physical",
        out_dir="runs/a",
    )
    assert parse_config(serialize_config(config)) == config


def test_load_config_reads_file(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text("m = 4\nseeds = 5\n", encoding="utf-8")
    config = load_config(str(path))
    assert config.m == 4
    assert config.seeds == (5,)


def test_load_config_missing_file(tmp_path):
    with pytest.raises(IoError):
        load_config(str(tmp_path / "absent.cfg"))


# ---------------------------------------------------------------------------
# scene construction


def test_build_scene_requires_three_features():
    with pytest.raises(ValidationError) as info:
        build_scene(replace(ExperimentConfig(), d=2), 0)
    assert info.value.field == "d"


def test_build_scene_state_gains_are_powers_of_four():
    _, scene = build_scene(ExperimentConfig(), 0)
    assert scene.state_gain == (0.25, 1.0, 4.0, 16.0)


def test_build_scene_mode_picks_prior_mean():
    task_syn, _ = build_scene(ExperimentConfig(), 0)
    task_phy, _ = build_scene(replace(ExperimentConfig(), mode="physical"), 0)
    assert np.array_equal(task_syn.mu_star, np.array(SYNTHETIC_MU_STAR))
    assert np.array_equal(task_phy.mu_star, np.array(PHYSICAL_MU_STAR))


def test_build_scene_explicit_mu_star_wins():
    config = replace(ExperimentConfig(), mu_star=(0.9, 0.0, -0.4))
    task, _ = build_scene(config, 0)
    assert np.array_equal(task.mu_star, np.array([0.9, 0.0, -0.4]))


def test_build_scene_transition_depends_on_seed_only():
    _, scene_a = build_scene(ExperimentConfig(), 3)
    _, scene_b = build_scene(replace(ExperimentConfig(), m=5, k=2), 3)
    _, scene_c = build_scene(ExperimentConfig(), 4)
    assert np.array_equal(scene_a.state_proc.transition, scene_b.state_proc.transition)
    assert not np.array_equal(
        scene_a.state_proc.transition, scene_c.state_proc.transition
    )


# ---------------------------------------------------------------------------
# replicate execution


def test_run_minimal_emits_one_cpi_row(tmp_path):
    config = _tiny_config(str(tmp_path), m=1, n=1, seeds=(0,))
    records, summary = run(config, "random", 0)
    assert len(records) == 1
    assert len(records[0]) == 1
    assert summary.cum_regret.shape == (1,)
    cpi_lines = (
        (tmp_path / "cpi_random_seed0.csv").read_text(encoding="utf-8").splitlines()
    )
    track_lines = (
        (tmp_path / "track_random_seed0.csv").read_text(encoding="utf-8").splitlines()
    )
    assert cpi_lines[0] == PER_CPI_HEADER
    assert track_lines[0] == PER_TRACK_HEADER
    assert len(cpi_lines) == 2
    assert len(track_lines) == 2


def test_run_twice_is_byte_identical(tmp_path):
    dir_a = tmp_path / "a"
    dir_b = tmp_path / "b"
    for out in (dir_a, dir_b):
        run(_tiny_config(str(out), seeds=(0,)), "meta-ts", 0)
    for name in ("cpi_meta-ts_seed0.csv", "track_meta-ts_seed0.csv"):
        assert (dir_a / name).read_bytes() == (dir_b / name).read_bytes()


def test_run_oracle_reports_zero_kl(tmp_path):
    config = _tiny_config(str(tmp_path), seeds=(0,))
    _, summary = run(config, "ts-oracle", 0)
    assert np.array_equal(summary.kl_to_truth, np.zeros(config.m))


def test_csv_paths_follow_naming_scheme(tmp_path):
    out = str(tmp_path)
    assert cpi_csv_path(out, "random", 7) == os.path.join(out, "cpi_random_seed7.csv")
    assert track_csv_path(out, "meta-ts", 0) == os.path.join(
        out, "track_meta-ts_seed0.csv"
    )


def test_run_experiment_orders_by_policy_then_seed(tmp_path):
    config = _tiny_config(
        str(tmp_path), m=1, n=4, seeds=(1, 0), policies=("meta-ts", "random")
    )
    summaries = run_experiment(config)
    observed = [(s.policy, s.seed) for s in summaries]
    assert observed == [("random", 1), ("random", 0), ("meta-ts", 1), ("meta-ts", 0)]
    assert [policy_index(p) for p, _ in observed] == sorted(
        policy_index(p) for p, _ in observed
    )


def test_policy_streams_do_not_interact(tmp_path):
    """Dropping one policy leaves another policy's output bytes unchanged."""
    dir_pair = tmp_path / "pair"
    dir_solo = tmp_path / "solo"
    run_experiment(
        _tiny_config(str(dir_pair), seeds=(0,), policies=("random", "meta-ts"))
    )
    run_experiment(_tiny_config(str(dir_solo), seeds=(0,), policies=("meta-ts",)))
    for name in ("cpi_meta-ts_seed0.csv", "track_meta-ts_seed0.csv"):
        assert (dir_pair / name).read_bytes() == (dir_solo / name).read_bytes()


def test_worker_count_defaults_to_one(monkeypatch):
    monkeypatch.delenv("WAVESEL_WORKERS", raising=False)
    assert worker_count() == 1


def test_worker_count_env_override(monkeypatch):
    monkeypatch.setenv("WAVESEL_WORKERS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("WAVESEL_WORKERS", "0")
    assert worker_count() == 1


def test_worker_count_rejects_garbage(monkeypatch):
    monkeypatch.setenv("WAVESEL_WORKERS", "many")
    with pytest.raises(InvalidInput):
        worker_count()


# ---------------------------------------------------------------------------
# reading summaries back


def test_read_track_table_round_trip(tmp_path):
    config = _tiny_config(str(tmp_path), seeds=(0,))
    _, summary = run(config, "random", 0)
    rows = read_track_table(track_csv_path(str(tmp_path), "random", 0))
    assert len(rows) == config.m
    for t, row in enumerate(rows):
        assert row["policy"] == "random"
        assert row["seed"] == 0
        assert row["track"] == t
        assert row["cum_regret"] == float(summary.cum_regret[t])
        assert row["kl_to_truth"] == float(summary.kl_to_truth[t])


def test_read_track_table_rejects_wrong_header(tmp_path):
    path = tmp_path / "track_bad.csv"
    path.write_text("policy,seed\nrandom,0\n", encoding="utf-8")
    with pytest.raises(IoError):
        read_track_table(str(path))


def test_read_track_table_rejects_short_row(tmp_path):
    path = tmp_path / "track_bad.csv"
    path.write_text(PER_TRACK_HEADER + "\nrandom,0,0,1.0\n", encoding="utf-8")
    with pytest.raises(IoError):
        read_track_table(str(path))


def test_read_track_table_missing_file(tmp_path):
    with pytest.raises(IoError):
        read_track_table(str(tmp_path / "track_none.csv"))


# ---------------------------------------------------------------------------
# aggregation


def _row(policy, seed, track, **values):
    row = {
        "policy": policy,
        "seed": seed,
        "track": track,
        "cum_regret": 0.0,
        "mean_loss": 0.0,
        "outage_freq": 0.0,
        "subopt_freq": 0.0,
        "kl_to_truth": 0.0,
    }
    row.update(values)
    return row


def test_aggregate_single_seed_has_zero_stderr():
    rows = [_row("random", 0, 0, kl_to_truth=0.2), _row("random", 0, 1, kl_to_truth=0.4)]
    tables = aggregate(rows)
    assert tables["kl"] == [("random", 0, 0.2, 0.0), ("random", 1, 0.4, 0.0)]


def test_aggregate_two_seeds_mean_and_stderr():
    rows = [
        _row("random", 0, 0, kl_to_truth=0.2),
        _row("random", 1, 0, kl_to_truth=0.4),
    ]
    tables = aggregate(rows)
    ((policy, track, mean, stderr),) = tables["kl"]
    assert policy == "random"
    assert track == 0
    assert mean == pytest.approx(0.3, abs=1e-12)
    assert stderr == pytest.approx(0.1, abs=1e-12)


def test_aggregate_regret_accumulates_and_loss_running_means():
    rows = [
        _row("random", 0, 0, cum_regret=1.0, mean_loss=0.2, outage_freq=1.0),
        _row("random", 0, 1, cum_regret=2.0, mean_loss=0.4, outage_freq=0.0),
    ]
    tables = aggregate(rows)
    assert [r[2] for r in tables["regret"]] == [1.0, 3.0]
    assert [r[2] for r in tables["loss"]] == pytest.approx([0.2, 0.3])
    assert [r[2] for r in tables["outage"]] == pytest.approx([1.0, 0.5])


def test_aggregate_rejects_gap_in_track_indices():
    rows = [_row("random", 0, 0), _row("random", 0, 2)]
    with pytest.raises(InvalidInput):
        aggregate(rows)


def test_aggregate_rejects_track_count_disagreement():
    rows = [
        _row("random", 0, 0),
        _row("random", 1, 0),
        _row("random", 1, 1),
    ]
    with pytest.raises(InvalidInput):
        aggregate(rows)


def test_aggregate_rejects_empty_input():
    with pytest.raises(EmptyInput):
        aggregate([])


def test_aggregate_matches_recount_from_csv(tmp_path):
    config = _tiny_config(str(tmp_path), policies=("random", "ts-uninformative"))
    run_experiment(config)
    rows = []
    for policy in config.policies:
        for seed in config.seeds:
            rows.extend(read_track_table(track_csv_path(str(tmp_path), policy, seed)))
    tables = aggregate(rows)
    # independent recomputation straight from the same CSV rows
    for policy in config.policies:
        per_seed = []
        for seed in config.seeds:
            table = read_track_table(track_csv_path(str(tmp_path), policy, seed))
            per_seed.append(np.cumsum([r["cum_regret"] for r in table]))
        stacked = np.stack(per_seed)
        expect_mean = stacked.mean(axis=0)
        expect_err = stacked.std(axis=0, ddof=1) / np.sqrt(len(config.seeds))
        got = [r for r in tables["regret"] if r[0] == policy]
        for t in range(config.m):
            assert got[t][2] == expect_mean[t]
            assert got[t][3] == expect_err[t]


def test_write_aggregates_emits_one_file_per_metric(tmp_path):
    rows = [_row("random", 0, 0, kl_to_truth=0.25)]
    out = tmp_path / "agg"
    paths = write_aggregates(aggregate(rows), str(out))
    assert sorted(os.path.basename(p) for p in paths) == [
        "agg_kl.csv",
        "agg_loss.csv",
        "agg_outage.csv",
        "agg_regret.csv",
        "agg_subopt.csv",
    ]
    lines = (out / "agg_kl.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == AGG_HEADER
    assert lines[1] == "random,0,0.25,0.0"


def test_aggregate_directory_requires_summaries(tmp_path):
    with pytest.raises(EmptyInput):
        aggregate_directory(str(tmp_path), str(tmp_path / "agg"))


def test_aggregate_directory_missing_dir(tmp_path):
    with pytest.raises(IoError):
        aggregate_directory(str(tmp_path / "absent"), str(tmp_path / "agg"))


# ---------------------------------------------------------------------------
# command line


def test_cli_run_and_aggregate(tmp_path, capsys):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(
        "m = 2\nn = 16\nk = 3\nseeds = 0\npolicies = random\n", encoding="utf-8"
    )
    out = tmp_path / "runs"
    code = cli.main(
        ["run", "--config", str(cfg), "--out", str(out)]
    )
    assert code == 0
    assert (out / "cpi_random_seed0.csv").exists()
    assert (out / "track_random_seed0.csv").exists()
    captured = capsys.readouterr().out
    assert "wrote 2 CSV files" in captured

    agg = tmp_path / "agg"
    assert cli.main(["aggregate", "--in", str(out), "--out", str(agg)]) == 0
    assert (agg / "agg_regret.csv").exists()


def test_cli_flag_overrides_beat_config(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("m = 1\nn = 8\nk = 3\nseeds = 0,1\n", encoding="utf-8")
    out = tmp_path / "runs"
    code = cli.main(
        [
            "run",
            "--config",
            str(cfg),
            "--out",
            str(out),
            "--seeds",
            "2",
            "--policies",
            "ts-oracle",
        ]
    )
    assert code == 0
    names = sorted(os.listdir(out))
    assert names == ["cpi_ts-oracle_seed2.csv", "track_ts-oracle_seed2.csv"]


def test_cli_bad_config_returns_two(tmp_path, capsys):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("m = 0\n", encoding="utf-8")
    code = cli.main(["run", "--config", str(cfg)])
    assert code == 2
    assert "ValidationError" in capsys.readouterr().err


def test_cli_aggregate_empty_dir_returns_two(tmp_path):
    assert cli.main(["aggregate", "--in", str(tmp_path), "--out", str(tmp_path)]) == 2


def test_cli_dump_waveform(tmp_path):
    out = tmp_path / "zc.csv"
    assert cli.main(["dump-waveform", "--kind", "zc-1024", "--out", str(out)]) == 0
    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "index,real,imag"
    assert len(lines) == 1025
    first = lines[1].split(",")
    assert int(first[0]) == 0
    energy = sum(
        abs(complex(float(p[1]), float(p[2]))) ** 2
        for p in (line.split(",") for line in lines[1:])
    )
    assert energy == pytest.approx(1.0, abs=1e-9)


def test_cli_selftest_passes(capsys):
    assert cli.main(["selftest"]) == 0
    assert "all checks passed" in capsys.readouterr().out
