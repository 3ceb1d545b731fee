"""Command-line behavior: subcommands, config, seeds, exit codes."""

import json

import numpy as np
import pytest

from scis.cli import cli_main, load_config
from scis.data import make_dataset
from scis.errors import InvalidConfig
from scis.io import CsvSchema, SynthSpec, read_csv, synth, write_csv

FAST_TOML = """\
seed = 3

[dim]
epochs = 3
batch_size = 32
lr = 0.003

[dim.sinkhorn]
reg = 1.0
max_iters = 20000
tolerance = 1e-5
log_domain = false

[sse]
epsilon = 1e9
"""


@pytest.fixture
def fast_config(tmp_path):
    path = tmp_path / "scis.toml"
    path.write_text(FAST_TOML)
    return str(path)


@pytest.fixture
def complete_csv(tmp_path):
    path = tmp_path / "complete.csv"
    write_csv(path, synth(SynthSpec(kind="gaussian_mixture", n=60, d=3,
                                    seed=1)))
    return str(path)


@pytest.fixture
def gappy_csv(tmp_path):
    from scis.data import apply_mcar

    ds = apply_mcar(synth(SynthSpec(kind="gaussian_mixture", n=60, d=3,
                                    seed=2)), 0.3, seed=5)
    path = tmp_path / "gappy.csv"
    write_csv(path, ds)
    return str(path)


def run_cli(capsys, *argv):
    code = cli_main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


# ------------------------------------------------------------------ config


def test_load_config_defaults():
    cfg, schema, raw = load_config(None)
    assert cfg.sse.reg == 130.0 and cfg.sse.epsilon == 0.001
    assert cfg.dim.epochs == 100 and cfg.dim.batch_size == 128
    assert cfg.dim.lr == 0.001 and cfg.sse.k == 20
    assert schema.missing_tokens[0] == ""
    assert raw == {}


def test_load_config_reads_sections(tmp_path, fast_config):
    cfg, _, raw = load_config(fast_config)
    assert cfg.seed == 3
    assert cfg.dim.epochs == 3
    assert cfg.dim.sinkhorn.reg == 1.0
    assert cfg.sse.epsilon == 1e9
    assert "dim" in raw


def test_load_config_rejects_unknown_field(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("[dim]\nwarp_factor = 9\n")
    with pytest.raises(InvalidConfig):
        load_config(str(path))


def test_load_config_rejects_invalid_toml(tmp_path, capsys):
    path = tmp_path / "bad.toml"
    path.write_text("not toml [[[")
    code, _, err = run_cli(capsys, "estimate-size", "--input", "x.csv",
                           "--config", str(path))
    assert code == 2
    assert "error" in err


# ------------------------------------------------------------------ impute


def test_impute_complete_csv_round_trips_bytes(tmp_path, capsys,
                                               fast_config, complete_csv):
    out = tmp_path / "out.csv"
    code, stdout, _ = run_cli(capsys, "impute", "--input", complete_csv,
                              "--output", str(out), "--config", fast_config)
    assert code == 0
    assert out.read_bytes() == open(complete_csv, "rb").read()
    report = json.loads(stdout)
    assert report["n_star"] == 15  # min(500, 60 rows / 4)
    assert report["training_sample_rate"] == 15 / 60


def test_impute_fills_every_gap_and_preserves_observed(tmp_path, capsys,
                                                       fast_config,
                                                       gappy_csv):
    out = tmp_path / "out.csv"
    code, _, _ = run_cli(capsys, "impute", "--input", gappy_csv,
                         "--output", str(out), "--config", fast_config)
    assert code == 0
    source = read_csv(gappy_csv)
    filled = read_csv(str(out))
    assert filled.mask.bits.all()
    observed = source.mask.bits == 1
    np.testing.assert_array_equal(filled.x[observed], source.x[observed])
    # imputed values stay inside the observed column ranges
    lo = source.x.min(axis=0)
    hi = np.where(source.mask.bits == 1, source.x, -np.inf).max(axis=0)
    assert np.all(filled.x >= lo - 1e-12) and np.all(filled.x <= hi + 1e-12)


def test_impute_full_flag_trains_on_all_rows(tmp_path, capsys, fast_config,
                                             gappy_csv):
    out = tmp_path / "out.csv"
    code, stdout, _ = run_cli(capsys, "impute", "--input", gappy_csv,
                              "--output", str(out), "--config", fast_config,
                              "--full")
    assert code == 0
    report = json.loads(stdout)
    assert report["training_sample_rate"] == 1.0
    assert report["sse_estimate"] is None


def test_impute_missing_input_is_runtime_error(tmp_path, capsys, fast_config):
    code, _, err = run_cli(capsys, "impute", "--input",
                           str(tmp_path / "absent.csv"), "--output",
                           str(tmp_path / "o.csv"), "--config", fast_config)
    assert code == 2 and "error" in err


# ----------------------------------------------------------- estimate-size


def test_estimate_size_huge_epsilon_returns_n0(capsys, fast_config,
                                               complete_csv):
    code, stdout, _ = run_cli(capsys, "estimate-size", "--input",
                              complete_csv, "--config", fast_config,
                              "--epsilon", "1e9")
    assert code == 0
    est = json.loads(stdout)
    assert est["n_star"] == 15
    assert len(est["probe_curve"]) == 1
    assert est["variant"] == "paper_appendix"


def test_estimate_size_variant_flag(capsys, fast_config, complete_csv):
    code, stdout, _ = run_cli(capsys, "estimate-size", "--input",
                              complete_csv, "--config", fast_config,
                              "--epsilon", "1e9", "--variant", "strict",
                              "-k", "2000")
    assert code == 0
    assert json.loads(stdout)["variant"] == "strict"


def test_estimate_size_infeasible_threshold(capsys, fast_config,
                                            complete_csv):
    code, _, err = run_cli(capsys, "estimate-size", "--input", complete_csv,
                           "--config", fast_config, "--variant", "strict",
                           "-k", "20")
    assert code == 2 and "error" in err


def test_estimate_size_n0_flag(capsys, fast_config, complete_csv):
    code, stdout, _ = run_cli(capsys, "estimate-size", "--input",
                              complete_csv, "--config", fast_config,
                              "--epsilon", "1e9", "--n0", "10", "--nv", "8")
    assert code == 0
    assert json.loads(stdout)["n_star"] == 10


# ---------------------------------------------------------------- evaluate


def test_evaluate_reports_rmse_and_rate(capsys, fast_config, gappy_csv):
    code, stdout, _ = run_cli(capsys, "evaluate", "--input", gappy_csv,
                              "--holdout", "0.2", "--seed", "9",
                              "--config", fast_config)
    assert code == 0
    payload = json.loads(stdout)
    assert 0.0 <= payload["rmse"] <= 1.0
    assert 0.0 < payload["training_sample_rate"] < 1.0
    assert payload["n_star"] >= 1


def test_evaluate_repeats_identically(capsys, fast_config, gappy_csv):
    args = ("evaluate", "--input", gappy_csv, "--holdout", "0.2",
            "--seed", "9", "--config", fast_config)
    _, first, _ = run_cli(capsys, *args)
    _, second, _ = run_cli(capsys, *args)
    assert first == second


def test_evaluate_full_rate_is_one(capsys, fast_config, gappy_csv):
    code, stdout, _ = run_cli(capsys, "evaluate", "--input", gappy_csv,
                              "--seed", "9", "--config", fast_config,
                              "--full")
    assert code == 0
    assert json.loads(stdout)["training_sample_rate"] == 1.0


# ------------------------------------------------------------------- synth


def test_synth_writes_csv(tmp_path, capsys):
    out = tmp_path / "s.csv"
    code, stdout, _ = run_cli(capsys, "synth", "--kind", "masked_dirac",
                              "--n", "10", "--out", str(out),
                              "--theta", "0.25")
    assert code == 0 and stdout == ""
    ds = read_csv(str(out))
    np.testing.assert_array_equal(ds.x, np.full((10, 1), 0.25))


def test_synth_missing_rate(tmp_path, capsys):
    out = tmp_path / "s.csv"
    code, _, _ = run_cli(capsys, "synth", "--kind", "gaussian_mixture",
                         "--n", "200", "--d", "3", "--out", str(out),
                         "--missing-rate", "0.4", "--seed", "2")
    assert code == 0
    ds = read_csv(str(out))
    assert 0.3 < 1.0 - ds.mask.bits.mean() < 0.5


# ------------------------------------------------------------------- bench


def test_bench_tiny_suite(capsys):
    code, stdout, _ = run_cli(capsys, "bench", "--suite", "desk",
                              "--rows", "120", "--seeds", "1")
    assert code == 0
    report = json.loads(stdout)
    assert report["rows"] == 120
    assert len(report["runs"]) == 1
    assert set(report["votes"]) == {"n_star_below_total", "rmse_within_bound",
                                    "observed_preserved"}
    assert report["timing"]["total_seconds"] > 0.0


# ------------------------------------------------------------ exit codes


def test_usage_errors_exit_one(capsys):
    assert run_cli(capsys, )[0] == 1
    assert run_cli(capsys, "impute")[0] == 1  # missing required flags
    assert run_cli(capsys, "no-such-command")[0] == 1
    assert run_cli(capsys, "bench", "--suite", "mountain")[0] == 1


def test_help_exits_zero(capsys):
    assert run_cli(capsys, "--help")[0] == 0
    assert run_cli(capsys, "impute", "--help")[0] == 0


# ------------------------------------------------------------------ seeds


def test_env_seed_override(tmp_path, capsys, monkeypatch, fast_config,
                           gappy_csv):
    out = tmp_path / "o.csv"
    monkeypatch.setenv("SCIS_SEED", "11")
    _, with_env, _ = run_cli(capsys, "impute", "--input", gappy_csv,
                             "--output", str(out), "--config", fast_config)
    monkeypatch.delenv("SCIS_SEED")
    _, with_flag, _ = run_cli(capsys, "impute", "--input", gappy_csv,
                              "--output", str(out), "--config", fast_config,
                              "--seed", "11")
    assert json.loads(with_env)["seeds"] == json.loads(with_flag)["seeds"]
    assert json.loads(with_env)["seeds"]["root"] == 11


def test_flag_beats_env_seed(capsys, monkeypatch, fast_config, complete_csv):
    monkeypatch.setenv("SCIS_SEED", "11")
    _, stdout, _ = run_cli(capsys, "estimate-size", "--input", complete_csv,
                           "--config", fast_config, "--epsilon", "1e9",
                           "--seed", "4")
    est = json.loads(stdout)
    from scis.orchestrator import phase_seeds

    assert est["seed"] == phase_seeds(4)["sse"]


def test_bad_env_seed_is_runtime_error(capsys, monkeypatch, fast_config,
                                       complete_csv):
    monkeypatch.setenv("SCIS_SEED", "eleven")
    code, _, err = run_cli(capsys, "estimate-size", "--input", complete_csv,
                           "--config", fast_config)
    assert code == 2 and "error" in err
