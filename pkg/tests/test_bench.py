"""Benchmark suite report shape and determinism."""

from scis.bench import run_desk_suite


def test_report_deterministic_outside_timing():
    a = run_desk_suite(n_rows=120, n_seeds=2, base_seed=1)
    b = run_desk_suite(n_rows=120, n_seeds=2, base_seed=1)
    a.pop("timing"), b.pop("timing")
    assert a == b


def test_report_votes_bounded_by_runs():
    report = run_desk_suite(n_rows=120, n_seeds=2, base_seed=0)
    assert len(report["runs"]) == 2
    assert all(0 <= v <= 2 for v in report["votes"].values())
    timing = report["timing"]
    assert timing["speed_check_passed"] <= timing["speed_check_applicable"]
    assert len(timing["per_run"]) == 2


def test_observed_cells_survive_both_pipelines():
    report = run_desk_suite(n_rows=150, n_seeds=1, base_seed=3)
    assert report["votes"]["observed_preserved"] == 1
