"""Probe the minimum-training-size machinery on a small dataset.

Trains an initial model on n0 rows, then asks the estimator for the
smallest n whose trained model stays within epsilon of the full-data
model at the certified confidence. The printed probe curve shows the
bisection at work: each line is one Monte-Carlo evaluation of the
success probability at a candidate size.
"""

from __future__ import annotations

from dataclasses import replace

from scis.data import apply_mcar, take_rows
from scis.dim import DimConfig, train
from scis.io import SynthSpec, synth
from scis.orchestrator import phase_seeds, split_indices
from scis.sinkhorn import SinkhornSettings
from scis.sse import SseConfig, estimate_min_size

SOLVER = SinkhornSettings(reg=130.0, max_iters=2000, tolerance=1e-5,
                          log_domain=False)


def main() -> None:
    ds = apply_mcar(synth(SynthSpec(kind="gaussian_mixture", n=400, d=3,
                                    seed=0)), 0.3, seed=1)
    sse_cfg = replace(SseConfig(), n0=60, nv=60, epsilon=0.01)
    seeds = phase_seeds(0)
    idx_v, idx_0, pool = split_indices(ds.rows, sse_cfg.n0, sse_cfg.nv,
                                       seeds["split"])
    print(f"dataset: {ds.rows} rows, {ds.cols} columns, "
          f"{idx_v.size} held out for validation, pool of {pool.size}")

    model = train(take_rows(ds, idx_0), DimConfig(sinkhorn=SOLVER, seed=2))
    print(f"initial model trained on n0 = {idx_0.size} rows")

    estimate = estimate_min_size(model, take_rows(ds, idx_0),
                                 take_rows(ds, idx_v), pool.size, sse_cfg,
                                 seeds["sse"])
    print(f"\ncertification threshold: {estimate.threshold_used:.4f} "
          f"({estimate.variant}, k = {sse_cfg.k} pairs per probe)")
    print("probe curve:")
    for n, p in estimate.probe_curve:
        print(f"  n = {n:4d}  success probability = {p:.2f}")
    print(f"\nminimum certified size n* = {estimate.n_star} "
          f"of {pool.size} trainable rows "
          f"({estimate.n_star / ds.rows:.0%} of the dataset)")


if __name__ == "__main__":
    main()
