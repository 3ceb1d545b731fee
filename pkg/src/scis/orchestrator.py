"""End-to-end imputation pipeline with size-aware training.

The flow: draw a validation set and a small initial set from the rows,
train an imputer on the initial set, ask the size estimator how many
training rows are actually needed, retrain on a subset of that size only
if it exceeds the initial one, and impute the full matrix. A companion
entry point trains on every row for baseline comparisons.

Validation rows never enter any training subset, and the initial rows
are always contained in the final ones, so subset growth refines rather
than reshuffles the training data. All phase durations and derived seeds
end up in the run report for replay.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .data import DenseMatrix, MaskedDataset, take_rows
from .dim import DimConfig, TrainedImputer, impute, train
from .errors import InvalidConfig, InvalidSizes
from .sse import SizeEstimate, SseConfig, estimate_min_size

__all__ = [
    "ScisConfig",
    "RowIndices",
    "RunReport",
    "split_indices",
    "grow_indices",
    "phase_seeds",
    "run",
    "run_full_baseline",
]


@dataclass(frozen=True)
class ScisConfig:
    """Pipeline configuration: trainer knobs, estimator knobs, root seed.

    ``cold_restart`` retrains the final model from a fresh initialization
    instead of warm-starting at the initial model's parameters.
    """

    dim: DimConfig = field(default_factory=DimConfig)
    sse: SseConfig = field(default_factory=SseConfig)
    seed: int = 0
    cold_restart: bool = False

    def __post_init__(self):
        if self.seed < 0:
            raise InvalidConfig(f"seed must be >= 0, got {self.seed}")


@dataclass(frozen=True)
class RowIndices:
    """Row-index sets chosen during one run (kept out of the JSON report)."""

    validation: tuple[int, ...]
    initial: tuple[int, ...]
    final: tuple[int, ...]


@dataclass(frozen=True)
class RunReport:
    """What one pipeline run decided and how long each phase took.

    ``rmse`` stays None unless an evaluation harness fills it in;
    ``sse_estimate`` is None for the full-data baseline. The sample rate
    is the final training size over the total row count.
    """

    n_star: int
    training_sample_rate: float
    rmse: float | None
    wall_times: dict[str, float]
    sse_estimate: SizeEstimate | None
    seeds: dict[str, int]
    indices: RowIndices | None = None

    def __post_init__(self):
        if not 0.0 < self.training_sample_rate <= 1.0:
            raise InvalidConfig(
                f"training sample rate must lie in (0, 1], got "
                f"{self.training_sample_rate}"
            )
        if self.sse_estimate is not None and self.sse_estimate.n_star != self.n_star:
            raise InvalidConfig("report n_star disagrees with the size estimate")

    def as_dict(self) -> dict:
        est = self.sse_estimate
        return {
            "n_star": self.n_star,
            "training_sample_rate": self.training_sample_rate,
            "rmse": self.rmse,
            "wall_times": dict(self.wall_times),
            "sse_estimate": None if est is None else est.as_dict(),
            "seeds": dict(self.seeds),
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)


def phase_seeds(seed: int) -> dict[str, int]:
    children = np.random.SeedSequence(seed).spawn(3)
    drawn = [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]
    return {"root": seed, "split": drawn[0], "sse": drawn[1], "grow": drawn[2]}


def split_indices(n_rows: int, n0: int, nv: int,
                  seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Disjoint validation and initial row indices plus the training pool.

    One permutation drives both draws: the first ``nv`` positions become
    the validation set, the next ``n0`` the initial set, and everything
    outside the validation set (initial rows included) forms the pool
    later growth may draw from. Each return value is sorted.
    """
    if n0 + nv > n_rows:
        raise InvalidSizes(
            f"n0 + nv = {n0 + nv} exceeds the {n_rows} available rows"
        )
    perm = np.random.default_rng(seed).permutation(n_rows)
    idx_v = np.sort(perm[:nv])
    idx_0 = np.sort(perm[nv:nv + n0])
    pool = np.sort(perm[nv:])
    return idx_v, idx_0, pool


def grow_indices(idx_0: np.ndarray, pool: np.ndarray, n_star: int,
                 seed: int) -> np.ndarray:
    """Extend the initial indices to ``n_star`` rows drawn from the pool."""
    if n_star < idx_0.size or n_star > pool.size:
        raise InvalidSizes(
            f"target size {n_star} outside [{idx_0.size}, {pool.size}]"
        )
    if n_star == idx_0.size:
        return np.array(idx_0, dtype=np.int64)
    extras = np.setdiff1d(pool, idx_0)
    rng = np.random.default_rng(seed)
    added = rng.choice(extras, size=n_star - idx_0.size, replace=False)
    return np.sort(np.concatenate([idx_0, added]))


def run(ds: MaskedDataset,
        cfg: ScisConfig) -> tuple[DenseMatrix, TrainedImputer, RunReport]:
    """Full pipeline: split, train small, estimate the size, maybe retrain.

    The size search runs over the training pool (total rows minus the
    validation rows), so the final subset can always be drawn without
    touching validation data. When the estimate equals the initial size
    the initial model is returned as-is and the report carries no
    retraining phase.
    """
    n_total = ds.rows
    seeds = phase_seeds(cfg.seed)
    seeds["dim"] = cfg.dim.seed
    times: dict[str, float] = {}

    start = time.perf_counter()
    idx_v, idx_0, pool = split_indices(n_total, cfg.sse.n0, cfg.sse.nv,
                                       seeds["split"])
    validation = take_rows(ds, idx_v)
    ds_0 = take_rows(ds, idx_0)
    times["sample"] = time.perf_counter() - start

    start = time.perf_counter()
    model_0 = train(ds_0, cfg.dim)
    times["train_initial"] = time.perf_counter() - start

    start = time.perf_counter()
    estimate = estimate_min_size(model_0, ds_0, validation, pool.size,
                                 cfg.sse, seed=seeds["sse"])
    times["estimate_size"] = time.perf_counter() - start

    if estimate.n_star == cfg.sse.n0:
        model_star = model_0
        idx_star = idx_0
    else:
        start = time.perf_counter()
        idx_star = grow_indices(idx_0, pool, estimate.n_star, seeds["grow"])
        warm = None if cfg.cold_restart else model_0.generator[1]
        model_star = train(take_rows(ds, idx_star), cfg.dim, init=warm)
        times["retrain"] = time.perf_counter() - start

    start = time.perf_counter()
    imputed = impute(model_star, ds)
    times["impute"] = time.perf_counter() - start

    report = RunReport(
        n_star=estimate.n_star,
        training_sample_rate=estimate.n_star / n_total,
        rmse=None,
        wall_times=times,
        sse_estimate=estimate,
        seeds=seeds,
        indices=RowIndices(
            validation=tuple(int(i) for i in idx_v),
            initial=tuple(int(i) for i in idx_0),
            final=tuple(int(i) for i in idx_star),
        ),
    )
    return imputed, model_star, report


def run_full_baseline(ds: MaskedDataset,
                      cfg: ScisConfig) -> tuple[DenseMatrix, TrainedImputer,
                                                RunReport]:
    """Train on every row, no size estimation; the comparison baseline."""
    times: dict[str, float] = {}
    start = time.perf_counter()
    model = train(ds, cfg.dim)
    times["train_full"] = time.perf_counter() - start

    start = time.perf_counter()
    imputed = impute(model, ds)
    times["impute"] = time.perf_counter() - start

    report = RunReport(
        n_star=ds.rows,
        training_sample_rate=1.0,
        rmse=None,
        wall_times=times,
        sse_estimate=None,
        seeds={"root": cfg.seed, "dim": cfg.dim.seed},
    )
    return imputed, model, report
