"""Sinkhorn-divergence imputation with minimum training-sample estimation."""

from . import bench, cli, data, dim, errors, io, neural, orchestrator, sinkhorn, sse
from .data import MaskedDataset, apply_mcar, make_dataset, make_holdout, rmse
from .dim import DimConfig, TrainedImputer, impute, train
from .io import CsvSchema, SynthSpec, read_csv, synth, write_csv
from .orchestrator import RunReport, ScisConfig, run, run_full_baseline
from .sinkhorn import SinkhornSettings, ms_divergence, ms_loss, sinkhorn_solve
from .sse import SseConfig, SizeEstimate, estimate_min_size

__version__ = "0.1.0"

__all__ = [
    "bench",
    "cli",
    "data",
    "dim",
    "errors",
    "io",
    "neural",
    "orchestrator",
    "sinkhorn",
    "sse",
    "MaskedDataset",
    "apply_mcar",
    "make_dataset",
    "make_holdout",
    "rmse",
    "DimConfig",
    "TrainedImputer",
    "impute",
    "train",
    "CsvSchema",
    "SynthSpec",
    "read_csv",
    "synth",
    "write_csv",
    "RunReport",
    "ScisConfig",
    "run",
    "run_full_baseline",
    "SinkhornSettings",
    "ms_divergence",
    "ms_loss",
    "sinkhorn_solve",
    "SseConfig",
    "SizeEstimate",
    "estimate_min_size",
    "__version__",
]
