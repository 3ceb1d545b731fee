"""Command-line surface: impute, estimate-size, evaluate, synth, bench.

Configuration comes from an optional TOML file whose sections mirror the
config dataclasses ([dim], [dim.sinkhorn], [sse], [csv], plus top-level
``seed`` and ``cold_restart``); unset fields keep the package defaults.
The environment variable SCIS_SEED overrides the configured root seed,
and an explicit --seed flag overrides both. Reports are single-line JSON
on stdout with sorted keys. Exit codes: 0 success, 1 usage error, 2
runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .data import (
    DenseMatrix,
    apply_mcar,
    denormalize_values,
    make_dataset,
    make_holdout,
    normalize,
    rmse,
    take_rows,
)
from .dim import DimConfig, train
from .errors import InvalidConfig, IoError, ParseError, ScisError
from .io import CsvSchema, SynthSpec, read_csv, synth, write_csv
from .orchestrator import (
    ScisConfig,
    phase_seeds,
    run,
    run_full_baseline,
    split_indices,
)
from .sinkhorn import SinkhornSettings
from .sse import SseConfig, estimate_min_size

__all__ = ["cli_main", "main", "load_config"]


def load_config(path=None) -> tuple[ScisConfig, CsvSchema, dict]:
    """Build configs from a TOML file (or pure defaults when path is None).

    Returns the pipeline config, the CSV schema, and the raw parsed
    table so callers can distinguish configured fields from defaults.
    """
    raw = {}
    if path is not None:
        try:
            with open(path, "rb") as handle:
                raw = tomllib.load(handle)
        except OSError as exc:
            raise IoError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ParseError(f"config {path} is not valid TOML: {exc}") from exc
    dim_raw = dict(raw.get("dim", {}))
    sink_raw = dict(dim_raw.pop("sinkhorn", {}))
    sse_raw = dict(raw.get("sse", {}))
    csv_raw = dict(raw.get("csv", {}))
    if "hidden_sizes" in dim_raw:
        dim_raw["hidden_sizes"] = tuple(dim_raw["hidden_sizes"])
    if "missing_tokens" in csv_raw:
        csv_raw["missing_tokens"] = tuple(csv_raw["missing_tokens"])
    try:
        cfg = ScisConfig(
            dim=DimConfig(sinkhorn=SinkhornSettings(**sink_raw), **dim_raw),
            sse=SseConfig(**sse_raw),
            seed=int(raw.get("seed", 0)),
            cold_restart=bool(raw.get("cold_restart", False)),
        )
        schema = CsvSchema(**csv_raw)
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(f"bad config field: {exc}") from None
    return cfg, schema, raw


def _resolve_seed(cfg: ScisConfig, flag_seed) -> ScisConfig:
    # precedence: --seed flag, then SCIS_SEED, then config file
    if flag_seed is not None:
        return replace(cfg, seed=int(flag_seed))
    env = os.environ.get("SCIS_SEED")
    if env is not None:
        try:
            return replace(cfg, seed=int(env))
        except ValueError:
            raise InvalidConfig(f"SCIS_SEED={env!r} is not an integer") from None
    return cfg


def _effective_sse(sse: SseConfig, raw: dict, n_rows: int,
                   n0_flag=None, nv_flag=None) -> SseConfig:
    """Subset sizes for this dataset: flags beat config beats an auto rule.

    Without explicit sizes the initial set is min(500, rows/4) and the
    validation set matches it.
    """
    raw_sse = raw.get("sse", {})
    if n0_flag is not None:
        n0 = int(n0_flag)
    elif "n0" in raw_sse:
        n0 = sse.n0
    else:
        n0 = min(500, max(2, n_rows // 4))
    if nv_flag is not None:
        nv = int(nv_flag)
    elif "nv" in raw_sse:
        nv = sse.nv
    else:
        nv = n0
    return replace(sse, n0=n0, nv=nv)


def _print_json(payload: dict | str) -> None:
    if isinstance(payload, str):
        print(payload)
    else:
        print(json.dumps(payload, sort_keys=True))


def cmd_impute(args) -> int:
    cfg, schema, raw = load_config(args.config)
    cfg = _resolve_seed(cfg, args.seed)
    ds = read_csv(args.input, schema)
    norm = normalize(ds)
    if args.full:
        imputed, _, report = run_full_baseline(norm, cfg)
    else:
        cfg = replace(cfg, sse=_effective_sse(cfg.sse, raw, ds.rows,
                                              args.n0, args.nv))
        imputed, _, report = run(norm, cfg)
    # fuse at the original scale so observed cells round-trip bit-exactly
    filled = denormalize_values(imputed.values, norm.feature_ranges)
    out = np.where(ds.mask.bits == 1, ds.x, filled)
    write_csv(args.output,
              make_dataset(out, np.ones_like(ds.mask.bits), columns=ds.columns),
              schema)
    _print_json(report.to_json())
    return 0


def cmd_estimate_size(args) -> int:
    cfg, schema, raw = load_config(args.config)
    cfg = _resolve_seed(cfg, args.seed)
    ds = normalize(read_csv(args.input, schema))
    sse = _effective_sse(cfg.sse, raw, ds.rows, args.n0, args.nv)
    overrides = {}
    if args.epsilon is not None:
        overrides["epsilon"] = args.epsilon
    if args.alpha is not None:
        overrides["alpha"] = args.alpha
    if args.beta is not None:
        overrides["beta"] = args.beta
    if args.k is not None:
        overrides["k"] = args.k
    if args.variant is not None:
        overrides["hoeffding_variant"] = args.variant.replace("-", "_")
    sse = replace(sse, **overrides)
    seeds = phase_seeds(cfg.seed)
    idx_v, idx_0, pool = split_indices(ds.rows, sse.n0, sse.nv, seeds["split"])
    ds_0 = take_rows(ds, idx_0)
    model_0 = train(ds_0, cfg.dim)
    estimate = estimate_min_size(model_0, ds_0, take_rows(ds, idx_v),
                                 pool.size, sse, seed=seeds["sse"])
    _print_json(estimate.to_json())
    return 0


def cmd_evaluate(args) -> int:
    cfg, schema, raw = load_config(args.config)
    cfg = _resolve_seed(cfg, args.seed)
    ds = normalize(read_csv(args.input, schema))
    holdout = make_holdout(ds, args.holdout, cfg.seed)
    if args.full:
        imputed, _, report = run_full_baseline(holdout.train, cfg)
    else:
        scoped = replace(cfg, sse=_effective_sse(cfg.sse, raw, ds.rows,
                                                 args.n0, args.nv))
        imputed, _, report = run(holdout.train, scoped)
    _print_json({
        "rmse": rmse(holdout, imputed),
        "training_sample_rate": report.training_sample_rate,
        "n_star": report.n_star,
    })
    return 0


def cmd_synth(args) -> int:
    params = {}
    if args.kind == "masked_dirac":
        params["theta"] = args.theta
    if args.kind == "linear_manifold":
        params["rank"] = args.rank
        params["noise"] = args.noise
    ds = synth(SynthSpec(kind=args.kind, n=args.n, d=args.d, params=params,
                         seed=args.seed))
    if args.missing_rate > 0.0:
        mcar_seed = args.seed if args.missing_seed is None else args.missing_seed
        ds = apply_mcar(ds, args.missing_rate, mcar_seed)
    write_csv(args.out, ds)
    return 0


def cmd_bench(args) -> int:
    from .bench import run_desk_suite

    seed = args.seed if args.seed is not None else 0
    env = os.environ.get("SCIS_SEED")
    if args.seed is None and env is not None:
        seed = int(env)
    report = run_desk_suite(n_rows=args.rows, n_seeds=args.seeds,
                            base_seed=seed)
    text = json.dumps(report, sort_keys=True)
    if args.out is not None:
        try:
            with open(args.out, "w") as handle:
                handle.write(text + "\n")
        except OSError as exc:
            raise IoError(f"cannot write {args.out}: {exc}") from exc
    _print_json(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scis",
        description="Sinkhorn-divergence imputation with size-aware training",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        p.add_argument("--seed", type=int, default=None,
                       help="root seed (beats SCIS_SEED and the config file)")
        if config:
            p.add_argument("--config", default=None, help="TOML config file")

    p = sub.add_parser("impute", help="fill missing cells of a CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--full", action="store_true",
                   help="train on all rows, skipping size estimation")
    p.add_argument("--n0", type=int, default=None,
                   help="initial training rows (default min(500, rows/4))")
    p.add_argument("--nv", type=int, default=None,
                   help="validation rows (default: same as n0)")
    common(p)
    p.set_defaults(handler=cmd_impute)

    p = sub.add_parser("estimate-size",
                       help="print the minimum training-size estimate")
    p.add_argument("--input", required=True)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("-k", type=int, default=None, dest="k")
    p.add_argument("--variant", choices=["strict", "paper-appendix"],
                   default=None)
    p.add_argument("--n0", type=int, default=None)
    p.add_argument("--nv", type=int, default=None)
    common(p)
    p.set_defaults(handler=cmd_estimate_size)

    p = sub.add_parser("evaluate",
                       help="hide observed cells, impute, report RMSE")
    p.add_argument("--input", required=True)
    p.add_argument("--holdout", type=float, default=0.2)
    p.add_argument("--full", action="store_true")
    p.add_argument("--n0", type=int, default=None)
    p.add_argument("--nv", type=int, default=None)
    common(p)
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("synth", help="write a synthetic dataset as CSV")
    p.add_argument("--kind", required=True,
                   choices=["gaussian_mixture", "linear_manifold",
                            "masked_dirac"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--theta", type=float, default=0.0)
    p.add_argument("--rank", type=int, default=1)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--missing-rate", type=float, default=0.0)
    p.add_argument("--missing-seed", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("bench", help="run the desk-scale benchmark suite")
    p.add_argument("--suite", choices=["desk"], default="desk")
    p.add_argument("--rows", type=int, default=20_000)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--out", default=None, help="also write the report here")
    common(p, config=False)
    p.set_defaults(handler=cmd_bench)

    return parser


def cli_main(argv=None) -> int:
    """Parse and dispatch; maps usage errors to 1 and runtime errors to 2."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        return args.handler(args)
    except ScisError as exc:
        print(f"scis: error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())
