"""Delimited-text input and output plus synthetic dataset generation.

CSV is the exchange format: cells outside the missing-token list must
parse as finite floats, missing cells are written back as the first
missing token, and numbers are emitted with ``repr`` so a write/read
cycle reproduces every float bit-for-bit. Synthetic generators cover a
Gaussian mixture, a noisy linear manifold, and a one-column constant
distribution; each emits a fully observed dataset, leaving missingness
to :func:`scis.data.apply_mcar`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .data import DenseMatrix, MaskedDataset, make_dataset, normalize
from .errors import InvalidConfig, IoError, NonNumericCell, ParseError

__all__ = [
    "CsvSchema",
    "SynthSpec",
    "read_csv",
    "write_csv",
    "synth",
]

_KINDS = ("gaussian_mixture", "linear_manifold", "masked_dirac")


@dataclass(frozen=True)
class CsvSchema:
    """How to interpret a delimited file.

    ``missing_tokens`` is ordered; reads treat every listed token as a
    missing cell and writes emit the first one.
    """

    has_header: bool = False
    missing_tokens: tuple[str, ...] = ("", "NA", "NaN", "nan")

    def __post_init__(self):
        tokens = tuple(str(t) for t in self.missing_tokens)
        if not tokens:
            raise InvalidConfig("missing_tokens must not be empty")
        object.__setattr__(self, "missing_tokens", tokens)


def read_csv(path, schema: CsvSchema = CsvSchema()) -> MaskedDataset:
    """Parse a delimited numeric file into values and a mask.

    Missing tokens become mask 0 with a 0.0 placeholder. Any other cell
    must parse as a finite float; otherwise :class:`NonNumericCell`
    reports its 0-based data-row and column. Ragged rows raise
    :class:`ParseError` with the offending row.
    """
    try:
        with open(path, "r", newline="") as handle:
            rows = list(csv.reader(handle))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    columns = None
    if schema.has_header:
        if not rows:
            raise ParseError("file has no header row")
        columns = tuple(rows[0])
        rows = rows[1:]
    if not rows:
        raise ParseError("file has no data rows")
    width = len(rows[0])
    missing = set(schema.missing_tokens)
    values = np.zeros((len(rows), width))
    bits = np.zeros((len(rows), width), dtype=np.uint8)
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ParseError(
                f"row {i} has {len(row)} cells, expected {width}", row=i
            )
        for j, cell in enumerate(row):
            token = cell.strip()
            if token in missing:
                continue
            try:
                parsed = float(token)
            except ValueError:
                raise NonNumericCell(
                    f"cell ({i}, {j}) = {cell!r} is not numeric", row=i, col=j
                ) from None
            if not np.isfinite(parsed):
                raise NonNumericCell(
                    f"cell ({i}, {j}) = {cell!r} is not finite", row=i, col=j
                )
            values[i, j] = parsed
            bits[i, j] = 1
    return make_dataset(values, bits, columns=columns)


def write_csv(path, obj, schema: CsvSchema = CsvSchema()) -> None:
    """Write a matrix or dataset as delimited text.

    Numbers are emitted with ``repr`` (lossless for float64); masked
    cells of a dataset become the schema's first missing token. With
    ``has_header`` set, the dataset's column names (or generated
    ``c0..cK``) form the first row.
    """
    if isinstance(obj, MaskedDataset):
        x, bits, names = obj.x, obj.mask.bits, obj.columns
    elif isinstance(obj, DenseMatrix):
        x, bits, names = obj.values, np.ones(obj.values.shape, dtype=np.uint8), None
    else:
        raise InvalidConfig(f"cannot write object of type {type(obj).__name__}")
    gap = schema.missing_tokens[0]
    try:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            if schema.has_header:
                writer.writerow(names if names is not None
                                else [f"c{j}" for j in range(x.shape[1])])
            for i in range(x.shape[0]):
                writer.writerow([
                    repr(float(x[i, j])) if bits[i, j] else gap
                    for j in range(x.shape[1])
                ])
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a synthetic dataset.

    ``params`` is kind-specific: ``means``/``covs``/``weights`` for the
    mixture, ``rank``/``noise`` for the manifold, ``theta`` (and a
    caller-interpreted masking rate ``q``) for the constant column.
    """

    kind: str
    n: int
    d: int
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InvalidConfig(f"kind must be one of {_KINDS}, got {self.kind!r}")
        if self.n < 1 or self.d < 1:
            raise InvalidConfig(f"need n >= 1 and d >= 1, got n={self.n}, d={self.d}")
        if self.kind == "masked_dirac" and self.d != 1:
            raise InvalidConfig("masked_dirac emits one column; set d=1")


def _chol_factor(cov, d: int) -> np.ndarray:
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim == 0:
        return np.sqrt(float(cov)) * np.eye(d)
    if cov.ndim == 1:
        return np.diag(np.sqrt(cov))
    return np.linalg.cholesky(cov)


def _mixture(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    d = spec.d
    means = np.asarray(spec.params.get(
        "means", [np.full(d, 0.25), np.full(d, 0.75)]), dtype=np.float64)
    k = means.shape[0]
    covs = spec.params.get("covs", [0.01] * k)
    weights = np.asarray(spec.params.get("weights", np.full(k, 1.0 / k)),
                         dtype=np.float64)
    if means.shape != (k, d) or len(covs) != k or weights.shape != (k,):
        raise InvalidConfig("means, covs, and weights must agree on k and d")
    factors = [_chol_factor(c, d) for c in covs]
    labels = rng.choice(k, size=spec.n, p=weights / weights.sum())
    z = rng.standard_normal((spec.n, d))
    x = np.empty((spec.n, d))
    for c in range(k):
        sel = labels == c
        x[sel] = means[c] + z[sel] @ factors[c].T
    return x


def _manifold(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    rank = int(spec.params.get("rank", 1))
    noise = float(spec.params.get("noise", 0.05))
    if rank < 1 or noise < 0.0:
        raise InvalidConfig(f"need rank >= 1 and noise >= 0, got {rank}, {noise}")
    latent = rng.random((spec.n, rank))
    mixing = rng.standard_normal((rank, spec.d))
    return latent @ mixing + noise * rng.standard_normal((spec.n, spec.d))


def synth(spec: SynthSpec) -> MaskedDataset:
    """Generate a fully observed dataset, deterministic per seed.

    Mixture and manifold values are rescaled per column onto [0, 1]
    afterward; the constant kind emits ``theta`` verbatim, so a theta
    of 0 yields an all-zero column.
    """
    rng = np.random.default_rng(spec.seed)
    ones = np.ones((spec.n, spec.d), dtype=np.uint8)
    if spec.kind == "masked_dirac":
        theta = float(spec.params.get("theta", 0.0))
        return make_dataset(np.full((spec.n, spec.d), theta), ones,
                            name=spec.kind)
    x = _mixture(spec, rng) if spec.kind == "gaussian_mixture" \
        else _manifold(spec, rng)
    return normalize(make_dataset(x, ones, name=spec.kind))
