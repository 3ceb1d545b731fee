"""Dense matrices, masks, and dataset plumbing.

The package represents an incomplete dataset as a pair (X, M): a dense
float64 value matrix and a binary mask with 1 marking observed cells.
Missing cells of X hold the canonical placeholder 0.0, which every
divergence computation touches only through m*x products, so the
placeholder is mathematically inert.

All types here are value types: construction copies and freezes the
underlying arrays, and every operation returns a new object.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    EmptyColumn,
    EmptyHoldout,
    InvalidConfig,
    MissingRanges,
    NoObservedCells,
    ShapeMismatch,
)

__all__ = [
    "DenseMatrix",
    "MaskMatrix",
    "MaskedDataset",
    "HoldoutSplit",
    "normalize",
    "denormalize",
    "denormalize_values",
    "apply_mcar",
    "make_holdout",
    "rmse",
    "fuse_imputation",
    "make_dataset",
    "take_rows",
    "column_means",
]


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.array(a, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class DenseMatrix:
    """Row-major matrix of finite 64-bit floats."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ShapeMismatch(f"expected a 2-D matrix, got ndim={v.ndim}")
        if not np.all(np.isfinite(v)):
            raise ShapeMismatch("matrix entries must be finite")
        object.__setattr__(self, "values", _frozen(np.ascontiguousarray(v)))

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class MaskMatrix:
    """Binary observation mask, 1 where the companion cell is observed."""

    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.ndim != 2:
            raise ShapeMismatch(f"expected a 2-D mask, got ndim={b.ndim}")
        if not np.isin(b, (0, 1)).all():
            raise ShapeMismatch("mask entries must be 0 or 1")
        object.__setattr__(self, "bits", _frozen(np.ascontiguousarray(b, dtype=np.uint8)))

    @property
    def rows(self) -> int:
        return self.bits.shape[0]

    @property
    def cols(self) -> int:
        return self.bits.shape[1]


@dataclass(frozen=True)
class MaskedDataset:
    """An incomplete matrix with its mask and normalization metadata.

    ``feature_ranges`` holds one (min, max) pair per column once
    :func:`normalize` has run, and None before. ``columns`` optionally
    carries header names for CSV round-trips.
    """

    data: DenseMatrix
    mask: MaskMatrix
    feature_ranges: tuple[tuple[float, float], ...] | None = None
    name: str = ""
    columns: tuple[str, ...] | None = None

    def __post_init__(self):
        if (self.data.rows, self.data.cols) != (self.mask.rows, self.mask.cols):
            raise ShapeMismatch(
                f"data {self.data.values.shape} vs mask {self.mask.bits.shape}"
            )
        if self.feature_ranges is not None:
            ranges = tuple((float(lo), float(hi)) for lo, hi in self.feature_ranges)
            if len(ranges) != self.data.cols:
                raise ShapeMismatch("feature_ranges must have one entry per column")
            if any(lo > hi for lo, hi in ranges):
                raise InvalidConfig("feature range with min > max")
            object.__setattr__(self, "feature_ranges", ranges)
        if self.columns is not None:
            object.__setattr__(self, "columns", tuple(str(c) for c in self.columns))
        # Placeholder invariant: masked-out cells hold exactly 0.0.
        x = self.data.values
        m = self.mask.bits
        if np.any(x[m == 0] != 0.0):
            object.__setattr__(self, "data", DenseMatrix(np.where(m == 1, x, 0.0)))

    @property
    def rows(self) -> int:
        return self.data.rows

    @property
    def cols(self) -> int:
        return self.data.cols

    @property
    def x(self) -> np.ndarray:
        """Value matrix (read-only view)."""
        return self.data.values

    @property
    def m(self) -> np.ndarray:
        """Mask as float64 for m*x products (read-only view)."""
        mf = self.mask.bits.astype(np.float64)
        mf.flags.writeable = False
        return mf


@dataclass(frozen=True)
class HoldoutSplit:
    """A dataset with some observed cells hidden for evaluation.

    ``hidden_cells`` lists (row, col, true_value) for every cell that was
    observed in the source and is masked in ``train``.
    """

    train: MaskedDataset
    hidden_cells: tuple[tuple[int, int, float], ...] = field(default_factory=tuple)


def make_dataset(values, bits, name: str = "", columns=None) -> MaskedDataset:
    """Build a MaskedDataset from raw arrays, zeroing masked cells."""
    x = np.asarray(values, dtype=np.float64)
    m = np.asarray(bits)
    if x.shape != m.shape:
        raise ShapeMismatch(f"values {x.shape} vs mask {m.shape}")
    x = np.where(m == 1, x, 0.0)
    return MaskedDataset(DenseMatrix(x), MaskMatrix(m), name=name, columns=columns)


def normalize(ds: MaskedDataset) -> MaskedDataset:
    """Map each column's observed values affinely onto [0, 1].

    Statistics come from observed cells only; constant columns map to 0.0.
    Raises EmptyColumn when a column has no observed value at all, since
    no range can be estimated for it.
    """
    x, m = ds.x, ds.mask.bits
    counts = m.sum(axis=0)
    if np.any(counts == 0):
        j = int(np.argmin(counts))
        raise EmptyColumn(f"column {j} has zero observed values")
    big = np.where(m == 1, x, -np.inf)
    small = np.where(m == 1, x, np.inf)
    hi = big.max(axis=0)
    lo = small.min(axis=0)
    span = hi - lo
    safe = np.where(span > 0.0, span, 1.0)
    normed = (x - lo) / safe
    normed = np.where(m == 1, normed, 0.0)
    ranges = tuple((float(a), float(b)) for a, b in zip(lo, hi))
    return MaskedDataset(
        DenseMatrix(normed), ds.mask, feature_ranges=ranges, name=ds.name, columns=ds.columns
    )


def denormalize_values(values: np.ndarray, feature_ranges) -> np.ndarray:
    """Inverse affine map for a raw matrix given recorded column ranges."""
    if feature_ranges is None:
        raise MissingRanges("no feature ranges recorded")
    lo = np.array([r[0] for r in feature_ranges], dtype=np.float64)
    hi = np.array([r[1] for r in feature_ranges], dtype=np.float64)
    return np.asarray(values, dtype=np.float64) * (hi - lo) + lo


def denormalize(ds: MaskedDataset) -> MaskedDataset:
    """Undo :func:`normalize` using the dataset's recorded ranges."""
    raw = denormalize_values(ds.x, ds.feature_ranges)
    raw = np.where(ds.mask.bits == 1, raw, 0.0)
    return MaskedDataset(
        DenseMatrix(raw), ds.mask, feature_ranges=None, name=ds.name, columns=ds.columns
    )


def apply_mcar(ds: MaskedDataset, rate: float, seed: int) -> MaskedDataset:
    """Hide each observed cell independently with probability ``rate``.

    Deterministic for a fixed seed. Cells already missing stay missing.
    """
    if not 0.0 <= rate < 1.0:
        raise InvalidConfig(f"MCAR rate must be in [0, 1), got {rate}")
    rng = np.random.default_rng(seed)
    keep = rng.random(ds.mask.bits.shape) >= rate
    new_mask = ds.mask.bits * keep.astype(np.uint8)
    return MaskedDataset(
        DenseMatrix(np.where(new_mask == 1, ds.x, 0.0)),
        MaskMatrix(new_mask),
        feature_ranges=ds.feature_ranges,
        name=ds.name,
        columns=ds.columns,
    )


def make_holdout(ds: MaskedDataset, fraction: float, seed: int) -> HoldoutSplit:
    """Hide floor(fraction * #observed) observed cells for evaluation.

    The hidden cells are sampled uniformly without replacement from the
    observed cells, so they are always disjoint from cells that were
    missing in the source.
    """
    if not 0.0 < fraction < 1.0:
        raise InvalidConfig(f"holdout fraction must be in (0, 1), got {fraction}")
    obs_rows, obs_cols = np.nonzero(ds.mask.bits)
    n_obs = obs_rows.size
    if n_obs == 0:
        raise NoObservedCells("dataset has no observed cells to hide")
    n_hidden = int(np.floor(fraction * n_obs))
    rng = np.random.default_rng(seed)
    chosen = rng.choice(n_obs, size=n_hidden, replace=False)
    rows = obs_rows[chosen]
    cols = obs_cols[chosen]
    hidden = tuple(
        (int(r), int(c), float(ds.x[r, c])) for r, c in zip(rows, cols)
    )
    new_mask = np.array(ds.mask.bits)
    new_mask[rows, cols] = 0
    train = MaskedDataset(
        DenseMatrix(np.where(new_mask == 1, ds.x, 0.0)),
        MaskMatrix(new_mask),
        feature_ranges=ds.feature_ranges,
        name=ds.name,
        columns=ds.columns,
    )
    return HoldoutSplit(train=train, hidden_cells=hidden)


def rmse(holdout: HoldoutSplit, imputed: DenseMatrix) -> float:
    """Root mean squared error of ``imputed`` over the hidden cells."""
    shape = (holdout.train.rows, holdout.train.cols)
    if imputed.values.shape != shape:
        raise ShapeMismatch(f"imputed {imputed.values.shape} vs dataset {shape}")
    if not holdout.hidden_cells:
        raise EmptyHoldout("holdout has no hidden cells")
    err = [t - imputed.values[r, c] for r, c, t in holdout.hidden_cells]
    return float(np.sqrt(np.mean(np.square(err))))


def fuse_imputation(ds: MaskedDataset, reconstructed: DenseMatrix) -> DenseMatrix:
    """Combine observed data with reconstructed values.

    Observed cells are copied bit-exactly from ``ds``; missing cells come
    from ``reconstructed``.
    """
    if reconstructed.values.shape != ds.x.shape:
        raise ShapeMismatch(
            f"reconstructed {reconstructed.values.shape} vs dataset {ds.x.shape}"
        )
    return DenseMatrix(np.where(ds.mask.bits == 1, ds.x, reconstructed.values))


def take_rows(ds: MaskedDataset, indices) -> MaskedDataset:
    """Row subset as a new dataset (metadata carried over)."""
    idx = np.asarray(indices, dtype=np.int64)
    return MaskedDataset(
        DenseMatrix(ds.x[idx]),
        MaskMatrix(ds.mask.bits[idx]),
        feature_ranges=ds.feature_ranges,
        name=ds.name,
        columns=ds.columns,
    )


def column_means(ds: MaskedDataset) -> np.ndarray:
    """Per-column mean of observed values (0.0 for empty columns)."""
    m = ds.m
    counts = m.sum(axis=0)
    sums = (ds.x * m).sum(axis=0)
    return np.where(counts > 0, sums / np.maximum(counts, 1.0), 0.0)
