"""Generative imputation trained on the masked transport divergence.

The generator is a small network that maps a noise-filled row and its
mask to a reconstruction of the full row; training descends the debiased
divergence between reconstructed and observed batches with plain
mini-batch Adam. Missing coordinates carry zero loss gradient by
construction, so two mechanisms route signal through the imputation
path: observed input cells are randomly hidden from the generator (the
loss still grades them), and the initialization anchors the network to a
ridge-regression predictor so descent starts oriented. Both mechanisms
are knobs; switching them off recovers plain descent from random init.

An optional adversarial mode compares batches through a learned
discriminator embedding instead of data space, ascending the
discriminator between generator steps. A feature-wise backend trains one
scalar regressor per incomplete column under the one-dimensional
divergence with absolute cost.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .data import DenseMatrix, MaskedDataset, column_means, fuse_imputation
from .errors import EmptyDataset, InvalidConfig, IoError, NonFiniteLoss, ShapeMismatch
from .neural import (
    AdamState,
    MlpSpec,
    ParamVector,
    _layout,
    adam_step,
    backward,
    forward,
    init_params,
    input_backward,
)
from .sinkhorn import SinkhornSettings, ms_loss

__all__ = [
    "DimConfig",
    "TrainedImputer",
    "train",
    "impute",
    "model_inputs",
    "reconstruct",
    "train_featurewise",
    "write_loss_history",
]


@dataclass(frozen=True)
class DimConfig:
    """Training knobs for the generative imputer.

    ``hidden_sizes`` of None selects one hidden layer as wide as the
    data. ``input_corruption`` is the probability of hiding an observed
    cell from the generator's input (never from the loss), and
    ``anchor_init`` turns the regression-anchored initialization on.
    """

    sinkhorn: SinkhornSettings = field(default_factory=SinkhornSettings)
    epochs: int = 100
    batch_size: int = 128
    lr: float = 0.001
    adversarial: bool = False
    disc_steps_per_gen_step: int = 1
    seed: int = 0
    hidden_sizes: tuple[int, ...] | None = None
    input_corruption: float = 0.2
    anchor_init: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidConfig(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 2:
            raise InvalidConfig(f"batch_size must be >= 2, got {self.batch_size}")
        if self.lr <= 0.0:
            raise InvalidConfig(f"learning rate must be positive, got {self.lr}")
        if self.disc_steps_per_gen_step < 1:
            raise InvalidConfig("disc_steps_per_gen_step must be >= 1")
        if not 0.0 <= self.input_corruption < 1.0:
            raise InvalidConfig(
                f"input_corruption must be in [0, 1), got {self.input_corruption}"
            )
        if self.hidden_sizes is not None:
            sizes = tuple(int(s) for s in self.hidden_sizes)
            if not sizes or any(s < 1 for s in sizes):
                raise InvalidConfig("hidden_sizes must be a non-empty tuple of >= 1")
            object.__setattr__(self, "hidden_sizes", sizes)


@dataclass(frozen=True)
class TrainedImputer:
    """A trained generator (and optional discriminator) with its history."""

    generator: tuple[MlpSpec, ParamVector]
    discriminator: tuple[MlpSpec, ParamVector] | None
    loss_history: tuple[float, ...]
    config: DimConfig


def _hidden_sizes(cfg: DimConfig, d: int) -> tuple[int, ...]:
    return cfg.hidden_sizes if cfg.hidden_sizes is not None else (d,)


def generator_spec(cfg: DimConfig, d: int) -> MlpSpec:
    """Architecture for ``d`` data columns: input [values; mask], width 2d."""
    return MlpSpec(
        layer_sizes=(2 * d, *_hidden_sizes(cfg, d), d),
        hidden_activation="relu",
        output_activation="sigmoid",
        seed=cfg.seed,
    )


def _gain_input(x: np.ndarray, m: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    noise = rng.uniform(0.0, 0.01, x.shape)
    return np.concatenate([x * m + (1.0 - m) * noise, m], axis=1)


def _logit(p: np.ndarray) -> np.ndarray:
    p = np.clip(p, 0.02, 0.98)
    return np.log(p / (1.0 - p))


def _passthrough_layers(spec: MlpSpec, rng: np.random.Generator,
                        values: np.ndarray) -> int:
    """Fill every layer but the last with an identity block plus noise.

    Returns how many input coordinates survive to the last hidden layer
    (the width of the narrowest layer along the chain).
    """
    layout = _layout(spec)
    carried = spec.layer_sizes[0]
    for layer in range(spec.n_layers - 1):
        woff, boff, fi, fo = layout[layer]
        w = np.zeros((fi, fo))
        c = min(carried, fo)
        w[:c, :c] = np.eye(c)
        if fo > c:
            bound = 1.0 / np.sqrt(fi)
            w[:, c:] = rng.uniform(-bound, bound, (fi, fo - c))
        values[woff:boff] = w.ravel()
        carried = c
        # biases stay zero so relu passes the nonnegative inputs through
    return carried


def _anchored_params(spec: MlpSpec, x: np.ndarray, m: np.ndarray,
                     cfg: DimConfig, rng: np.random.Generator) -> ParamVector:
    """Regression-anchored initialization.

    Hidden layers pass the inputs straight through; the output layer is
    a ridge least-squares fit of each column's logit on the corrupted
    input encoding the trainer will actually see (four simulated
    replicates), so the net starts as a zero-filled ridge predictor.
    """
    d = x.shape[1]
    layout = _layout(spec)
    values = np.zeros(spec.n_params)
    c = _passthrough_layers(spec, rng, values)

    reps = []
    for _ in range(4):
        mi = m * (rng.random(m.shape) > cfg.input_corruption)
        reps.append(_gain_input(x, mi, rng))
    feats = np.vstack(reps)[:, :c]
    targets = np.vstack([x] * 4)
    seen = np.vstack([m] * 4)

    woff, boff, fi, fo = layout[-1]
    w = np.zeros((fi, fo))
    b = np.zeros(fo)
    for k in range(d):
        keep = seen[:, k] == 1
        if not keep.any():
            continue  # nothing observed; sigmoid(0) = 0.5 is the fallback
        a = np.concatenate([feats[keep], np.ones((int(keep.sum()), 1))], axis=1)
        z = _logit(targets[keep, k])
        coef = np.linalg.solve(a.T @ a + 1e-3 * np.eye(a.shape[1]), a.T @ z)
        w[:c, k] = coef[:-1]
        b[k] = coef[-1]
    if fi > c:
        w[c:] = rng.uniform(-1.0 / np.sqrt(fi), 1.0 / np.sqrt(fi), (fi - c, fo)) * 0.1
    values[woff:boff] = w.ravel()
    values[boff:boff + fo] = b
    return ParamVector(values, layout)


def _discriminator_spec(cfg: DimConfig, d: int) -> MlpSpec:
    return MlpSpec(
        layer_sizes=(d, d, d),
        hidden_activation="relu",
        output_activation="identity",
        seed=cfg.seed + 2,
    )


def _check_finite(value: float, epoch: int, batch: int) -> None:
    if not np.isfinite(value):
        raise NonFiniteLoss(
            f"loss became {value} at epoch {epoch}, batch {batch}; "
            "check normalization and the regularization strength"
        )


def train(ds: MaskedDataset, cfg: DimConfig,
          init: ParamVector | None = None) -> TrainedImputer:
    """Mini-batch descent of the divergence between batch and reconstruction.

    Each step hides a fraction of the observed input cells, fills missing
    inputs with fresh noise, reconstructs, and takes one Adam step on the
    batch loss. The loss history records the mean batch loss per epoch
    (generator loss in adversarial mode). Deterministic for a fixed
    config.
    """
    n, d = ds.rows, ds.cols
    if n < 2:
        raise EmptyDataset(f"training needs at least two rows, got {n}")
    spec = generator_spec(cfg, d)
    rng = np.random.default_rng(cfg.seed)
    if init is not None:
        if init.values.size != spec.n_params:
            raise ShapeMismatch(
                f"warm start has {init.values.size} parameters, spec wants {spec.n_params}"
            )
        params = ParamVector(init.values, _layout(spec))
    elif cfg.anchor_init:
        params = _anchored_params(spec, ds.x, ds.m, cfg,
                                  np.random.default_rng(cfg.seed + 1))
    else:
        params = init_params(spec)

    disc = None
    disc_params = None
    disc_state = None
    if cfg.adversarial:
        disc = _discriminator_spec(cfg, d)
        disc_params = init_params(disc)

    state: AdamState | None = None
    history = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        batch_losses = []
        for batch_index, start in enumerate(range(0, n, cfg.batch_size)):
            idx = perm[start:start + cfg.batch_size]
            if idx.size < 2:
                continue
            xb = ds.x[idx]
            mb = ds.m[idx]
            mi = mb * (rng.random(mb.shape) > cfg.input_corruption) \
                if cfg.input_corruption > 0.0 else mb
            xin = _gain_input(xb, mi, rng)
            out, trace = forward(params, spec, xin)
            if cfg.adversarial:
                for _ in range(cfg.disc_steps_per_gen_step):
                    disc_params, disc_state = _discriminator_ascent(
                        disc_params, disc, disc_state, out, xb, mb, cfg)
                value, gout = _embedding_loss(disc_params, disc, out, xb, mb,
                                              cfg.sinkhorn)
            else:
                value, gout = ms_loss(xb, mb, out, cfg.sinkhorn)
            _check_finite(value, epoch, batch_index)
            grad = backward(params, spec, trace, gout)
            params, state = adam_step(params, grad, state, lr=cfg.lr)
            batch_losses.append(value)
        history.append(float(np.mean(batch_losses)))

    discriminator = (disc, disc_params) if cfg.adversarial else None
    return TrainedImputer(
        generator=(spec, params),
        discriminator=discriminator,
        loss_history=tuple(history),
        config=cfg,
    )


def _embedding_loss(disc_params, disc_spec, out, xb, mb, settings):
    """Divergence between discriminator embeddings of the masked batches.

    Returns the loss and its gradient with respect to the generator
    output, chained through the embedding of the masked reconstruction.
    """
    ones = np.ones((out.shape[0], disc_spec.layer_sizes[-1]))
    e_fake, tr_fake = forward(disc_params, disc_spec, mb * out)
    e_real, _ = forward(disc_params, disc_spec, mb * xb)
    value, g_fake = ms_loss(e_real, ones, e_fake, settings)
    gout = input_backward(disc_params, disc_spec, tr_fake, g_fake) * mb
    return value, gout


def _discriminator_ascent(disc_params, disc_spec, disc_state, out, xb, mb, cfg):
    """One ascent step of the same divergence in the discriminator."""
    ones = np.ones((out.shape[0], disc_spec.layer_sizes[-1]))
    e_fake, tr_fake = forward(disc_params, disc_spec, mb * out)
    e_real, tr_real = forward(disc_params, disc_spec, mb * xb)
    _, g_fake = ms_loss(e_real, ones, e_fake, cfg.sinkhorn)
    _, g_real = ms_loss(e_fake, ones, e_real, cfg.sinkhorn)
    grad = (backward(disc_params, disc_spec, tr_fake, g_fake).values
            + backward(disc_params, disc_spec, tr_real, g_real).values)
    ascent = disc_params.replaced(-grad)  # Adam minimizes; flip the sign
    return adam_step(disc_params, ascent, disc_state, lr=cfg.lr)


def model_inputs(model: TrainedImputer, ds: MaskedDataset) -> np.ndarray:
    """Network input rows for a dataset, with model-seeded noise fill.

    Generators built by :func:`train` take the [values; mask] encoding of
    width 2d; plain nets of width d get the noise-filled values alone.
    """
    spec = model.generator[0]
    rng = np.random.default_rng(model.config.seed)
    if spec.layer_sizes[0] == 2 * ds.cols:
        return _gain_input(ds.x, ds.m, rng)
    if spec.layer_sizes[0] == ds.cols:
        noise = rng.uniform(0.0, 0.01, ds.x.shape)
        return ds.x * ds.m + (1.0 - ds.m) * noise
    raise ShapeMismatch(
        f"dataset has {ds.cols} columns, model input takes {spec.layer_sizes[0]}"
    )


def reconstruct(model: TrainedImputer, ds: MaskedDataset) -> np.ndarray:
    """Raw generator output for every row (deterministic per model)."""
    spec, params = model.generator
    out, _ = forward(params, spec, model_inputs(model, ds))
    return out


def impute(model: TrainedImputer, ds: MaskedDataset) -> DenseMatrix:
    """Reconstruct every row and fuse with the observed cells.

    Missing inputs are filled with noise seeded by the model seed, so
    repeated calls return identical matrices. Observed cells pass
    through bit-exactly.
    """
    return fuse_imputation(ds, DenseMatrix(reconstruct(model, ds)))


def _featurewise_spec(cfg: DimConfig, d: int, j: int) -> MlpSpec:
    hidden = cfg.hidden_sizes if cfg.hidden_sizes is not None else (max(d - 1, 2),)
    return MlpSpec(
        layer_sizes=(d - 1, *hidden, 1),
        hidden_activation="relu",
        output_activation="identity",
        seed=cfg.seed + j,
    )


def _ols_anchor(spec: MlpSpec, feats: np.ndarray, target: np.ndarray,
                rng: np.random.Generator) -> ParamVector:
    # same passthrough scheme as the generator anchor, plain least squares
    # on the raw target since the output activation is the identity
    values = np.zeros(spec.n_params)
    c = _passthrough_layers(spec, rng, values)
    layout = _layout(spec)
    woff, boff, fi, fo = layout[-1]
    a = np.concatenate([feats[:, :c], np.ones((feats.shape[0], 1))], axis=1)
    coef, *_ = np.linalg.lstsq(a, target, rcond=None)
    w = np.zeros((fi, fo))
    w[:c, 0] = coef[:-1]
    values[woff:boff] = w.ravel()
    values[boff] = coef[-1]
    return ParamVector(values, layout)


def train_featurewise(ds: MaskedDataset, cfg: DimConfig) -> list[TrainedImputer]:
    """One scalar regressor per incomplete column.

    Each regressor maps the mean-filled remaining columns to the target
    column and descends the one-dimensional divergence with absolute
    cost over the rows where the target is observed. Complete datasets
    yield an empty list.
    """
    n, d = ds.rows, ds.cols
    incomplete = [j for j in range(d) if ds.mask.bits[:, j].min() == 0]
    if not incomplete:
        return []
    if d < 2:
        raise InvalidConfig("feature-wise backend needs at least two columns")
    means = column_means(ds)
    filled = np.where(ds.mask.bits == 1, ds.x, means)
    models = []
    for j in incomplete:
        others = [k for k in range(d) if k != j]
        rows = np.nonzero(ds.mask.bits[:, j] == 1)[0]
        feats = filled[np.ix_(rows, others)]
        target = ds.x[rows, j]
        spec = _featurewise_spec(cfg, d, j)
        rng = np.random.default_rng([cfg.seed, j])
        if cfg.anchor_init and rows.size >= 1:
            params = _ols_anchor(spec, feats, target, rng)
        else:
            params = init_params(spec)
        state: AdamState | None = None
        history = []
        n_j = rows.size
        for epoch in range(cfg.epochs if n_j >= 2 else 0):
            perm = rng.permutation(n_j)
            batch_losses = []
            for batch_index, start in enumerate(range(0, n_j, cfg.batch_size)):
                idx = perm[start:start + cfg.batch_size]
                if idx.size < 2:
                    continue
                fb = feats[idx]
                tb = target[idx][:, None]
                out, trace = forward(params, spec, fb)
                value, gout = ms_loss(tb, np.ones_like(tb), out, cfg.sinkhorn,
                                      cost_kind="abs_1d")
                _check_finite(value, epoch, batch_index)
                grad = backward(params, spec, trace, gout)
                params, state = adam_step(params, grad, state, lr=cfg.lr)
                batch_losses.append(value)
            history.append(float(np.mean(batch_losses)))
        models.append(TrainedImputer(
            generator=(spec, params),
            discriminator=None,
            loss_history=tuple(history),
            config=cfg,
        ))
    return models


def write_loss_history(model: TrainedImputer, path) -> None:
    """Loss history as a two-column CSV (epoch, loss), epochs 1-based."""
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "loss"])
            for epoch, loss in enumerate(model.loss_history, start=1):
                writer.writerow([epoch, repr(loss)])
    except OSError as exc:
        raise IoError(f"cannot write loss history to {path}: {exc}") from exc
