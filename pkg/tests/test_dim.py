"""Imputer training, imputation, and the feature-wise backend."""

import csv

import numpy as np
import pytest

from scis import dim
from scis.data import apply_mcar, make_dataset, make_holdout, normalize, rmse
from scis.dim import DimConfig, impute, train, train_featurewise, write_loss_history
from scis.errors import EmptyDataset, InvalidConfig, NonFiniteLoss, ShapeMismatch
from scis.neural import forward
from scis.sinkhorn import SinkhornSettings, ms_loss

from oracles import central_difference


def fast_sinkhorn(reg=1.0):
    # plain-domain scaling stalls near 1e-6 marginal violation at small
    # reg, so training tests solve to 1e-5, ample for gradient steps
    return SinkhornSettings(reg=reg, max_iters=20000, tolerance=1e-5,
                            log_domain=False)


def gaussian_dataset(n, rho, missing, seed):
    rng = np.random.default_rng(seed)
    cov = np.array([[1.0, rho], [rho, 1.0]])
    x = rng.multivariate_normal([0.0, 0.0], cov, n)
    ds = normalize(make_dataset(x, np.ones_like(x)))
    return apply_mcar(ds, missing, seed + 1)


def mean_imputation_rmse(holdout):
    ds = holdout.train
    means = (ds.x * ds.m).sum(axis=0) / ds.m.sum(axis=0)
    err = [t - means[c] for _, c, t in holdout.hidden_cells]
    return float(np.sqrt(np.mean(np.square(err))))


# ------------------------------------------------------------------ config


def test_config_validation():
    with pytest.raises(InvalidConfig):
        DimConfig(batch_size=1)
    with pytest.raises(InvalidConfig):
        DimConfig(epochs=0)
    with pytest.raises(InvalidConfig):
        DimConfig(lr=0.0)
    with pytest.raises(InvalidConfig):
        DimConfig(input_corruption=1.0)
    with pytest.raises(InvalidConfig):
        DimConfig(disc_steps_per_gen_step=0)
    with pytest.raises(InvalidConfig):
        DimConfig(hidden_sizes=())


# ---------------------------------------------------------------- training


def test_complete_data_loss_descends():
    rng = np.random.default_rng(0)
    x = rng.random((120, 3))
    ds = make_dataset(x, np.ones_like(x))
    cfg = DimConfig(sinkhorn=fast_sinkhorn(), epochs=5, batch_size=64, lr=0.01,
                    seed=1, input_corruption=0.0, anchor_init=False)
    model = train(ds, cfg)
    assert len(model.loss_history) == 5
    assert model.loss_history[-1] <= model.loss_history[0]


def test_training_is_deterministic():
    ds = gaussian_dataset(100, 0.8, 0.3, seed=4)
    cfg = DimConfig(sinkhorn=fast_sinkhorn(), epochs=3, batch_size=50,
                    lr=0.005, seed=7)
    a = train(ds, cfg)
    b = train(ds, cfg)
    assert a.loss_history == b.loss_history
    np.testing.assert_array_equal(a.generator[1].values, b.generator[1].values)


def test_loss_descends_across_seed_suite():
    # full-batch epochs so the first entry reflects the initialization;
    # stochastic effects still allow occasional non-descending runs
    wins = 0
    for seed in range(10):
        ds = gaussian_dataset(200, 0.9, 0.25, seed=100 + seed)
        cfg = DimConfig(sinkhorn=fast_sinkhorn(reg=0.05), epochs=12,
                        batch_size=200, lr=0.01, seed=seed,
                        input_corruption=0.0, anchor_init=False)
        model = train(ds, cfg)
        wins += model.loss_history[-1] <= model.loss_history[0]
    assert wins >= 8


def test_beats_mean_imputation_on_correlated_gaussian():
    ds = gaussian_dataset(800, 0.95, 0.3, seed=10)
    holdout = make_holdout(ds, 0.2, seed=11)
    cfg = DimConfig(sinkhorn=fast_sinkhorn(reg=0.1), epochs=120,
                    batch_size=200, lr=0.003, seed=12, hidden_sizes=(16,))
    model = train(holdout.train, cfg)
    got = rmse(holdout, impute(model, holdout.train))
    baseline = mean_imputation_rmse(holdout)
    assert got < baseline


def test_small_dataset_rejected():
    ds = make_dataset(np.zeros((1, 2)), np.ones((1, 2)))
    with pytest.raises(EmptyDataset):
        train(ds, DimConfig())


def test_warm_start_size_checked():
    ds = gaussian_dataset(50, 0.5, 0.2, seed=3)
    cfg = DimConfig(sinkhorn=fast_sinkhorn(), epochs=1, batch_size=25, seed=3)
    other = train(gaussian_dataset(50, 0.5, 0.2, seed=5),
                  DimConfig(sinkhorn=fast_sinkhorn(), epochs=1, batch_size=25,
                            seed=5, hidden_sizes=(7,)))
    with pytest.raises(ShapeMismatch):
        train(ds, cfg, init=other.generator[1])


def test_warm_start_resumes_from_given_params():
    ds = gaussian_dataset(80, 0.7, 0.2, seed=6)
    cfg = DimConfig(sinkhorn=fast_sinkhorn(), epochs=2, batch_size=40, seed=6)
    first = train(ds, cfg)
    resumed = train(ds, cfg, init=first.generator[1])
    fresh = train(ds, cfg)
    assert not np.array_equal(resumed.generator[1].values,
                              fresh.generator[1].values)


def test_non_finite_guard():
    with pytest.raises(NonFiniteLoss):
        dim._check_finite(float("nan"), epoch=3, batch=1)


def test_gradient_matches_full_batch_finite_differences():
    # five-parameter generator: layers (2, 1, 1), one data column
    rng = np.random.default_rng(5)
    x = rng.random((30, 1))
    m = (rng.random((30, 1)) > 0.3).astype(float)
    tight = SinkhornSettings(reg=1.0, max_iters=20000, tolerance=1e-9,
                             log_domain=False)
    cfg = DimConfig(sinkhorn=tight, seed=8, hidden_sizes=(1,))
    spec = dim.generator_spec(cfg, d=1)
    assert spec.n_params == 5
    params = dim.init_params(spec)
    noise_rng = np.random.default_rng(9)
    xin = dim._gain_input(x * m, m, noise_rng)

    out, trace = forward(params, spec, xin)
    _, gout = ms_loss(x * m, m, out, cfg.sinkhorn)
    got = dim.backward(params, spec, trace, gout).values

    def objective(theta):
        o, _ = forward(params.replaced(theta), spec, xin)
        return ms_loss(x * m, m, o, cfg.sinkhorn)[0]

    fd = central_difference(objective, params.values, eps=1e-6)
    assert np.linalg.norm(got - fd) / max(np.linalg.norm(fd), 1e-12) <= 1e-4


# ------------------------------------------------------------- adversarial


def test_adversarial_mode_smoke():
    ds = gaussian_dataset(60, 0.8, 0.25, seed=14)
    cfg = DimConfig(sinkhorn=fast_sinkhorn(), epochs=2, batch_size=30,
                    lr=0.005, seed=15, adversarial=True,
                    disc_steps_per_gen_step=2)
    a = train(ds, cfg)
    assert a.discriminator is not None
    assert len(a.loss_history) == 2
    b = train(ds, cfg)
    assert a.loss_history == b.loss_history
    np.testing.assert_array_equal(a.discriminator[1].values,
                                  b.discriminator[1].values)


# ---------------------------------------------------------------- imputing


def test_impute_fully_observed_is_identity():
    rng = np.random.default_rng(16)
    x = rng.random((40, 3))
    ds = make_dataset(x, np.ones_like(x))
    cfg = DimConfig(sinkhorn=fast_sinkhorn(), epochs=1, batch_size=20, seed=17)
    model = train(ds, cfg)
    out = impute(model, ds)
    np.testing.assert_array_equal(out.values, ds.x)


def test_impute_never_alters_observed_cells():
    ds = gaussian_dataset(100, 0.9, 0.4, seed=18)
    cfg = DimConfig(sinkhorn=fast_sinkhorn(), epochs=2, batch_size=50, seed=19)
    model = train(ds, cfg)
    out = impute(model, ds)
    obs = ds.mask.bits == 1
    np.testing.assert_array_equal(out.values[obs], ds.x[obs])


def test_impute_missing_cells_in_unit_interval():
    ds = gaussian_dataset(100, 0.9, 0.4, seed=20)
    cfg = DimConfig(sinkhorn=fast_sinkhorn(), epochs=2, batch_size=50, seed=21)
    out = impute(train(ds, cfg), ds)
    miss = ds.mask.bits == 0
    assert out.values[miss].min() >= 0.0
    assert out.values[miss].max() <= 1.0


def test_impute_deterministic():
    ds = gaussian_dataset(80, 0.9, 0.3, seed=22)
    cfg = DimConfig(sinkhorn=fast_sinkhorn(), epochs=2, batch_size=40, seed=23)
    model = train(ds, cfg)
    np.testing.assert_array_equal(impute(model, ds).values,
                                  impute(model, ds).values)


def test_impute_rejects_wrong_width():
    ds = gaussian_dataset(50, 0.9, 0.3, seed=24)
    cfg = DimConfig(sinkhorn=fast_sinkhorn(), epochs=1, batch_size=25, seed=24)
    model = train(ds, cfg)
    bad = make_dataset(np.zeros((5, 3)), np.ones((5, 3)))
    with pytest.raises(ShapeMismatch):
        impute(model, bad)


# ------------------------------------------------------------- featurewise


def linear_pair_dataset(n, missing, seed):
    rng = np.random.default_rng(seed)
    x0 = rng.random(n)
    x1 = 0.3 + 0.5 * x0  # stays inside [0, 1]
    x = np.column_stack([x0, x1])
    m = np.ones_like(x)
    m[:, 1] = (rng.random(n) > missing).astype(float)
    return make_dataset(np.where(m == 1, x, 0.0), m), x


def test_featurewise_complete_dataset_empty():
    x = np.random.default_rng(0).random((20, 3))
    ds = make_dataset(x, np.ones_like(x))
    assert train_featurewise(ds, DimConfig()) == []


def test_featurewise_single_column_rejected():
    ds = make_dataset(np.array([[0.5], [0.0]]), np.array([[1], [0]]))
    with pytest.raises(InvalidConfig):
        train_featurewise(ds, DimConfig())


def test_featurewise_recovers_linear_column():
    ds, truth = linear_pair_dataset(300, 0.3, seed=25)
    cfg = DimConfig(sinkhorn=fast_sinkhorn(reg=0.05), epochs=30,
                    batch_size=100, lr=0.002, seed=26)
    models = train_featurewise(ds, cfg)
    assert len(models) == 1
    spec, params = models[0].generator
    hidden_rows = np.nonzero(ds.mask.bits[:, 1] == 0)[0]
    feats = ds.x[hidden_rows, 0][:, None]
    pred, _ = forward(params, spec, feats)
    err = float(np.sqrt(np.mean((pred[:, 0] - truth[hidden_rows, 1]) ** 2)))
    assert err < 0.05


def test_featurewise_deterministic():
    ds, _ = linear_pair_dataset(100, 0.3, seed=27)
    cfg = DimConfig(sinkhorn=fast_sinkhorn(reg=0.05), epochs=3, batch_size=50,
                    lr=0.002, seed=28)
    a = train_featurewise(ds, cfg)
    b = train_featurewise(ds, cfg)
    np.testing.assert_array_equal(a[0].generator[1].values,
                                  b[0].generator[1].values)
    assert a[0].loss_history == b[0].loss_history


def test_featurewise_history_length():
    ds, _ = linear_pair_dataset(60, 0.4, seed=29)
    cfg = DimConfig(sinkhorn=fast_sinkhorn(reg=0.05), epochs=4, batch_size=30,
                    lr=0.002, seed=30)
    models = train_featurewise(ds, cfg)
    assert len(models[0].loss_history) == 4


# ------------------------------------------------------------ loss history


def test_write_loss_history(tmp_path):
    ds = gaussian_dataset(60, 0.8, 0.2, seed=31)
    cfg = DimConfig(sinkhorn=fast_sinkhorn(), epochs=3, batch_size=30, seed=32)
    model = train(ds, cfg)
    path = tmp_path / "loss.csv"
    write_loss_history(model, path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["epoch", "loss"]
    assert len(rows) == 4
    assert [int(r[0]) for r in rows[1:]] == [1, 2, 3]
    assert [float(r[1]) for r in rows[1:]] == list(model.loss_history)
