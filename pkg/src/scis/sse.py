"""Minimum training-set size estimation.

Given a model trained on a small subset, this module asks how large the
training set must be before more data stops changing the model by more
than a user tolerance. The machinery: a Gauss-Newton approximation of
the loss Hessian at the trained parameters, a closed-form variance scale
for the parameter perturbation between two training-set sizes,
multivariate-normal parameter sampling through the Hessian factor, a
masked reconstruction distance on a held-out validation set, and a
Hoeffding-corrected probability threshold that turns k Monte-Carlo
indicator draws into a confidence statement. A binary search over the
size axis then finds the smallest size whose empirical probability
clears the threshold.

Every probability evaluated during one search reuses the same Gaussian
draws (common random numbers), so the Monte-Carlo estimate is monotone
along the size axis path-wise and the binary search's bracketing
assumption holds by construction rather than in expectation.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import LinAlgError, cholesky, solve_triangular

from .data import MaskedDataset
from .dim import TrainedImputer, model_inputs
from .errors import (
    ConfigInfeasible,
    DidNotConverge,
    InvalidConfig,
    InvalidSizes,
    NoObservedCells,
    NotConverged,
    ShapeMismatch,
    SingularAfterRidge,
)
from .neural import MlpSpec, ParamVector, batch_jacobians, forward
from .sinkhorn import SinkhornSettings, masked_cost, sinkhorn_solve

__all__ = [
    "SseConfig",
    "HessianApprox",
    "SizeEstimate",
    "compute_hessian",
    "eta",
    "sample_params",
    "model_distance",
    "hoeffding_threshold",
    "empirical_probability",
    "estimate_min_size",
]

_VARIANTS = ("strict", "paper_appendix")


def hoeffding_threshold(alpha: float, beta: float, k: int,
                        variant: str = "paper_appendix") -> float:
    """Probability level the Monte-Carlo estimate must clear.

    Both readings of the concentration bound are available: ``strict``
    uses sqrt(ln(1/beta)/(2k)), ``paper_appendix`` uses
    sqrt(-ln(1-beta)/(2k)). The first term (1-alpha)/(1-beta) is shared.
    """
    if not 0.0 < beta <= alpha <= 1.0:
        raise InvalidConfig(f"need 0 < beta <= alpha <= 1, got alpha={alpha}, beta={beta}")
    if beta >= 1.0:
        raise InvalidConfig("beta must be < 1 for the threshold to be defined")
    if k < 1:
        raise InvalidConfig(f"k must be >= 1, got {k}")
    base = (1.0 - alpha) / (1.0 - beta)
    if variant == "strict":
        return base + np.sqrt(np.log(1.0 / beta) / (2.0 * k))
    if variant == "paper_appendix":
        return base + np.sqrt(-np.log(1.0 - beta) / (2.0 * k))
    raise InvalidConfig(f"unknown hoeffding variant {variant!r}")


@dataclass(frozen=True)
class SseConfig:
    """Size-estimation knobs.

    ``epsilon`` is the tolerated reconstruction distance, ``alpha`` the
    confidence level, ``beta`` the concentration hyper-parameter, ``k``
    the Monte-Carlo sample count, ``reg`` the shared entropic
    regularization. ``ridge`` of None selects the relative default
    1e-6*trace/p at Hessian build time. Construction rejects parameter
    combinations whose threshold exceeds 1, since no empirical
    probability could ever clear it.
    """

    epsilon: float = 0.001
    alpha: float = 0.05
    beta: float = 0.01
    k: int = 20
    reg: float = 130.0
    n0: int = 500
    nv: int = 500
    hoeffding_variant: str = "paper_appendix"
    ridge: float | None = None

    def __post_init__(self):
        if self.epsilon <= 0.0:
            raise InvalidConfig(f"epsilon must be positive, got {self.epsilon}")
        if self.reg <= 0.0:
            raise InvalidConfig(f"reg must be positive, got {self.reg}")
        if self.n0 < 1 or self.nv < 1:
            raise InvalidSizes(f"n0 and nv must be >= 1, got {self.n0}, {self.nv}")
        if self.ridge is not None and self.ridge < 0.0:
            raise InvalidConfig(f"ridge must be >= 0, got {self.ridge}")
        if self.hoeffding_variant not in _VARIANTS:
            raise InvalidConfig(f"hoeffding_variant must be one of {_VARIANTS}")
        threshold = hoeffding_threshold(self.alpha, self.beta, self.k,
                                        self.hoeffding_variant)
        if threshold > 1.0:
            raise ConfigInfeasible(
                f"threshold {threshold:.6f} > 1 is unreachable; raise k, "
                "alpha, or switch the hoeffding variant"
            )


@dataclass(frozen=True)
class HessianApprox:
    """Gauss-Newton curvature matrix with its ridge and Cholesky factor.

    ``matrix`` is the pre-ridge sum (symmetric, PSD up to float error);
    the lower factor of (matrix + ridge_used*I) is computed at
    construction, so singularity surfaces here and not in a later solve.
    """

    matrix: np.ndarray
    ridge_used: float
    source_size: int
    chol_lower: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        h = np.asarray(self.matrix, dtype=np.float64)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ShapeMismatch(f"Hessian must be square, got {h.shape}")
        if np.abs(h - h.T).max(initial=0.0) > 1e-10:
            raise ShapeMismatch("Hessian is not symmetric within 1e-10")
        trace = float(np.trace(h))
        if h.size and np.linalg.eigvalsh(h).min() < -1e-8 * max(trace, 1.0):
            raise ShapeMismatch("Hessian has a significantly negative eigenvalue")
        h = np.ascontiguousarray(h)
        h.flags.writeable = False
        object.__setattr__(self, "matrix", h)
        try:
            factor = cholesky(h + self.ridge_used * np.eye(h.shape[0]), lower=True)
        except LinAlgError as exc:
            raise SingularAfterRidge(
                f"H + {self.ridge_used:g}*I is not positive definite"
            ) from exc
        factor.flags.writeable = False
        object.__setattr__(self, "chol_lower", factor)

    @property
    def n_params(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class SizeEstimate:
    """Search outcome: the minimal size, probes, and the threshold used."""

    n_star: int
    probe_curve: tuple[tuple[int, float], ...]
    threshold_used: float
    seed: int
    variant: str

    def __post_init__(self):
        curve = tuple((int(n), float(p)) for n, p in self.probe_curve)
        if any(not 0.0 <= p <= 1.0 for _, p in curve):
            raise InvalidConfig("probe probabilities must lie in [0, 1]")
        object.__setattr__(self, "probe_curve", curve)

    def as_dict(self) -> dict:
        return {
            "n_star": self.n_star,
            "threshold": self.threshold_used,
            "probe_curve": [{"n": n, "p": p} for n, p in self.probe_curve],
            "seed": self.seed,
            "variant": self.variant,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)


def compute_hessian(model: TrainedImputer, ds0: MaskedDataset,
                    settings: SinkhornSettings,
                    ridge: float | None = None) -> HessianApprox:
    """Plan-weighted Gauss-Newton sum over the training rows.

    Solves the transport plan between the reconstructed and observed
    masked rows, then accumulates row-mass-weighted outer products of
    the masked parameter Jacobians. Each row's weight is its plan mass
    rescaled by n0, so a balanced plan weighs every sample by one.
    """
    spec, params = model.generator
    n0 = ds0.rows
    xin = model_inputs(model, ds0)
    rec, _ = forward(params, spec, xin)
    try:
        plan = sinkhorn_solve(
            masked_cost(rec, ds0.m, ds0.x, ds0.m), settings)
    except DidNotConverge as exc:
        raise NotConverged(
            "transport plan for the Hessian did not converge; "
            "loosen the tolerance or raise max_iters"
        ) from exc
    jac = batch_jacobians(params, spec, xin) * ds0.m[:, :, None]
    weights = float(n0) * plan.plan.sum(axis=1)
    h = np.einsum("i,idp,idq->pq", weights, jac, jac, optimize=True)
    h = (h + h.T) / 2.0
    p = spec.n_params
    if ridge is None:
        ridge = 1e-6 * float(np.trace(h)) / p
    return HessianApprox(matrix=h, ridge_used=float(ridge), source_size=n0)


def eta(reg: float, d: int, n0: int, n: int) -> float:
    """Variance scale of the parameter gap between sizes n0 and n.

    e^(6/reg) * (1 + reg^(-floor(d/2)))^2 * (1/n0 - 1/n); zero when the
    sizes coincide and strictly increasing in n toward the 1/n0 limit.
    """
    if reg <= 0.0:
        raise InvalidConfig(f"reg must be positive, got {reg}")
    if d < 1:
        raise InvalidSizes(f"dimension must be >= 1, got {d}")
    if n0 < 1:
        raise InvalidSizes(f"n0 must be >= 1, got {n0}")
    if n < n0:
        raise InvalidSizes(f"n must be >= n0, got n={n} < n0={n0}")
    middle = (1.0 + reg ** (-(d // 2))) ** 2
    return float(np.exp(6.0 / reg) * middle * (1.0 / n0 - 1.0 / n))


def sample_params(theta0: ParamVector, H: HessianApprox, eta_value: float,
                  seed: int, count: int) -> list[ParamVector]:
    """Draws from N(theta0, eta*(H + ridge*I)^(-1)), deterministic per seed.

    Each draw is theta0 + sqrt(eta) * L^(-T) z with L the cached lower
    factor, so a zero eta returns theta0 bit-exactly.
    """
    if eta_value < 0.0:
        raise InvalidConfig(f"eta must be >= 0, got {eta_value}")
    p = H.n_params
    if theta0.values.size != p:
        raise ShapeMismatch(
            f"theta0 has {theta0.values.size} parameters, Hessian is {p}x{p}"
        )
    z = np.random.default_rng(seed).standard_normal((count, p))
    shifted = solve_triangular(H.chol_lower.T, z.T, lower=False).T
    scale = np.sqrt(eta_value)
    return [theta0.replaced(theta0.values + scale * row) for row in shifted]


def _distance_noise_seed(validation: MaskedDataset) -> int:
    # content hash so the fill is a pure function of the validation data
    return zlib.crc32(validation.data.values.tobytes()
                      + validation.mask.bits.tobytes())


def _validation_inputs(spec: MlpSpec, validation: MaskedDataset) -> np.ndarray:
    rng = np.random.default_rng(_distance_noise_seed(validation))
    x, m = validation.x, validation.m
    if spec.layer_sizes[0] == 2 * validation.cols:
        noise = rng.uniform(0.0, 0.01, x.shape)
        return np.concatenate([x * m + (1.0 - m) * noise, m], axis=1)
    if spec.layer_sizes[0] == validation.cols:
        noise = rng.uniform(0.0, 0.01, x.shape)
        return x * m + (1.0 - m) * noise
    raise ShapeMismatch(
        f"validation has {validation.cols} columns, model takes {spec.layer_sizes[0]}"
    )


def model_distance(theta_a: ParamVector, theta_b: ParamVector, spec: MlpSpec,
                   validation: MaskedDataset) -> float:
    """Root mean squared reconstruction gap over observed validation cells.

    Both parameter vectors are run on the identical noise-filled inputs
    (the fill is derived from a content hash of the validation set), so
    the distance is a deterministic function of its arguments.
    """
    for theta in (theta_a, theta_b):
        if theta.values.size != spec.n_params:
            raise ShapeMismatch(
                f"parameter vector has {theta.values.size} entries, "
                f"spec wants {spec.n_params}"
            )
    m = validation.m
    observed = m.sum()
    if observed == 0:
        raise NoObservedCells("validation set has no observed cells")
    xin = _validation_inputs(spec, validation)
    out_a, _ = forward(theta_a, spec, xin)
    out_b, _ = forward(theta_b, spec, xin)
    gap = m * (out_a - out_b)
    return float(np.sqrt((gap * gap).sum() / observed))


def empirical_probability(theta0: ParamVector, H: HessianApprox, spec: MlpSpec,
                          validation: MaskedDataset, n: int, N_total: int,
                          cfg: SseConfig, seed: int) -> float:
    """Fraction of k sampled model pairs within epsilon of each other.

    Pair i is a model at size n and a refinement at size N_total drawn
    around it. The two Gaussian blocks are drawn in a fixed order
    independent of n, so calls at different sizes with one seed share
    their randomness and the estimate is monotone along the size axis.
    """
    if not cfg.n0 <= n <= N_total:
        raise InvalidSizes(f"need n0 <= n <= N, got {cfg.n0} <= {n} <= {N_total}")
    d = validation.cols
    p = H.n_params
    rng = np.random.default_rng(seed)
    z1 = rng.standard_normal((cfg.k, p))
    z2 = rng.standard_normal((cfg.k, p))
    spread1 = np.sqrt(eta(cfg.reg, d, cfg.n0, n))
    spread2 = np.sqrt(eta(cfg.reg, d, n, N_total))
    shift1 = solve_triangular(H.chol_lower.T, z1.T, lower=False).T
    shift2 = solve_triangular(H.chol_lower.T, z2.T, lower=False).T
    hits = 0
    for i in range(cfg.k):
        theta_n = theta0.replaced(theta0.values + spread1 * shift1[i])
        theta_big = theta_n.replaced(theta_n.values + spread2 * shift2[i])
        if model_distance(theta_n, theta_big, spec, validation) <= cfg.epsilon:
            hits += 1
    return hits / cfg.k


def estimate_min_size(model0: TrainedImputer, ds0: MaskedDataset,
                      validation: MaskedDataset, N_total: int, cfg: SseConfig,
                      seed: int, probability_fn=None) -> SizeEstimate:
    """Smallest size whose empirical probability clears the threshold.

    Builds the Hessian once, then bisects [n0, N_total]. The upper end
    needs no probe: at n = N_total the second perturbation has zero
    variance, every distance is exactly zero, and the probability is 1,
    which clears any feasible threshold. ``probability_fn`` replaces the
    Monte-Carlo estimator (for testing the search against a planted
    predicate); the default evaluates :func:`empirical_probability` with
    this seed, sharing random draws across all probes.
    """
    if cfg.n0 > N_total:
        raise InvalidSizes(f"n0={cfg.n0} exceeds N={N_total}")
    threshold = hoeffding_threshold(cfg.alpha, cfg.beta, cfg.k,
                                    cfg.hoeffding_variant)
    if probability_fn is None:
        spec, theta0 = model0.generator
        settings = replace(model0.config.sinkhorn, reg=cfg.reg)
        H = compute_hessian(model0, ds0, settings, ridge=cfg.ridge)

        def probability_fn(size):
            return empirical_probability(theta0, H, spec, validation, size,
                                         N_total, cfg, seed)

    probes = []
    cache = {}

    def probe(size):
        if size not in cache:
            cache[size] = float(probability_fn(size))
            probes.append((size, cache[size]))
        return cache[size]

    if probe(cfg.n0) >= threshold:
        n_star = cfg.n0
    else:
        lo, hi = cfg.n0, N_total  # lo fails, hi passes by construction
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if probe(mid) >= threshold:
                hi = mid
            else:
                lo = mid
        n_star = hi
    return SizeEstimate(
        n_star=n_star,
        probe_curve=tuple(probes),
        threshold_used=threshold,
        seed=seed,
        variant=cfg.hoeffding_variant,
    )
