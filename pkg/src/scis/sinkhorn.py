"""Masked entropic optimal transport and the debiased divergence.

Rows are compared only where observed: each side's rows are multiplied by
their own mask before the cost is taken, so a missing coordinate
contributes (0 - m_j*x_j)^2 rather than an arbitrary placeholder
difference. The solver works on uniform 1/n marginals, in the log domain
by default, with a plain scaling path for kernels that cannot underflow.

The divergence is the debiased combination

    S = 2*OT(left, right) - OT(left, left) - OT(right, right),

which is zero at coincidence, symmetric, and nonnegative up to float
error even though the raw entropic values are negative for n > 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import DenseMatrix, MaskMatrix
from .errors import DidNotConverge, NonFiniteCost, NotConverged, ShapeMismatch

__all__ = [
    "SinkhornSettings",
    "MaskedCostMatrix",
    "TransportResult",
    "masked_cost",
    "sinkhorn_solve",
    "regularized_ot",
    "ms_divergence",
    "barycentric_grad",
    "ms_loss",
]


@dataclass(frozen=True)
class SinkhornSettings:
    """Solver knobs.

    ``reg`` is the entropic regularization strength (the temperature of
    the kernel exp(-C/reg)); ``tolerance`` bounds the worst marginal
    violation of the returned plan.
    """

    reg: float = 130.0
    max_iters: int = 1000
    tolerance: float = 1e-6
    log_domain: bool = True

    def __post_init__(self):
        if self.reg <= 0.0:
            raise ValueError(f"reg must be positive, got {self.reg}")
        if self.tolerance <= 0.0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")


@dataclass(frozen=True)
class MaskedCostMatrix:
    """Pairwise masked transport costs, all entries finite and >= 0."""

    costs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.costs, dtype=np.float64)
        if c.ndim != 2:
            raise ShapeMismatch("cost matrix must be 2-D")
        if not np.all(np.isfinite(c)):
            raise NonFiniteCost("cost matrix has NaN or infinite entries")
        if c.min(initial=0.0) < 0.0:
            raise NonFiniteCost("cost matrix has negative entries")
        c = np.ascontiguousarray(c)
        c.flags.writeable = False
        object.__setattr__(self, "costs", c)

    @property
    def n_left(self) -> int:
        return self.costs.shape[0]

    @property
    def n_right(self) -> int:
        return self.costs.shape[1]


@dataclass(frozen=True)
class TransportResult:
    """A transport plan with duals and the regularized objective value.

    ``value`` is <P, C> + reg * sum_{p>0} p log p at the returned plan.
    ``dual_u``/``dual_v`` are the potentials f, g in the convention
    P = exp((f_i + g_j - C_ij) / reg).
    """

    plan: np.ndarray
    dual_u: np.ndarray
    dual_v: np.ndarray
    value: float
    iterations: int
    converged: bool


def _rows(x) -> np.ndarray:
    if isinstance(x, DenseMatrix):
        return x.values
    return np.atleast_2d(np.asarray(x, dtype=np.float64))


def _bits(m) -> np.ndarray:
    if isinstance(m, MaskMatrix):
        return m.bits.astype(np.float64)
    return np.atleast_2d(np.asarray(m, dtype=np.float64))


def masked_cost(left_rows, left_mask, right_rows, right_mask,
                cost_kind: str = "squared_l2") -> MaskedCostMatrix:
    """Pairwise cost between mask-multiplied rows.

    ``squared_l2`` gives sum_k (m_i x_i[k] - m_j y_j[k])^2; ``abs_1d``
    gives |m_i x_i - m_j y_j| and requires single-column inputs.
    """
    xl, ml = _rows(left_rows), _bits(left_mask)
    xr, mr = _rows(right_rows), _bits(right_mask)
    if xl.shape[1] != xr.shape[1]:
        raise ShapeMismatch(f"column counts differ: {xl.shape[1]} vs {xr.shape[1]}")
    if xl.shape != ml.shape or xr.shape != mr.shape:
        raise ShapeMismatch("mask shape does not match its row matrix")
    a = ml * xl
    b = mr * xr
    if cost_kind == "squared_l2":
        sq = (a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :]
        c = sq - 2.0 * (a @ b.T)
        np.maximum(c, 0.0, out=c)  # rounding can leave tiny negatives
    elif cost_kind == "abs_1d":
        if xl.shape[1] != 1:
            raise ShapeMismatch("abs_1d cost requires exactly one column")
        c = np.abs(a - b.T)
    else:
        raise ValueError(f"unknown cost kind {cost_kind!r}")
    return MaskedCostMatrix(c)


def _logsumexp(mat: np.ndarray, axis: int) -> np.ndarray:
    mx = mat.max(axis=axis)
    return mx + np.log(np.exp(mat - np.expand_dims(mx, axis)).sum(axis=axis))


def _entropic_value(plan: np.ndarray, costs: np.ndarray, reg: float) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(plan > 0.0, plan * np.log(plan), 0.0)
    return float((plan * costs).sum() + reg * plogp.sum())


def sinkhorn_solve(cost: MaskedCostMatrix, settings: SinkhornSettings) -> TransportResult:
    """Entropic OT between uniform empirical measures.

    Alternates the two marginal projections until the worst row-sum
    violation drops below ``settings.tolerance`` (column sums are exact
    by construction after each column update). The violation falls out of
    quantities the iteration computes anyway, so checking costs nothing.

    Raises DidNotConverge (carrying the best-so-far result) when the
    iteration budget runs out, and NonFiniteCost if the plain-domain
    kernel underflows to zero.
    """
    C = cost.costs
    n, m = C.shape
    if n != m:
        raise ShapeMismatch(f"uniform-marginal solve needs a square cost, got {n}x{m}")
    reg = settings.reg
    a = 1.0 / n
    if settings.log_domain:
        la = np.log(a)
        # f-update makes row sums exact for the current g; after the
        # g-update, the row violation of plan(f, g) is a*(exp((f-f')/reg)-1)
        # where f' is the next f-update.
        g = np.zeros(n)
        f = reg * la - reg * _logsumexp((g[None, :] - C) / reg, axis=1)
        iterations = 0
        violation = np.inf
        for iterations in range(1, settings.max_iters + 1):
            g = reg * la - reg * _logsumexp((f[:, None] - C) / reg, axis=0)
            f_next = reg * la - reg * _logsumexp((g[None, :] - C) / reg, axis=1)
            violation = a * float(np.abs(np.exp((f - f_next) / reg) - 1.0).max())
            if violation <= settings.tolerance:
                break
            f = f_next
        plan = np.exp((f[:, None] + g[None, :] - C) / reg)
        dual_u, dual_v = f, g
    else:
        K = np.exp(-C / reg)
        if K.min() <= 0.0:
            raise NonFiniteCost(
                "kernel underflowed to zero in plain-domain mode; use log_domain"
            )
        v = np.ones(n)
        u = a / (K @ v)
        iterations = 0
        violation = np.inf
        for iterations in range(1, settings.max_iters + 1):
            v = a / (K.T @ u)
            Kv = K @ v
            violation = float(np.abs(u * Kv - a).max())
            if violation <= settings.tolerance:
                break
            u = a / Kv
        plan = u[:, None] * K * v[None, :]
        dual_u, dual_v = reg * np.log(u), reg * np.log(v)
    converged = violation <= settings.tolerance
    result = TransportResult(
        plan=plan,
        dual_u=dual_u,
        dual_v=dual_v,
        value=_entropic_value(plan, C, reg),
        iterations=iterations,
        converged=converged,
    )
    if not converged:
        raise DidNotConverge(
            f"marginal violation {violation:.3e} > {settings.tolerance:.3e} "
            f"after {iterations} iterations",
            result=result,
        )
    return result


def regularized_ot(left, left_mask, right, right_mask, settings: SinkhornSettings,
                   cost_kind: str = "squared_l2") -> float:
    """Masked entropic OT value between two equal-size empirical measures."""
    cost = masked_cost(left, left_mask, right, right_mask, cost_kind)
    if cost.n_left != cost.n_right:
        raise ShapeMismatch(
            f"sample counts differ: {cost.n_left} vs {cost.n_right}"
        )
    return sinkhorn_solve(cost, settings).value


def ms_divergence(left, left_mask, right, right_mask, settings: SinkhornSettings,
                  cost_kind: str = "squared_l2") -> float:
    """Debiased divergence 2*OT(l, r) - OT(l, l) - OT(r, r).

    The cross term's argument order is canonicalized by a byte comparison
    of the two sides, so swapping arguments runs the identical float
    program and symmetry holds bit-exactly; identical sides cancel to 0.0
    for the same reason.
    """
    xl, ml = _rows(left), _bits(left_mask)
    xr, mr = _rows(right), _bits(right_mask)
    if (xl.tobytes(), ml.tobytes()) > (xr.tobytes(), mr.tobytes()):
        xl, ml, xr, mr = xr, mr, xl, ml
    cross = regularized_ot(xl, ml, xr, mr, settings, cost_kind)
    self_l = regularized_ot(xl, ml, xl, ml, settings, cost_kind)
    self_r = regularized_ot(xr, mr, xr, mr, settings, cost_kind)
    return 2.0 * cross - self_l - self_r


def barycentric_grad(plan: TransportResult, left, left_mask, right, right_mask) -> np.ndarray:
    """Plan-weighted difference gradient w.r.t. the left rows.

    Row i is sum_j P_ij (m_i x_i - m_j y_j), masked again by m_i so
    missing coordinates carry an exactly zero gradient. For the squared
    cost the transport value's true derivative is twice this quantity;
    callers that need the exact scale apply the factor themselves (see
    :func:`ms_loss`).
    """
    if not plan.converged:
        raise NotConverged("plan did not converge; gradient would be unreliable")
    xl, ml = _rows(left), _bits(left_mask)
    xr, mr = _rows(right), _bits(right_mask)
    a = ml * xl
    b = mr * xr
    P = plan.plan
    return (P.sum(axis=1)[:, None] * a - P @ b) * ml


def _solve_pair(xl, ml, xr, mr, settings, cost_kind):
    return sinkhorn_solve(masked_cost(xl, ml, xr, mr, cost_kind), settings)


def ms_loss(batch_data, batch_mask, reconstructed, settings: SinkhornSettings,
            cost_kind: str = "squared_l2") -> tuple[float, np.ndarray]:
    """Batch training loss S/(2n) and its exact gradient.

    The gradient is taken w.r.t. the reconstructed rows and assembles the
    debiased combination's three terms: the cross plan pulls each
    reconstruction toward the data, the reconstruction self-plan enters
    through both of its arguments, and the data self-plan contributes
    value only. Missing coordinates receive exactly zero gradient.
    """
    x, msk = _rows(batch_data), _bits(batch_mask)
    rec = _rows(reconstructed)
    if rec.shape != x.shape or msk.shape != x.shape:
        raise ShapeMismatch(
            f"batch {x.shape}, mask {msk.shape}, reconstructed {rec.shape}"
        )
    n = x.shape[0]
    a = msk * rec
    b = msk * x
    res_cross = _solve_pair(rec, msk, x, msk, settings, cost_kind)
    res_self = _solve_pair(rec, msk, rec, msk, settings, cost_kind)
    res_data = _solve_pair(x, msk, x, msk, settings, cost_kind)
    value = (2.0 * res_cross.value - res_self.value - res_data.value) / (2.0 * n)
    Pc, Ps = res_cross.plan, res_self.plan
    if cost_kind == "squared_l2":
        def bary(P, u, v):
            return P.sum(axis=1)[:, None] * u - P @ v

        grad = (2.0 * bary(Pc, a, b) - bary(Ps, a, a) - bary(Ps.T, a, a)) * msk / n
    elif cost_kind == "abs_1d":
        def sign_bary(P, u, v):
            return (P * np.sign(u - v.T)).sum(axis=1)[:, None]

        grad = (
            (2.0 * sign_bary(Pc, a, b) - sign_bary(Ps, a, a) - sign_bary(Ps.T, a, a))
            * msk / (2.0 * n)
        )
    else:
        raise ValueError(f"unknown cost kind {cost_kind!r}")
    return value, grad
