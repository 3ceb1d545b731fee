"""A small fully connected network with explicit backprop.

Parameters live in one flat float64 vector so they can be perturbed,
sampled, and serialized as a unit; the layout maps (weights, biases) per
layer into that vector. Forward passes record a trace that backward
consumes, and per-sample Jacobians are extracted with one-hot backward
passes (plus a vectorized batch variant used by the Hessian builder).

Everything is deterministic: initialization draws from a generator
seeded by the MlpSpec, and no global random state is touched.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import IoError, ShapeMismatch, TraceMismatch

__all__ = [
    "MlpSpec",
    "ParamVector",
    "ForwardTrace",
    "AdamState",
    "init_params",
    "forward",
    "backward",
    "input_backward",
    "per_sample_jacobian",
    "batch_jacobians",
    "adam_step",
    "save_model",
    "load_model",
]

_HIDDEN = ("relu", "tanh")
_OUTPUT = ("identity", "sigmoid")


@dataclass(frozen=True)
class MlpSpec:
    """Architecture descriptor: sizes, activations, and the init seed."""

    layer_sizes: tuple[int, ...]
    hidden_activation: str = "relu"
    output_activation: str = "sigmoid"
    seed: int = 0

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2:
            raise ShapeMismatch("need at least input and output layer sizes")
        if any(s < 1 for s in sizes):
            raise ShapeMismatch("layer sizes must be >= 1")
        if self.hidden_activation not in _HIDDEN:
            raise ValueError(f"hidden activation must be one of {_HIDDEN}")
        if self.output_activation not in _OUTPUT:
            raise ValueError(f"output activation must be one of {_OUTPUT}")
        object.__setattr__(self, "layer_sizes", sizes)

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def n_params(self) -> int:
        return sum(
            (fi + 1) * fo
            for fi, fo in zip(self.layer_sizes[:-1], self.layer_sizes[1:])
        )


def _layout(spec: MlpSpec):
    """(weight_offset, bias_offset, fan_in, fan_out) per layer."""
    out = []
    off = 0
    for fi, fo in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        out.append((off, off + fi * fo, fi, fo))
        off += (fi + 1) * fo
    return tuple(out)


@dataclass(frozen=True)
class ParamVector:
    """Flat parameter vector plus the per-layer (offset, shape) layout."""

    values: np.ndarray
    layout: tuple[tuple[int, int, int, int], ...]

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64).ravel())
        expect = sum((fi + 1) * fo for _, _, fi, fo in self.layout)
        if v.size != expect:
            raise ShapeMismatch(f"expected {expect} parameters, got {v.size}")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "layout", tuple(tuple(t) for t in self.layout))

    def weights(self, layer: int) -> np.ndarray:
        woff, boff, fi, fo = self.layout[layer]
        return self.values[woff:boff].reshape(fi, fo)

    def biases(self, layer: int) -> np.ndarray:
        woff, boff, fi, fo = self.layout[layer]
        return self.values[boff:boff + fo]

    def replaced(self, values: np.ndarray) -> "ParamVector":
        return ParamVector(values, self.layout)


@dataclass(frozen=True)
class ForwardTrace:
    """Per-layer pre-activations and activations kept for backprop."""

    spec: MlpSpec
    params_values: np.ndarray
    inputs: tuple[np.ndarray, ...]        # activation entering each layer
    pre_activations: tuple[np.ndarray, ...]
    output: np.ndarray


@dataclass(frozen=True)
class AdamState:
    """First/second moment accumulators and the step counter."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @staticmethod
    def fresh(n_params: int) -> "AdamState":
        return AdamState(m=np.zeros(n_params), v=np.zeros(n_params), t=0)


def init_params(spec: MlpSpec) -> ParamVector:
    """Seeded uniform weights scaled by 1/sqrt(fan_in); zero biases."""
    rng = np.random.default_rng(spec.seed)
    layout = _layout(spec)
    values = np.zeros(spec.n_params)
    for woff, boff, fi, fo in layout:
        bound = 1.0 / np.sqrt(fi)
        values[woff:boff] = rng.uniform(-bound, bound, size=fi * fo)
        # biases stay zero
    return ParamVector(values, layout)


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        # evaluate exp only on the non-overflowing side
        out = np.empty_like(z)
        pos = z >= 0.0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    return z


def _act_deriv(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    if name == "tanh":
        return 1.0 - a * a
    if name == "sigmoid":
        return a * (1.0 - a)
    return np.ones_like(z)


def forward(params: ParamVector, spec: MlpSpec, input_rows) -> tuple[np.ndarray, ForwardTrace]:
    """Affine/activation composition over all layers.

    Returns the output rows and the trace backward needs. Pure: neither
    the parameters nor the inputs are modified.
    """
    x = np.atleast_2d(np.asarray(input_rows, dtype=np.float64))
    if x.shape[1] != spec.layer_sizes[0]:
        raise ShapeMismatch(
            f"input has {x.shape[1]} columns, spec expects {spec.layer_sizes[0]}"
        )
    inputs = []
    pres = []
    h = x
    last = spec.n_layers - 1
    for layer in range(spec.n_layers):
        inputs.append(h)
        z = h @ params.weights(layer) + params.biases(layer)
        pres.append(z)
        name = spec.output_activation if layer == last else spec.hidden_activation
        h = _act(name, z)
    trace = ForwardTrace(
        spec=spec,
        params_values=params.values,
        inputs=tuple(inputs),
        pre_activations=tuple(pres),
        output=h,
    )
    return h, trace


def _check_trace(params: ParamVector, spec: MlpSpec, trace: ForwardTrace, grad_out) -> np.ndarray:
    if trace.spec != spec or trace.params_values is not params.values:
        raise TraceMismatch("trace was produced by a different forward call")
    g = np.atleast_2d(np.asarray(grad_out, dtype=np.float64))
    if g.shape != trace.output.shape:
        raise TraceMismatch(
            f"upstream gradient {g.shape} vs output {trace.output.shape}"
        )
    return g


def backward(params: ParamVector, spec: MlpSpec, trace: ForwardTrace, grad_wrt_output) -> ParamVector:
    """Gradient of sum_i <grad_wrt_output_i, output_i> w.r.t. the parameters."""
    g = _check_trace(params, spec, trace, grad_wrt_output)
    grad = np.zeros(spec.n_params)
    last = spec.n_layers - 1
    a_out = trace.output
    delta = g * _act_deriv(spec.output_activation, trace.pre_activations[last], a_out)
    for layer in range(last, -1, -1):
        woff, boff, fi, fo = params.layout[layer]
        grad[woff:boff] = (trace.inputs[layer].T @ delta).ravel()
        grad[boff:boff + fo] = delta.sum(axis=0)
        if layer > 0:
            # inputs[layer] is the activation produced by layer-1
            delta = (delta @ params.weights(layer).T) * _act_deriv(
                spec.hidden_activation, trace.pre_activations[layer - 1],
                trace.inputs[layer],
            )
    return ParamVector(grad, params.layout)


def input_backward(params: ParamVector, spec: MlpSpec, trace: ForwardTrace, grad_wrt_output) -> np.ndarray:
    """Gradient of sum_i <grad_wrt_output_i, output_i> w.r.t. the input rows."""
    g = _check_trace(params, spec, trace, grad_wrt_output)
    last = spec.n_layers - 1
    delta = g * _act_deriv(spec.output_activation, trace.pre_activations[last],
                           trace.output)
    for layer in range(last, 0, -1):
        delta = (delta @ params.weights(layer).T) * _act_deriv(
            spec.hidden_activation, trace.pre_activations[layer - 1],
            trace.inputs[layer],
        )
    return delta @ params.weights(0).T


def per_sample_jacobian(params: ParamVector, spec: MlpSpec, input_row) -> np.ndarray:
    """d_out x p Jacobian of one reconstructed row w.r.t. the parameters.

    Row k is backward with a one-hot upstream gradient selecting output k.
    """
    row = np.atleast_2d(np.asarray(input_row, dtype=np.float64))
    if row.shape[0] != 1:
        raise ShapeMismatch("per_sample_jacobian expects a single row")
    _, trace = forward(params, spec, row)
    d_out = spec.layer_sizes[-1]
    jac = np.zeros((d_out, spec.n_params))
    for k in range(d_out):
        onehot = np.zeros((1, d_out))
        onehot[0, k] = 1.0
        jac[k] = backward(params, spec, trace, onehot).values
    return jac


def batch_jacobians(params: ParamVector, spec: MlpSpec, input_rows) -> np.ndarray:
    """All per-sample Jacobians at once, shape (n, d_out, p).

    Equivalent to stacking :func:`per_sample_jacobian` over rows; one
    vectorized sweep instead of n*d backward passes.
    """
    x = np.atleast_2d(np.asarray(input_rows, dtype=np.float64))
    n = x.shape[0]
    d_out = spec.layer_sizes[-1]
    _, trace = forward(params, spec, x)
    jac = np.zeros((n, d_out, spec.n_params))
    last = spec.n_layers - 1
    # delta[i, k, :] = d output_k / d z_layer for sample i
    delta = np.zeros((n, d_out, d_out))
    idx = np.arange(d_out)
    delta[:, idx, idx] = 1.0
    delta *= _act_deriv(spec.output_activation, trace.pre_activations[last],
                        trace.output)[:, None, :]
    for layer in range(last, -1, -1):
        woff, boff, fi, fo = params.layout[layer]
        a_in = trace.inputs[layer]
        jac[:, :, woff:boff] = (
            a_in[:, None, :, None] * delta[:, :, None, :]
        ).reshape(n, d_out, fi * fo)
        jac[:, :, boff:boff + fo] = delta
        if layer > 0:
            dz = _act_deriv(spec.hidden_activation, trace.pre_activations[layer - 1],
                            trace.inputs[layer])
            delta = (delta @ params.weights(layer).T) * dz[:, None, :]
    return jac


def adam_step(params: ParamVector, grad: ParamVector, state: AdamState | None,
              lr: float) -> tuple[ParamVector, AdamState]:
    """One Adam update (beta1=0.9, beta2=0.999, eps=1e-8)."""
    if grad.values.size != params.values.size:
        raise ShapeMismatch("gradient size does not match parameters")
    if state is None:
        state = AdamState.fresh(params.values.size)
    b1, b2, eps = 0.9, 0.999, 1e-8
    t = state.t + 1
    m = b1 * state.m + (1.0 - b1) * grad.values
    v = b2 * state.v + (1.0 - b2) * grad.values ** 2
    m_hat = m / (1.0 - b1 ** t)
    v_hat = v / (1.0 - b2 ** t)
    new_values = params.values - lr * m_hat / (np.sqrt(v_hat) + eps)
    return params.replaced(new_values), AdamState(m=m, v=v, t=t)


_MAGIC = b"SCM1"


def save_model(path, spec: MlpSpec, params: ParamVector) -> None:
    """Little-endian float64 blob with a JSON header."""
    header = json.dumps({
        "layer_sizes": list(spec.layer_sizes),
        "hidden_activation": spec.hidden_activation,
        "output_activation": spec.output_activation,
        "seed": spec.seed,
    }).encode("utf-8")
    try:
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(np.uint32(len(header)).astype("<u4").tobytes())
            fh.write(header)
            fh.write(params.values.astype("<f8").tobytes())
    except OSError as exc:
        raise IoError(f"cannot write model to {path}: {exc}") from exc


def load_model(path) -> tuple[MlpSpec, ParamVector]:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read model from {path}: {exc}") from exc
    if blob[:4] != _MAGIC:
        raise IoError(f"{path} is not a model file")
    hlen = int(np.frombuffer(blob[4:8], dtype="<u4")[0])
    meta = json.loads(blob[8:8 + hlen].decode("utf-8"))
    spec = MlpSpec(
        layer_sizes=tuple(meta["layer_sizes"]),
        hidden_activation=meta["hidden_activation"],
        output_activation=meta["output_activation"],
        seed=int(meta["seed"]),
    )
    values = np.frombuffer(blob[8 + hlen:], dtype="<f8").astype(np.float64)
    if values.size != spec.n_params:
        raise IoError(f"parameter blob has {values.size} values, spec wants {spec.n_params}")
    return spec, ParamVector(values, _layout(spec))
