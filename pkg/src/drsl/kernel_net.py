"""The deep transformation f(x; theta): forward pass, loss, and backprop.

A plain MLP with nonlinear hidden layers and an affine output layer (the
mapped space feeds a regression, so the last layer carries no activation).
Gradients are summed over the batch, not averaged; the learning rate
absorbs the scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data_model import Activation, InitScheme, NetworkParameters, validate_layer_sizes
from .errors import ShapeMismatch


@dataclass(frozen=True)
class ForwardTrace:
    """Intermediate values of one forward pass, kept for backprop.

    ``activations`` holds h_1..h_C (h_1 is the input batch, h_C the
    output); ``pre_activations`` holds the affine inputs z_2..z_C.
    """

    pre_activations: tuple[np.ndarray, ...]
    activations: tuple[np.ndarray, ...]

    @property
    def output(self) -> np.ndarray:
        return self.activations[-1]


@dataclass(frozen=True)
class ParameterGradients:
    """Gradients shaped like the parameters they differentiate."""

    layers: tuple[tuple[np.ndarray, np.ndarray], ...]


def default_layer_sizes(v_org: int) -> tuple[int, ...]:
    """Two-hidden-layer architecture scaled to the voxel count.

    [1000, 700, 500] units for >= 1000 voxels, [700, 500, 200] down to 200
    voxels; below that the widths shrink proportionally so the mapped
    space never exceeds the voxel space.
    """
    if v_org >= 1000:
        return (v_org, 1000, 700, 500)
    if v_org >= 200:
        return (v_org, 700, 500, 200)
    h1 = max(4, (v_org * 7) // 10)
    h2 = max(3, v_org // 2)
    out = max(2, v_org // 4)
    return (v_org, h1, h2, out)


def init_params(
    layer_sizes,
    scheme: InitScheme | str = InitScheme.SCALED_NORMAL,
    seed: int | None = None,
    rng: np.random.Generator | None = None,
) -> NetworkParameters:
    """Draw initial weights and biases, deterministically for a given seed.

    ``paper_normal`` uses i.i.d. standard normals; ``scaled_normal`` scales
    the standard deviation by 1/sqrt(fan_in), which keeps wide sigmoid
    layers out of saturation.
    """
    sizes = tuple(int(s) for s in layer_sizes)
    validate_layer_sizes(sizes)
    scheme = InitScheme(scheme)
    if rng is None:
        rng = np.random.default_rng(seed)
    layers = []
    for m in range(len(sizes) - 1):
        fan_in, fan_out = sizes[m], sizes[m + 1]
        std = 1.0 if scheme is InitScheme.PAPER_NORMAL else 1.0 / np.sqrt(fan_in)
        w = rng.standard_normal((fan_out, fan_in)) * std
        b = rng.standard_normal(fan_out) * std
        layers.append((w, b))
    return NetworkParameters(layers=tuple(layers), layer_sizes=sizes)


def _apply_activation(z: np.ndarray, activation: Activation) -> np.ndarray:
    if activation is Activation.SIGMOID:
        # split by sign for overflow-free evaluation
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    if activation is Activation.TANH:
        return np.tanh(z)
    return np.maximum(z, 0.0)


def _activation_derivative(z: np.ndarray, h: np.ndarray, activation: Activation) -> np.ndarray:
    if activation is Activation.SIGMOID:
        return h * (1.0 - h)
    if activation is Activation.TANH:
        return 1.0 - h * h
    return np.where(z > 0, 1.0, 0.0)


def forward(
    params: NetworkParameters,
    batch: np.ndarray,
    activation: Activation | str = Activation.SIGMOID,
) -> tuple[np.ndarray, ForwardTrace]:
    """Map a batch (n x V_org) through the network to (n x V).

    Hidden layers apply the activation componentwise; the output layer is
    affine.
    """
    activation = Activation(activation)
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise ShapeMismatch(
            f"batch has shape {x.shape}, expected (n, {params.input_dim})"
        )
    pre, acts = [], [x]
    h = x
    last = len(params.layers) - 1
    for m, (w, b) in enumerate(params.layers):
        z = h @ w.T + b
        pre.append(z)
        h = z if m == last else _apply_activation(z, activation)
        acts.append(h)
    return h, ForwardTrace(pre_activations=tuple(pre), activations=tuple(acts))


def kernel_loss(
    params: NetworkParameters,
    batch: np.ndarray,
    targets: np.ndarray,
    activation: Activation | str = Activation.SIGMOID,
) -> float:
    """Sum over batch rows of the squared Euclidean output error."""
    out, _ = forward(params, batch, activation)
    t = np.asarray(targets, dtype=np.float64)
    if t.shape != out.shape:
        raise ShapeMismatch(f"targets have shape {t.shape}, expected {out.shape}")
    diff = out - t
    return float(np.sum(diff * diff))


def backprop(
    params: NetworkParameters,
    batch: np.ndarray,
    targets: np.ndarray,
    activation: Activation | str = Activation.SIGMOID,
    trace: ForwardTrace | None = None,
) -> ParameterGradients:
    """Exact gradient of kernel_loss w.r.t. every weight and bias.

    Accepts a precomputed forward trace to avoid a redundant pass; the
    result is identical either way.
    """
    activation = Activation(activation)
    if trace is None:
        _, trace = forward(params, batch, activation)
    out = trace.output
    t = np.asarray(targets, dtype=np.float64)
    if t.shape != out.shape:
        raise ShapeMismatch(f"targets have shape {t.shape}, expected {out.shape}")
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(params.layers)
    delta = 2.0 * (out - t)
    for m in range(len(params.layers) - 1, -1, -1):
        w, _ = params.layers[m]
        h_prev = trace.activations[m]
        grads[m] = (delta.T @ h_prev, delta.sum(axis=0))
        if m > 0:
            upstream = delta @ w
            delta = upstream * _activation_derivative(
                trace.pre_activations[m - 1], trace.activations[m], activation
            )
    return ParameterGradients(layers=tuple(grads))
