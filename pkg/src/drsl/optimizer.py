"""Regularized multi-set regression trained by block-coordinate SGD/Adam.

Each inner iteration alternates two half-steps on one mini-batch: a plain
SGD step on the signature matrix B using its analytic gradient, then an
Adam step on the kernel parameters theta with d_i B as the regression
target. The outer loop re-fits every subject from the current group mean
and re-aggregates.

Group fits are deterministic for a fixed config regardless of thread
count: every subject fit draws from its own seed stream derived from
(master seed, outer iteration, subject index), and the mean is reduced in
subject order.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data_model import (
    DesignMatrix,
    FitConfig,
    NetworkParameters,
    RegularizerMode,
    SignatureMatrix,
    SubjectData,
    validate_pair,
)
from .errors import (
    BadAlpha,
    BatchTooLarge,
    ConditionMismatch,
    NonFinite,
    ShapeMismatch,
)
from .kernel_net import (
    ParameterGradients,
    backprop,
    default_layer_sizes,
    forward,
    init_params,
)

# stream tags keep the rng sequences of unrelated draws disjoint
_STREAM_GROUP_INIT = 0
_STREAM_SUBJECT = 1
_STREAM_ADAPT = 2


def seed_stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for (seed, key...); used for per-subject streams."""
    return np.random.default_rng([int(seed), *[int(k) for k in key]])


def worker_count(n_tasks: int) -> int:
    """Thread cap from DRSL_THREADS (0 or unset = auto)."""
    raw = os.environ.get("DRSL_THREADS", "0")
    try:
        cap = int(raw)
    except ValueError:
        cap = 0
    if cap <= 0:
        cap = os.cpu_count() or 1
    return max(1, min(cap, n_tasks))


def _signature_array(b) -> np.ndarray:
    values = b.values if isinstance(b, SignatureMatrix) else b
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeMismatch(f"signatures must be 2-D, got shape {arr.shape}")
    return arr


def regularizer(b, alpha: float) -> float:
    """Elementwise penalty sum(alpha*|beta| + 10*alpha*beta^2)."""
    if alpha < 1.0:
        raise BadAlpha(f"alpha must be >= 1, got {alpha}")
    arr = _signature_array(b)
    return float(np.sum(alpha * np.abs(arr) + 10.0 * alpha * arr * arr))


def regularizer_grad(b, alpha: float) -> np.ndarray:
    """alpha*sign(B) + 20*alpha*B, with sign(0) = 0 (minimal subgradient)."""
    if alpha < 1.0:
        raise BadAlpha(f"alpha must be >= 1, got {alpha}")
    arr = _signature_array(b)
    return alpha * np.sign(arr) + 20.0 * alpha * arr


def _check_batch_shapes(b: np.ndarray, design_rows: np.ndarray, f_outputs: np.ndarray):
    if design_rows.ndim != 2 or f_outputs.ndim != 2:
        raise ShapeMismatch("design_rows and f_outputs must be 2-D")
    if design_rows.shape[0] != f_outputs.shape[0]:
        raise ShapeMismatch(
            f"{design_rows.shape[0]} design rows vs {f_outputs.shape[0]} outputs"
        )
    if design_rows.shape[1] != b.shape[0]:
        raise ShapeMismatch(
            f"design has {design_rows.shape[1]} conditions but B has {b.shape[0]} rows"
        )
    if f_outputs.shape[1] != b.shape[1]:
        raise ShapeMismatch(
            f"outputs have {f_outputs.shape[1]} features but B has {b.shape[1]} columns"
        )


def grad_b(
    b,
    design_rows: np.ndarray,
    f_outputs: np.ndarray,
    alpha: float,
    regularizer_mode: RegularizerMode = RegularizerMode.ENABLED,
) -> np.ndarray:
    """Batch gradient of the subject objective with respect to B.

    alpha*sign(B) + 20*alpha*B - 2 * sum_i d_i^T (f(x_i) - d_i B); the
    regularizer term appears once per batch, not once per sample.
    """
    arr = _signature_array(b)
    d = np.asarray(design_rows, dtype=np.float64)
    f = np.asarray(f_outputs, dtype=np.float64)
    _check_batch_shapes(arr, d, f)
    data_term = -2.0 * d.T @ (f - d @ arr)
    if RegularizerMode(regularizer_mode) is RegularizerMode.DISABLED:
        return data_term
    return regularizer_grad(arr, alpha) + data_term


def objective(
    b,
    design_rows: np.ndarray,
    f_outputs: np.ndarray,
    alpha: float,
    regularizer_mode: RegularizerMode = RegularizerMode.ENABLED,
) -> float:
    """sum_i ||f(x_i) - d_i B||^2 plus the regularizer."""
    arr = _signature_array(b)
    d = np.asarray(design_rows, dtype=np.float64)
    f = np.asarray(f_outputs, dtype=np.float64)
    _check_batch_shapes(arr, d, f)
    resid = f - d @ arr
    data = float(np.sum(resid * resid))
    if RegularizerMode(regularizer_mode) is RegularizerMode.DISABLED:
        return data
    return data + regularizer(arr, alpha)


def sample_batch(rng: np.random.Generator, t: int, n: int) -> np.ndarray:
    """N distinct time indices drawn uniformly without replacement."""
    if n > t:
        raise BatchTooLarge(f"batch size {n} exceeds {t} time points")
    if n < 1:
        raise BatchTooLarge(f"batch size must be >= 1, got {n}")
    return rng.choice(t, size=n, replace=False)


@dataclass(frozen=True)
class AdamState:
    """First/second moment accumulators, shape-congruent with the parameters."""

    delta: tuple[tuple[np.ndarray, np.ndarray], ...]
    gamma: tuple[tuple[np.ndarray, np.ndarray], ...]
    step_count: int = 0


def init_adam_state(params: NetworkParameters) -> AdamState:
    zeros = tuple(
        (np.zeros_like(w), np.zeros_like(bv)) for w, bv in params.layers
    )
    return AdamState(delta=zeros, gamma=zeros, step_count=0)


def adam_step(
    state: AdamState,
    grads: ParameterGradients,
    params: NetworkParameters,
    eta: float,
    mu1: float,
    mu2: float,
    epsilon: float,
    literal_epsilon: bool = False,
) -> tuple[NetworkParameters, AdamState]:
    """One bias-corrected Adam update; returns new parameters and state.

    The denominator is sqrt(gamma_hat) + epsilon. ``literal_epsilon``
    restores the subtracted form for fidelity experiments; it divides by
    zero when gamma_hat equals epsilon^2 and exists only for comparison
    runs.
    """
    if len(state.delta) != len(grads.layers) or len(grads.layers) != len(params.layers):
        raise ShapeMismatch("Adam state, gradients, and parameters disagree in depth")
    k = state.step_count + 1
    c1 = 1.0 - mu1**k
    c2 = 1.0 - mu2**k
    new_delta, new_gamma, new_layers = [], [], []
    for (w, bv), (gw, gb), (dw, db), (cw, cb) in zip(
        params.layers, grads.layers, state.delta, state.gamma
    ):
        if gw.shape != w.shape or gb.shape != bv.shape:
            raise ShapeMismatch("gradient shapes do not match parameters")
        dw = mu1 * dw + (1.0 - mu1) * gw
        db = mu1 * db + (1.0 - mu1) * gb
        cw = mu2 * cw + (1.0 - mu2) * gw * gw
        cb = mu2 * cb + (1.0 - mu2) * gb * gb
        if literal_epsilon:
            denom_w = np.sqrt(cw / c2) - epsilon
            denom_b = np.sqrt(cb / c2) - epsilon
        else:
            denom_w = np.sqrt(cw / c2) + epsilon
            denom_b = np.sqrt(cb / c2) + epsilon
        new_layers.append(
            (w - eta * (dw / c1) / denom_w, bv - eta * (db / c1) / denom_b)
        )
        new_delta.append((dw, db))
        new_gamma.append((cw, cb))
    params_new = NetworkParameters(
        layers=tuple(new_layers), layer_sizes=params.layer_sizes
    )
    return params_new, AdamState(
        delta=tuple(new_delta), gamma=tuple(new_gamma), step_count=k
    )


@dataclass(frozen=True)
class SubjectFit:
    """Result of one subject-level fit."""

    signatures: SignatureMatrix
    params: NetworkParameters | None
    loss_history: np.ndarray

    def __post_init__(self):
        hist = np.asarray(self.loss_history, dtype=np.float64)
        if hist.size and not np.all(np.isfinite(hist)):
            raise NonFinite(
                "subject fit diverged: loss history contains NaN/Inf "
                "(try a smaller eta)"
            )
        hist = hist.copy()
        hist.setflags(write=False)
        object.__setattr__(self, "loss_history", hist)


@dataclass(frozen=True)
class GroupFit:
    """Group-level signatures (mean over subjects) plus per-subject fits."""

    signatures: SignatureMatrix
    subject_fits: tuple[SubjectFit, ...]


def _resolve_sizes(config: FitConfig, v_org: int) -> tuple[int, ...]:
    sizes = config.layer_sizes if config.layer_sizes else default_layer_sizes(v_org)
    if sizes[0] != v_org:
        raise ShapeMismatch(
            f"network input width {sizes[0]} does not match {v_org} voxels"
        )
    return sizes


def fit_subject(
    data: SubjectData,
    design: DesignMatrix,
    b_init: SignatureMatrix,
    config: FitConfig,
    rng: np.random.Generator | None = None,
    identity_kernel: bool = False,
    initial_params: NetworkParameters | None = None,
) -> SubjectFit:
    """Run the inner training loop for one subject.

    Per iteration: draw a batch, SGD-update B from the analytic gradient,
    then (unless the kernel is the identity) Adam-update theta against the
    regression targets computed with the fresh B. The logged loss is the
    batch objective after the B update.
    """
    validate_pair(data, design)
    x = data.responses
    d = design.values
    t = x.shape[0]
    if config.batch_size > t:
        raise BatchTooLarge(f"batch size {config.batch_size} exceeds {t} time points")
    if rng is None:
        rng = np.random.default_rng(config.seed)

    b = _signature_array(b_init).copy()
    if b.shape[0] != d.shape[1]:
        raise ShapeMismatch(
            f"B has {b.shape[0]} rows but design has {d.shape[1]} conditions"
        )
    if identity_kernel:
        params = None
        state = None
        if b.shape[1] != x.shape[1]:
            raise ShapeMismatch(
                f"identity kernel needs B with {x.shape[1]} columns, got {b.shape[1]}"
            )
    else:
        sizes = _resolve_sizes(config, x.shape[1])
        params = initial_params if initial_params is not None else init_params(
            sizes, config.init, rng=rng
        )
        if b.shape[1] != params.output_dim:
            raise ShapeMismatch(
                f"B has {b.shape[1]} columns but the network outputs "
                f"{params.output_dim} features"
            )
        state = init_adam_state(params)

    losses = np.empty(config.m2)
    for k in range(config.m2):
        idx = sample_batch(rng, t, config.batch_size)
        xb, db = x[idx], d[idx]
        if identity_kernel:
            fb = xb
            trace = None
        else:
            fb, trace = forward(params, xb, config.activation)
        phi_hat = grad_b(b, db, fb, config.alpha, config.regularizer)
        b = b - config.eta * phi_hat
        if not identity_kernel:
            targets = db @ b
            grads = backprop(params, xb, targets, config.activation, trace=trace)
            params, state = adam_step(
                state,
                grads,
                params,
                config.eta,
                config.mu1,
                config.mu2,
                config.epsilon,
                literal_epsilon=config.adam_literal_epsilon,
            )
        losses[k] = objective(b, db, fb, config.alpha, config.regularizer)

    signatures = SignatureMatrix(values=b, conditions=design.conditions)
    return SubjectFit(signatures=signatures, params=params, loss_history=losses)


def check_group(datasets) -> tuple[tuple[str, ...], int, int]:
    """Validate a multi-subject dataset list; returns (conditions, V_org, P)."""
    if not datasets:
        raise ConditionMismatch("no subjects to fit")
    conditions = datasets[0][1].conditions
    v_org = datasets[0][0].n_voxels
    for data, design in datasets:
        validate_pair(data, design)
        if design.conditions != conditions:
            raise ConditionMismatch(
                f"subject {data.subject_id!r} has conditions {design.conditions}, "
                f"expected {conditions}"
            )
        if data.n_voxels != v_org:
            raise ShapeMismatch(
                f"subject {data.subject_id!r} has {data.n_voxels} voxels, "
                f"expected {v_org}"
            )
    return conditions, v_org, len(conditions)


def fit(
    datasets,
    config: FitConfig,
    identity_kernel: bool = False,
    subject_stream=None,
) -> GroupFit:
    """Group training loop: M1 outer iterations over all subjects.

    The group signatures start standard-normal from the config seed; each
    outer iteration fits every subject with B warm-started from the current
    group mean and (by default) freshly initialized kernel parameters, then
    replaces the group signatures with the subject mean.

    ``subject_stream(seed, outer, subject_index)`` may override the default
    per-subject rng derivation (used by tests).
    """
    conditions, v_org, p = check_group(datasets)
    v = v_org if identity_kernel else _resolve_sizes(config, v_org)[-1]
    if subject_stream is None:
        subject_stream = lambda seed, outer, idx: seed_stream(
            seed, _STREAM_SUBJECT, outer, idx
        )

    init_rng = seed_stream(config.seed, _STREAM_GROUP_INIT)
    b_tilde = init_rng.standard_normal((p, v))
    fits: tuple[SubjectFit, ...] = ()
    warm: list[NetworkParameters | None] = [None] * len(datasets)

    for outer in range(config.m1):
        b_start = SignatureMatrix(values=b_tilde, conditions=conditions)

        def run_one(idx: int) -> SubjectFit:
            data, design = datasets[idx]
            return fit_subject(
                data,
                design,
                b_start,
                config,
                rng=subject_stream(config.seed, outer, idx),
                identity_kernel=identity_kernel,
                initial_params=warm[idx] if config.warm_start_theta else None,
            )

        n_workers = worker_count(len(datasets))
        if n_workers == 1:
            fits = tuple(run_one(i) for i in range(len(datasets)))
        else:
            with ThreadPoolExecutor(max_workers=n_workers) as pool:
                fits = tuple(pool.map(run_one, range(len(datasets))))
        if config.warm_start_theta:
            warm = [f.params for f in fits]
        # reduce in fixed subject order for bit determinism
        b_tilde = np.mean([f.signatures.values for f in fits], axis=0)

    signatures = SignatureMatrix(values=b_tilde, conditions=conditions)
    return GroupFit(signatures=signatures, subject_fits=fits)


def fit_kernel_params(
    data: SubjectData,
    design: DesignMatrix,
    signatures: SignatureMatrix,
    config: FitConfig,
    rng: np.random.Generator | None = None,
    return_history: bool = False,
):
    """Fit theta only, with B frozen; the signature half-step is skipped.

    Used to adapt a held-out subject from its design matrix alone: targets
    are d_i B for the frozen group signatures, so the subject's responses
    never influence B.
    """
    validate_pair(data, design)
    x = data.responses
    d = design.values
    t = x.shape[0]
    if config.batch_size > t:
        raise BatchTooLarge(f"batch size {config.batch_size} exceeds {t} time points")
    if rng is None:
        rng = seed_stream(config.seed, _STREAM_ADAPT)
    b = _signature_array(signatures)
    sizes = _resolve_sizes(config, x.shape[1])
    if b.shape != (d.shape[1], sizes[-1]):
        raise ShapeMismatch(
            f"signatures have shape {b.shape}, expected ({d.shape[1]}, {sizes[-1]})"
        )
    params = init_params(sizes, config.init, rng=rng)
    state = init_adam_state(params)
    losses = np.empty(config.m2)
    for k in range(config.m2):
        idx = sample_batch(rng, t, config.batch_size)
        xb = x[idx]
        targets = d[idx] @ b
        fb, trace = forward(params, xb, config.activation)
        diff = fb - targets
        losses[k] = float(np.sum(diff * diff))
        grads = backprop(params, xb, targets, config.activation, trace=trace)
        params, state = adam_step(
            state,
            grads,
            params,
            config.eta,
            config.mu1,
            config.mu2,
            config.epsilon,
            literal_epsilon=config.adam_literal_epsilon,
        )
    if return_history:
        return params, losses
    return params
