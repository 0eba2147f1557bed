"""Core typed containers, shape validation, and column standardization.

All numerics are 64-bit floats: the finite-difference gradient checks used
throughout the test suite need ~1e-6 relative precision, which float32
cannot deliver. Containers are frozen dataclasses holding read-only arrays,
so instances are safe to share across threads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadAlpha,
    BadArchitecture,
    BadStep,
    DrslError,
    EmptyDesign,
    NonFinite,
    ShapeMismatch,
    TooFewRows,
)


def as_matrix(values, name: str = "values") -> np.ndarray:
    """Copy input to a read-only 2-D float64 array."""
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeMismatch(f"{name} must be 2-D, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def as_vector(values, name: str = "values") -> np.ndarray:
    """Copy input to a read-only 1-D float64 array."""
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeMismatch(f"{name} must be 1-D, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


class Activation(str, enum.Enum):
    SIGMOID = "sigmoid"
    TANH = "tanh"
    RELU = "relu"


class InitScheme(str, enum.Enum):
    PAPER_NORMAL = "paper_normal"
    SCALED_NORMAL = "scaled_normal"


class RegularizerMode(str, enum.Enum):
    """Explicit switch for the regularization term.

    The disabled variant exists for fidelity experiments (e.g. checking the
    linear solver against ordinary least squares); it is a distinct mode
    rather than a magic alpha value because alpha must stay >= 1.
    """

    ENABLED = "on"
    DISABLED = "off"


@dataclass(frozen=True)
class SubjectData:
    """One subject's neural responses: T time points by V_org voxels."""

    subject_id: str
    responses: np.ndarray

    def __post_init__(self):
        resp = as_matrix(self.responses, "responses")
        if resp.shape[0] < 1 or resp.shape[1] < 1:
            raise ShapeMismatch(f"responses must be non-empty, got {resp.shape}")
        object.__setattr__(self, "responses", resp)

    @property
    def n_scans(self) -> int:
        return self.responses.shape[0]

    @property
    def n_voxels(self) -> int:
        return self.responses.shape[1]


@dataclass(frozen=True)
class DesignMatrix:
    """Expected responses per condition: T time points by P conditions.

    Columns are condition onsets convolved with the HRF, ordered by the
    sorted condition names.
    """

    conditions: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        vals = as_matrix(self.values, "design values")
        conds = tuple(str(c) for c in self.conditions)
        if len(conds) != vals.shape[1]:
            raise ShapeMismatch(
                f"{len(conds)} condition names for {vals.shape[1]} design columns"
            )
        if len(set(conds)) != len(conds):
            raise DrslError(f"duplicate condition names: {conds}")
        object.__setattr__(self, "conditions", conds)
        object.__setattr__(self, "values", vals)

    @property
    def n_scans(self) -> int:
        return self.values.shape[0]

    @property
    def n_conditions(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SignatureMatrix:
    """Estimated regressors: one spatial pattern per condition (P x V)."""

    values: np.ndarray
    conditions: tuple[str, ...] = ()

    def __post_init__(self):
        vals = as_matrix(self.values, "signature values")
        if vals.shape[1] < 1:
            raise ShapeMismatch("signatures need at least one feature column")
        conds = tuple(str(c) for c in self.conditions)
        if conds and len(conds) != vals.shape[0]:
            raise ShapeMismatch(
                f"{len(conds)} condition names for {vals.shape[0]} signature rows"
            )
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "conditions", conds)

    @property
    def n_conditions(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class NetworkParameters:
    """Per-layer weights and biases of the kernel MLP.

    ``layer_sizes`` is ``[V_org, U_2, ..., U_{C-1}, V]``; layer m has weight
    shape ``U_m x U_{m-1}`` and bias length ``U_m``. At least one hidden
    layer is required (C >= 3).
    """

    layers: tuple[tuple[np.ndarray, np.ndarray], ...]
    layer_sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        validate_layer_sizes(sizes)
        if len(self.layers) != len(sizes) - 1:
            raise BadArchitecture(
                f"{len(self.layers)} layers for {len(sizes)} layer sizes"
            )
        frozen = []
        for m, (w, b) in enumerate(self.layers):
            w = as_matrix(w, f"weight {m + 2}")
            b = as_vector(b, f"bias {m + 2}")
            if w.shape != (sizes[m + 1], sizes[m]):
                raise BadArchitecture(
                    f"weight {m + 2} has shape {w.shape}, expected "
                    f"{(sizes[m + 1], sizes[m])}"
                )
            if b.shape != (sizes[m + 1],):
                raise BadArchitecture(
                    f"bias {m + 2} has length {b.shape[0]}, expected {sizes[m + 1]}"
                )
            frozen.append((w, b))
        object.__setattr__(self, "layers", tuple(frozen))
        object.__setattr__(self, "layer_sizes", sizes)

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]


def validate_layer_sizes(sizes: tuple[int, ...]) -> None:
    if len(sizes) < 3:
        raise BadArchitecture(f"need at least 3 layers (input/hidden/output), got {sizes}")
    if any(s < 1 for s in sizes):
        raise BadArchitecture(f"layer sizes must be positive, got {sizes}")
    if sizes[-1] > sizes[0]:
        raise BadArchitecture(
            f"output dim {sizes[-1]} exceeds input dim {sizes[0]}; the mapped "
            "space cannot be wider than the voxel space"
        )


@dataclass(frozen=True)
class FitConfig:
    """Hyperparameters of the training loops.

    Defaults: alpha=10, eta=1e-3, 10 outer by 100 inner iterations, batch
    size 50, Adam constants (0.9, 0.999, 1e-8). ``layer_sizes=None``
    derives the architecture from the voxel count at fit time.
    """

    alpha: float = 10.0
    eta: float = 1e-3
    m1: int = 10
    m2: int = 100
    batch_size: int = 50
    mu1: float = 0.9
    mu2: float = 0.999
    epsilon: float = 1e-8
    layer_sizes: tuple[int, ...] | None = None
    activation: Activation = Activation.SIGMOID
    init: InitScheme = InitScheme.SCALED_NORMAL
    seed: int = 0
    regularizer: RegularizerMode = RegularizerMode.ENABLED
    adam_literal_epsilon: bool = False
    warm_start_theta: bool = False

    def __post_init__(self):
        object.__setattr__(self, "activation", Activation(self.activation))
        object.__setattr__(self, "init", InitScheme(self.init))
        object.__setattr__(self, "regularizer", RegularizerMode(self.regularizer))
        if self.alpha < 1.0:
            raise BadAlpha(f"alpha must be >= 1, got {self.alpha}")
        if self.eta <= 0.0:
            raise BadStep(f"eta must be > 0, got {self.eta}")
        if self.m1 < 0 or self.m2 < 0:
            raise DrslError(f"iteration counts must be >= 0, got m1={self.m1} m2={self.m2}")
        if self.batch_size < 1:
            raise DrslError(f"batch size must be >= 1, got {self.batch_size}")
        if not (0.0 < self.mu1 < 1.0 and 0.0 < self.mu2 < 1.0):
            raise DrslError(f"Adam moments must lie in (0, 1), got {self.mu1}, {self.mu2}")
        if self.epsilon <= 0.0:
            raise DrslError(f"Adam epsilon must be > 0, got {self.epsilon}")
        if self.seed < 0:
            raise DrslError(f"seed must be non-negative, got {self.seed}")
        if self.layer_sizes is not None:
            sizes = tuple(int(s) for s in self.layer_sizes)
            validate_layer_sizes(sizes)
            object.__setattr__(self, "layer_sizes", sizes)


def validate_pair(data: SubjectData, design: DesignMatrix) -> None:
    """Check that responses and design describe the same scan run.

    Raises ShapeMismatch when time points differ, EmptyDesign when the
    design has fewer than two conditions, and NonFinite when either matrix
    contains NaN or infinite entries.
    """
    if data.n_scans != design.n_scans:
        raise ShapeMismatch(
            f"responses have {data.n_scans} scans but design has {design.n_scans}"
        )
    if design.n_conditions < 2:
        raise EmptyDesign(f"design needs >= 2 conditions, got {design.n_conditions}")
    if not np.all(np.isfinite(data.responses)):
        raise NonFinite(f"responses of subject {data.subject_id!r} contain NaN/Inf")
    if not np.all(np.isfinite(design.values)):
        raise NonFinite("design matrix contains NaN/Inf")


def standardize_columns(data: SubjectData) -> SubjectData:
    """Return a copy with each column scaled to zero mean and unit variance.

    Uses the sample standard deviation (T-1 denominator), matching the
    Pearson-correlation convention used in evaluation. Constant columns map
    to all-zeros instead of raising, so degenerate voxels do not abort a
    whole-dataset fit.
    """
    x = data.responses
    if x.shape[0] < 2:
        raise TooFewRows(f"standardization needs >= 2 rows, got {x.shape[0]}")
    constant = x.max(axis=0) == x.min(axis=0)
    std = x.std(axis=0, ddof=1)
    safe = np.where(std > 0, std, 1.0)
    out = (x - x.mean(axis=0)) / safe
    out[:, constant] = 0.0
    return SubjectData(subject_id=data.subject_id, responses=out)
