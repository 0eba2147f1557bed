"""Linear comparison methods: classical RSA via OLS, LASSO, and the linear
ablation of the deep model (identity transformation).

The LASSO is solved by proximal gradient with soft thresholding; it shares
the batch/gradient machinery style of the main optimizer and is accurate
enough at desk scale. The OLS route goes through a rank-revealing least
squares solve, so rank-deficient designs get the minimum-norm solution.
"""

from __future__ import annotations

import enum

import numpy as np

from .data_model import (
    DesignMatrix,
    FitConfig,
    SignatureMatrix,
    SubjectData,
    validate_pair,
)
from .errors import BadAlpha, BadStep
from .optimizer import GroupFit, fit


class BaselineKind(str, enum.Enum):
    """Linear baselines; each variant maps to exactly one fit routine."""

    GLM_RSA = "glm"
    LASSO = "lasso"
    LRSL = "lrsl"


def fit_glm(data: SubjectData, design: DesignMatrix) -> SignatureMatrix:
    """Ordinary least squares signatures, B = pinv(D) X.

    Uses a rank-revealing solver, so a rank-deficient design yields the
    minimum-norm solution instead of failing.
    """
    validate_pair(data, design)
    b, *_ = np.linalg.lstsq(design.values, data.responses, rcond=None)
    return SignatureMatrix(values=b, conditions=design.conditions)


def soft_threshold(x: np.ndarray, threshold: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - threshold, 0.0)


def lasso_step_size(design: DesignMatrix) -> float:
    """Safe proximal-gradient step, just under 1 / (2 lambda_max(D^T D))."""
    gram = design.values.T @ design.values
    lam = float(np.linalg.eigvalsh(gram)[-1])
    return 0.45 / max(lam, 1e-12)


def fit_lasso(
    data: SubjectData,
    design: DesignMatrix,
    alpha_lasso: float = 0.9,
    eta: float | None = None,
    iterations: int = 500,
) -> SignatureMatrix:
    """Minimize ||X - D B||_F^2 + alpha_lasso * sum|beta| by proximal gradient.

    ``eta=None`` picks a step below the stability limit automatically.
    """
    validate_pair(data, design)
    if alpha_lasso < 0:
        raise BadAlpha(f"alpha_lasso must be >= 0, got {alpha_lasso}")
    if eta is None:
        eta = lasso_step_size(design)
    if eta <= 0:
        raise BadStep(f"eta must be > 0, got {eta}")
    d = design.values
    x = data.responses
    b = np.zeros((d.shape[1], x.shape[1]))
    threshold = eta * alpha_lasso
    for _ in range(iterations):
        grad = -2.0 * d.T @ (x - d @ b)
        b = soft_threshold(b - eta * grad, threshold)
    return SignatureMatrix(values=b, conditions=design.conditions)


def fit_lrsl(datasets, config: FitConfig) -> GroupFit:
    """Group fit with the transformation fixed to the identity, f(x) = x.

    Runs the same two-level loop as the deep model but skips the kernel
    half-step entirely; the mapped space is the voxel space (V = V_org).
    """
    return fit(datasets, config, identity_kernel=True)
