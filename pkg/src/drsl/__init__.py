"""Deep representational similarity learning.

Regularized multi-set regression with a multilayer nonlinear kernel,
trained by block-coordinate SGD/Adam, plus linear baselines (OLS, LASSO,
and the identity-kernel ablation), synthetic data with known ground truth,
and the correlation/MSE/ECOC evaluation protocols.
"""

__version__ = "0.1.0"

from .baselines import BaselineKind, fit_glm, fit_lasso, fit_lrsl
from .data_model import (
    Activation,
    DesignMatrix,
    FitConfig,
    InitScheme,
    NetworkParameters,
    RegularizerMode,
    SignatureMatrix,
    SubjectData,
    standardize_columns,
    validate_pair,
)
from .design import (
    Event,
    EventTable,
    HrfKernel,
    build_design_column,
    build_design_matrix,
    canonical_hrf,
)
from .evaluation import (
    CvReport,
    EcocCodebook,
    Hyperplane,
    MethodFit,
    adapt_test_subject,
    between_class_correlation,
    build_hyperplanes,
    cross_validate,
    ecoc_codebook,
    fit_method,
    group_mse,
    pearson_corr,
    predict,
    residual_scale,
)
from .kernel_net import (
    ForwardTrace,
    ParameterGradients,
    backprop,
    default_layer_sizes,
    forward,
    init_params,
    kernel_loss,
)
from .optimizer import (
    AdamState,
    GroupFit,
    SubjectFit,
    adam_step,
    fit,
    fit_subject,
    grad_b,
    objective,
    regularizer,
    sample_batch,
)
from .synth import Nonlinearity, SignatureStyle, SynthSpec, generate_dataset

__all__ = [
    "Activation",
    "AdamState",
    "BaselineKind",
    "CvReport",
    "DesignMatrix",
    "EcocCodebook",
    "Event",
    "EventTable",
    "FitConfig",
    "ForwardTrace",
    "GroupFit",
    "HrfKernel",
    "Hyperplane",
    "InitScheme",
    "MethodFit",
    "NetworkParameters",
    "Nonlinearity",
    "ParameterGradients",
    "RegularizerMode",
    "SignatureMatrix",
    "SignatureStyle",
    "SubjectData",
    "SubjectFit",
    "SynthSpec",
    "adam_step",
    "adapt_test_subject",
    "backprop",
    "between_class_correlation",
    "build_design_column",
    "build_design_matrix",
    "build_hyperplanes",
    "canonical_hrf",
    "cross_validate",
    "default_layer_sizes",
    "ecoc_codebook",
    "fit",
    "fit_glm",
    "fit_lasso",
    "fit_lrsl",
    "fit_method",
    "fit_subject",
    "forward",
    "generate_dataset",
    "grad_b",
    "group_mse",
    "init_params",
    "kernel_loss",
    "objective",
    "pearson_corr",
    "predict",
    "regularizer",
    "residual_scale",
    "sample_batch",
    "standardize_columns",
    "validate_pair",
]
