"""Evaluation protocols: between-class correlation, reconstruction MSE, and
signature-based ECOC classification with one-subject-out cross-validation.

Classification turns each signature pair into a linear hyperplane (the
signature difference, whitened per feature by the residual scale, with the
offset at the midpoint of the projected training class means). Pairwise
decisions are decoded through an exhaustive pairwise ECOC codebook by
minimum Hamming distance over the nonzero code entries.

Test subjects never touch training: each fold fits on the remaining
subjects only, and for the deep model the held-out subject's kernel is
adapted from its design matrix alone against the frozen group signatures.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .baselines import BaselineKind, fit_glm, fit_lasso, fit_lrsl
from .data_model import (
    DesignMatrix,
    FitConfig,
    NetworkParameters,
    SignatureMatrix,
    SubjectData,
)
from .errors import (
    ConstantRow,
    ConstantVector,
    DegeneratePair,
    DrslError,
    LengthMismatch,
    ShapeMismatch,
    TooFewSubjects,
)
from .kernel_net import forward
from .optimizer import GroupFit, check_group, fit, fit_kernel_params, seed_stream

METHOD_DRSL = "drsl"
METHODS = (METHOD_DRSL, BaselineKind.LRSL.value, BaselineKind.GLM_RSA.value, BaselineKind.LASSO.value)

_RESIDUAL_FLOOR = 1e-8
_DOMINANCE_FRACTION = 0.5
_STREAM_CV_ADAPT = 3


def _as_responses(data) -> np.ndarray:
    if isinstance(data, SubjectData):
        return data.responses
    return np.asarray(data, dtype=np.float64)


def pearson_corr(a, b) -> float:
    """Sample Pearson correlation of two vectors."""
    x = np.asarray(a, dtype=np.float64).ravel()
    y = np.asarray(b, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise LengthMismatch(f"lengths differ: {x.shape[0]} vs {y.shape[0]}")
    if x.shape[0] < 2:
        raise LengthMismatch(f"need >= 2 entries, got {x.shape[0]}")
    xc = x - x.mean()
    yc = y - y.mean()
    nx = float(np.sqrt(xc @ xc))
    ny = float(np.sqrt(yc @ yc))
    if nx == 0.0 or ny == 0.0:
        raise ConstantVector("correlation of a constant vector is undefined")
    r = float((xc @ yc) / (nx * ny))
    return max(-1.0, min(1.0, r))


def between_class_correlation(signatures) -> float:
    """Maximum absolute pairwise correlation between signature rows."""
    b = signatures.values if isinstance(signatures, SignatureMatrix) else np.asarray(
        signatures, dtype=np.float64
    )
    if b.ndim != 2 or b.shape[0] < 2:
        raise ShapeMismatch(f"need a matrix with >= 2 rows, got shape {b.shape}")
    if np.any(b.max(axis=1) == b.min(axis=1)):
        raise ConstantRow("a signature row is constant; correlation undefined")
    best = 0.0
    for i in range(b.shape[0]):
        for j in range(i + 1, b.shape[0]):
            best = max(best, abs(pearson_corr(b[i], b[j])))
    return best


def group_mse(responses, signatures, designs) -> float:
    """Mean squared reconstruction error pooled over subjects.

    ``responses`` live in the space the signatures model: raw voxel data
    for identity-kernel methods, kernel outputs f(x; theta) for the deep
    model. Entries are averaged over all subjects, time points, and
    features.
    """
    if not (len(responses) == len(signatures) == len(designs)):
        raise ShapeMismatch(
            f"got {len(responses)} response sets, {len(signatures)} signature "
            f"sets, {len(designs)} designs"
        )
    total = 0.0
    count = 0
    for resp, sig, design in zip(responses, signatures, designs):
        x = _as_responses(resp)
        b = sig.values if isinstance(sig, SignatureMatrix) else np.asarray(sig)
        d = design.values if isinstance(design, DesignMatrix) else np.asarray(design)
        if x.shape[0] != d.shape[0] or d.shape[1] != b.shape[0] or x.shape[1] != b.shape[1]:
            raise ShapeMismatch(
                f"inconsistent shapes: X {x.shape}, D {d.shape}, B {b.shape}"
            )
        resid = x - d @ b
        total += float(np.sum(resid * resid))
        count += resid.size
    return total / count


def residual_scale(data, design, signatures) -> np.ndarray:
    """Per-feature RMS of the model residual, floored at 1e-8."""
    x = _as_responses(data)
    b = signatures.values if isinstance(signatures, SignatureMatrix) else np.asarray(
        signatures, dtype=np.float64
    )
    d = design.values if isinstance(design, DesignMatrix) else np.asarray(design)
    if x.shape[0] != d.shape[0] or d.shape[1] != b.shape[0] or x.shape[1] != b.shape[1]:
        raise ShapeMismatch(
            f"inconsistent shapes: X {x.shape}, D {d.shape}, B {b.shape}"
        )
    resid = x - d @ b
    rms = np.sqrt(np.mean(resid * resid, axis=0))
    return np.maximum(rms, _RESIDUAL_FLOOR)


def pooled_residual_scale(responses, designs, signatures: SignatureMatrix) -> np.ndarray:
    """Residual scale pooled over several subjects sharing one signature set."""
    b = signatures.values
    total = None
    rows = 0
    for resp, design in zip(responses, designs):
        x = _as_responses(resp)
        d = design.values if isinstance(design, DesignMatrix) else np.asarray(design)
        resid = x - d @ b
        sq = np.sum(resid * resid, axis=0)
        total = sq if total is None else total + sq
        rows += resid.shape[0]
    if total is None or rows == 0:
        raise ShapeMismatch("no responses to pool")
    return np.maximum(np.sqrt(total / rows), _RESIDUAL_FLOOR)


@dataclass(frozen=True)
class Hyperplane:
    """Binary separator for one class pair (i < j); positive side is class i."""

    pair: tuple[int, int]
    normal: np.ndarray
    offset: float

    def decide(self, sample: np.ndarray) -> int:
        return 1 if float(self.normal @ sample) + self.offset >= 0.0 else -1


@dataclass(frozen=True)
class EcocCodebook:
    """Exhaustive pairwise code matrix over {+1, -1, 0}: P x P(P-1)/2."""

    codes: np.ndarray
    pairs: tuple[tuple[int, int], ...]


def ecoc_codebook(p: int) -> EcocCodebook:
    """Column per class pair (i, j): +1 at row i, -1 at row j, 0 elsewhere."""
    if p < 2:
        raise DrslError(f"codebook needs >= 2 classes, got {p}")
    pairs = [(i, j) for i in range(p) for j in range(i + 1, p)]
    codes = np.zeros((p, len(pairs)))
    for col, (i, j) in enumerate(pairs):
        codes[i, col] = 1.0
        codes[j, col] = -1.0
    return EcocCodebook(codes=codes, pairs=tuple(pairs))


def hamming_decode(bits: np.ndarray, codebook: EcocCodebook) -> int:
    """Class whose codeword is Hamming-nearest, counting nonzero entries only.

    Ties break toward the lowest class index.
    """
    bits = np.asarray(bits, dtype=np.float64)
    if bits.shape[0] != codebook.codes.shape[1]:
        raise ShapeMismatch(
            f"{bits.shape[0]} bits for {codebook.codes.shape[1]} codebook columns"
        )
    active = codebook.codes != 0
    distances = np.sum(active & (codebook.codes != bits), axis=1)
    return int(np.argmin(distances))


def build_hyperplanes(
    signatures: SignatureMatrix,
    scale: np.ndarray,
    class_means: np.ndarray | None = None,
) -> list[Hyperplane]:
    """One hyperplane per signature pair.

    The normal is the signature difference weighted elementwise by
    1/scale (inverse-noise whitening); the offset places the boundary at
    the midpoint of the two projected class means. ``class_means`` defaults
    to the signature rows themselves.
    """
    b = signatures.values
    p = b.shape[0]
    if p < 2:
        raise ShapeMismatch(f"need >= 2 signatures, got {p}")
    scale = np.asarray(scale, dtype=np.float64)
    if scale.shape != (b.shape[1],):
        raise ShapeMismatch(
            f"scale has shape {scale.shape}, expected ({b.shape[1]},)"
        )
    means = b if class_means is None else np.asarray(class_means, dtype=np.float64)
    if means.shape != b.shape:
        raise ShapeMismatch(
            f"class means have shape {means.shape}, expected {b.shape}"
        )
    planes = []
    for i in range(p):
        for j in range(i + 1, p):
            if np.array_equal(b[i], b[j]):
                raise DegeneratePair(f"signatures {i} and {j} are identical")
            normal = (b[i] - b[j]) / scale
            midpoint = 0.5 * (normal @ means[i] + normal @ means[j])
            planes.append(Hyperplane(pair=(i, j), normal=normal, offset=-midpoint))
    return planes


def predict(sample, hyperplanes, codebook: EcocCodebook) -> int:
    """Classify one sample: pairwise decisions decoded by Hamming distance."""
    x = np.asarray(sample, dtype=np.float64).ravel()
    if len(hyperplanes) != codebook.codes.shape[1]:
        raise ShapeMismatch(
            f"{len(hyperplanes)} hyperplanes for {codebook.codes.shape[1]} "
            "codebook columns"
        )
    bits = np.array([plane.decide(x) for plane in hyperplanes], dtype=np.float64)
    return hamming_decode(bits, codebook)


def dominant_time_points(design: DesignMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Time points attributable to a single condition, with their labels.

    A row qualifies when its maximum is unique and exceeds half of that
    column's peak value; the label is the argmax condition.
    """
    d = design.values
    col_max = d.max(axis=0)
    labels = d.argmax(axis=1)
    row_best = d[np.arange(d.shape[0]), labels]
    runner_up = np.partition(d, -2, axis=1)[:, -2] if d.shape[1] > 1 else np.full(
        d.shape[0], -np.inf
    )
    keep = (row_best > runner_up) & (row_best > _DOMINANCE_FRACTION * col_max[labels])
    idx = np.nonzero(keep)[0]
    return idx, labels[idx]


@dataclass(frozen=True)
class CvReport:
    """One-subject-out cross-validation summary."""

    subject_ids: tuple[str, ...]
    accuracies: tuple[float, ...]
    confusions: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.accuracies) != len(self.subject_ids) or len(self.confusions) != len(
            self.subject_ids
        ):
            raise ShapeMismatch("per-fold fields must have one entry per subject")
        for acc in self.accuracies:
            if not (0.0 <= acc <= 1.0):
                raise DrslError(f"accuracy {acc} outside [0, 1]")

    @property
    def n_folds(self) -> int:
        return len(self.accuracies)

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std_accuracy(self) -> float:
        if len(self.accuracies) < 2:
            return 0.0
        return float(np.std(self.accuracies, ddof=1))


def adapt_test_subject(
    test_data: SubjectData,
    test_design: DesignMatrix,
    signatures: SignatureMatrix,
    config: FitConfig,
    rng: np.random.Generator | None = None,
    return_history: bool = False,
) -> NetworkParameters:
    """Fit kernel parameters for a held-out subject with signatures frozen.

    Only the design matrix shapes the targets (d_i B for the frozen group
    B), so the training-fold signatures are never influenced by test
    responses.
    """
    return fit_kernel_params(
        test_data, test_design, signatures, config, rng=rng, return_history=return_history
    )


def normalize_method(method) -> str:
    if isinstance(method, BaselineKind):
        return method.value
    name = str(method).lower()
    if name not in METHODS:
        raise DrslError(f"unknown method {method!r}; expected one of {METHODS}")
    return name


@dataclass(frozen=True)
class MethodFit:
    """Group and per-subject results of one method on one dataset list.

    ``mapped_responses`` are each subject's responses in the space the
    signatures model: the raw voxel data for identity-kernel methods, the
    kernel outputs for the deep model.
    """

    method: str
    signatures: SignatureMatrix
    subject_signatures: tuple[SignatureMatrix, ...]
    mapped_responses: tuple[np.ndarray, ...]
    group: GroupFit | None = None


def fit_method(datasets, method, config: FitConfig, lasso_alpha: float = 0.9,
               lasso_iterations: int = 500) -> MethodFit:
    """Fit any method on a dataset list.

    Closed-form baselines average the per-subject solutions into the group
    signatures, mirroring the aggregation of the iterative fits.
    """
    name = normalize_method(method)
    check_group(datasets)
    raw = tuple(data.responses for data, _ in datasets)
    if name == METHOD_DRSL:
        group = fit(datasets, config)
        mapped = tuple(
            forward(sub.params, data.responses, config.activation)[0]
            for (data, _), sub in zip(datasets, group.subject_fits)
        )
        return MethodFit(
            method=name,
            signatures=group.signatures,
            subject_signatures=tuple(s.signatures for s in group.subject_fits),
            mapped_responses=mapped,
            group=group,
        )
    if name == BaselineKind.LRSL.value:
        group = fit_lrsl(datasets, config)
        return MethodFit(
            method=name,
            signatures=group.signatures,
            subject_signatures=tuple(s.signatures for s in group.subject_fits),
            mapped_responses=raw,
            group=group,
        )
    if name == BaselineKind.GLM_RSA.value:
        fits = tuple(fit_glm(data, design) for data, design in datasets)
    else:
        fits = tuple(
            fit_lasso(data, design, alpha_lasso=lasso_alpha, iterations=lasso_iterations)
            for data, design in datasets
        )
    mean = np.mean([f.values for f in fits], axis=0)
    signatures = SignatureMatrix(values=mean, conditions=datasets[0][1].conditions)
    return MethodFit(
        method=name,
        signatures=signatures,
        subject_signatures=fits,
        mapped_responses=raw,
    )


def _class_means(mapped, designs, signatures: SignatureMatrix) -> np.ndarray:
    """Mean mapped response per class over dominant training time points.

    Classes that never dominate fall back to their signature row.
    """
    p = signatures.n_conditions
    v = signatures.n_features
    sums = np.zeros((p, v))
    counts = np.zeros(p)
    for resp, design in zip(mapped, designs):
        idx, labels = dominant_time_points(design)
        for i, lab in zip(idx, labels):
            sums[lab] += resp[i]
            counts[lab] += 1
    means = signatures.values.copy()
    have = counts > 0
    means[have] = sums[have] / counts[have, None]
    return means


def cross_validate(datasets, method, config: FitConfig) -> CvReport:
    """One-subject-out protocol: fit on S-1 subjects, classify the held-out one.

    Test samples are the held-out subject's dominant time points; for the
    deep model the subject's responses are first mapped through a kernel
    adapted from its design alone.
    """
    name = normalize_method(method)
    if len(datasets) < 2:
        raise TooFewSubjects(f"cross-validation needs >= 2 subjects, got {len(datasets)}")
    p = datasets[0][1].n_conditions
    codebook = ecoc_codebook(p)
    accuracies, confusions, subject_ids = [], [], []
    for fold, (test_data, test_design) in enumerate(datasets):
        train = [pair for k, pair in enumerate(datasets) if k != fold]
        method_fit = fit_method(train, name, config)
        signatures = method_fit.signatures
        train_designs = [design for _, design in train]
        mapped_train = method_fit.mapped_responses
        scale = pooled_residual_scale(mapped_train, train_designs, signatures)
        means = _class_means(mapped_train, train_designs, signatures)
        planes = build_hyperplanes(signatures, scale, means)
        if name == METHOD_DRSL:
            theta = adapt_test_subject(
                test_data,
                test_design,
                signatures,
                config,
                rng=seed_stream(config.seed, _STREAM_CV_ADAPT, fold),
            )
            test_responses, _ = forward(theta, test_data.responses, config.activation)
        else:
            test_responses = test_data.responses
        idx, labels = dominant_time_points(test_design)
        if idx.size == 0:
            raise DrslError(
                "no single-condition-dominant time points in the test design"
            )
        confusion = np.zeros((p, p), dtype=np.int64)
        correct = 0
        for i, label in zip(idx, labels):
            guess = predict(test_responses[i], planes, codebook)
            confusion[label, guess] += 1
            correct += int(guess == label)
        accuracies.append(correct / idx.size)
        confusions.append(confusion)
        subject_ids.append(test_data.subject_id)
    return CvReport(
        subject_ids=tuple(subject_ids),
        accuracies=tuple(accuracies),
        confusions=tuple(confusions),
    )
