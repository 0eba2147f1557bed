"""Command-line surface.

Subcommands: ``synth`` (write a synthetic dataset), ``fit`` (fit one method
and emit signatures plus result tables), ``eval`` (recompute tables from a
fit output), ``cv`` (one-subject-out classification), ``gradcheck``
(finite-difference suites), ``bench`` (per-method wall-clock), ``iters``
(MSE against total iteration count).

Exit codes: 0 success, 1 validation/compute failure, 2 usage error. The
environment variable DRSL_THREADS caps worker threads (0 = auto).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .data_model import FitConfig, standardize_columns
from .dataset_io import (
    ACCURACY_HEADER,
    MSE_HEADER,
    RUNTIME_HEADER,
    RunResult,
    fmt,
    read_dataset,
    write_dataset,
    write_results,
)
from .errors import DrslError
from .evaluation import (
    METHOD_DRSL,
    METHODS,
    between_class_correlation,
    cross_validate,
    fit_method,
    group_mse,
)
from .kernel_net import backprop, init_params, kernel_loss
from .optimizer import grad_b, objective
from .synth import SynthSpec, generate_dataset


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--alpha", type=float, default=10.0, help="regularizer scale (default 10)")
    parser.add_argument("--eta", type=float, default=1e-3, help="learning rate (default 1e-3)")
    parser.add_argument("--m1", type=int, default=10, help="outer iterations (default 10)")
    parser.add_argument("--m2", type=int, default=100, help="inner iterations (default 100)")
    parser.add_argument("--batch", type=int, default=50, help="batch size (default 50)")
    parser.add_argument(
        "--layers",
        default=None,
        help="comma-separated hidden+output widths, e.g. 32,16,8 (input width "
        "is taken from the data; default derives from the voxel count)",
    )
    parser.add_argument(
        "--activation", choices=["sigmoid", "tanh", "relu"], default="sigmoid"
    )
    parser.add_argument(
        "--init", choices=["scaled_normal", "paper_normal"], default="scaled_normal"
    )
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument(
        "--regularizer", choices=["on", "off"], default="on",
        help="disable to compare the linear solver against plain least squares",
    )
    parser.add_argument("--adam-literal-eps", action="store_true")
    parser.add_argument("--warm-start-theta", action="store_true")
    parser.add_argument("--lasso-alpha", type=float, default=0.9)
    parser.add_argument("--lasso-iters", type=int, default=500)


def _config_from_args(args, v_org: int | None) -> FitConfig:
    layer_sizes = None
    if args.layers:
        widths = tuple(int(w) for w in str(args.layers).split(",") if w)
        if v_org is None:
            raise DrslError("--layers needs a dataset to infer the input width")
        layer_sizes = (v_org, *widths)
    return FitConfig(
        alpha=args.alpha,
        eta=args.eta,
        m1=args.m1,
        m2=args.m2,
        batch_size=args.batch,
        layer_sizes=layer_sizes,
        activation=args.activation,
        init=args.init,
        seed=args.seed,
        regularizer=args.regularizer,
        adam_literal_epsilon=args.adam_literal_eps,
        warm_start_theta=args.warm_start_theta,
    )


def _config_echo(args, method: str, dataset: str) -> dict:
    return {
        "method": method,
        "dataset": dataset,
        "alpha": args.alpha,
        "eta": args.eta,
        "m1": args.m1,
        "m2": args.m2,
        "batch": args.batch,
        "layers": args.layers,
        "activation": args.activation,
        "init": args.init,
        "seed": args.seed,
        "regularizer": args.regularizer,
        "adam_literal_eps": args.adam_literal_eps,
        "warm_start_theta": args.warm_start_theta,
        "lasso_alpha": args.lasso_alpha,
        "lasso_iters": args.lasso_iters,
        "version": __version__,
    }


def _load_standardized(path: str):
    pairs = read_dataset(path)
    return [(standardize_columns(data), design) for data, design in pairs]


def _write_matrix_tsv(path: str, values: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        for row in np.atleast_2d(values):
            fh.write("\t".join(fmt(v) for v in row) + "\n")


def _read_matrix_tsv(path: str) -> np.ndarray:
    with open(path) as fh:
        rows = [[float(v) for v in line.split("\t")] for line in fh if line.strip()]
    return np.array(rows, dtype=np.float64)


def _write_csv(path: str, header: str, rows: list[str]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("\n".join([header, *rows]) + ("\n" if rows else "\n"))


def _cmd_synth(args) -> int:
    spec = SynthSpec(
        n_subjects=args.subjects,
        n_scans=args.scans,
        n_voxels=args.voxels,
        n_conditions=args.conditions,
        tr=args.tr,
        snr=args.snr,
        nonlinearity=args.nonlinearity,
        signature_style=args.signature_style,
        rho=args.rho,
        seed=args.seed,
    )
    dataset = generate_dataset(spec)
    write_dataset(args.out, [(subj, dataset.events) for subj in dataset.subjects])
    _write_matrix_tsv(
        os.path.join(args.out, "ground_truth_signatures.tsv"),
        dataset.ground_truth.values,
    )
    print(f"wrote {spec.n_subjects} subjects to {args.out}")
    return 0


def _fit_eval_numbers(datasets, method_fit, config):
    rho = between_class_correlation(method_fit.signatures)
    designs = [design for _, design in datasets]
    mse = group_mse(method_fit.mapped_responses, method_fit.subject_signatures, designs)
    return rho, mse


def _cmd_fit(args) -> int:
    out = args.out or os.path.join(args.dataset, f"results-{args.method}")
    t0 = time.perf_counter()
    datasets = _load_standardized(args.dataset)
    t1 = time.perf_counter()
    config = _config_from_args(args, datasets[0][0].n_voxels)
    method_fit = fit_method(
        datasets, args.method, config,
        lasso_alpha=args.lasso_alpha, lasso_iterations=args.lasso_iters,
    )
    t2 = time.perf_counter()
    rho, mse = _fit_eval_numbers(datasets, method_fit, config)
    t3 = time.perf_counter()

    os.makedirs(out, exist_ok=True)
    _write_matrix_tsv(os.path.join(out, "signatures.tsv"), method_fit.signatures.values)
    for (data, _), sig in zip(datasets, method_fit.subject_signatures):
        _write_matrix_tsv(
            os.path.join(out, f"sub-{data.subject_id}_signatures.tsv"), sig.values
        )
        if args.method == METHOD_DRSL:
            idx = [d.subject_id for d, _ in datasets].index(data.subject_id)
            _write_matrix_tsv(
                os.path.join(out, f"sub-{data.subject_id}_mapped.tsv"),
                method_fit.mapped_responses[idx],
            )
    total_iters = _total_iterations(args)
    result = RunResult(
        method=args.method,
        config=config,
        rho_max=rho,
        mse_by_iterations=((total_iters, mse),),
        phase_ms=(
            ("design_build", (t1 - t0) * 1e3),
            ("fit", (t2 - t1) * 1e3),
            ("eval", (t3 - t2) * 1e3),
        ),
        version=__version__,
    )
    write_results(result, out)
    with open(os.path.join(out, "run.json"), "w") as fh:
        json.dump(_config_echo(args, args.method, args.dataset), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"method={args.method} rho_max={rho:.6f} mse={mse:.6f} -> {out}")
    return 0


def _total_iterations(args) -> int:
    if args.method in (METHOD_DRSL, "lrsl"):
        return args.m1 * args.m2
    if args.method == "lasso":
        return args.lasso_iters
    return 0


def _cmd_eval(args) -> int:
    run_path = os.path.join(args.fit_output, "run.json")
    with open(run_path) as fh:
        echo = json.load(fh)
    out = args.out or args.fit_output
    datasets = _load_standardized(echo["dataset"])
    designs = [design for _, design in datasets]
    signatures = _read_matrix_tsv(os.path.join(args.fit_output, "signatures.tsv"))
    rho = between_class_correlation(signatures)
    subject_sigs, responses = [], []
    for data, _ in datasets:
        subject_sigs.append(
            _read_matrix_tsv(
                os.path.join(args.fit_output, f"sub-{data.subject_id}_signatures.tsv")
            )
        )
        mapped_path = os.path.join(args.fit_output, f"sub-{data.subject_id}_mapped.tsv")
        responses.append(
            _read_matrix_tsv(mapped_path) if os.path.isfile(mapped_path) else data.responses
        )
    mse = group_mse(responses, subject_sigs, designs)
    os.makedirs(out, exist_ok=True)
    _write_csv(
        os.path.join(out, "correlation.csv"),
        "method,rho_max,rho_std_over_seeds",
        [f"{echo['method']},{fmt(rho)},{fmt(0.0)}"],
    )
    total = echo["m1"] * echo["m2"] if echo["method"] in (METHOD_DRSL, "lrsl") else (
        echo["lasso_iters"] if echo["method"] == "lasso" else 0
    )
    _write_csv(os.path.join(out, "mse.csv"), MSE_HEADER, [f"{total},{fmt(mse)}"])
    print(f"method={echo['method']} rho_max={rho:.6f} mse={mse:.6f} -> {out}")
    return 0


def _cmd_cv(args) -> int:
    out = args.out or os.path.join(args.dataset, f"cv-{args.method}")
    t0 = time.perf_counter()
    datasets = _load_standardized(args.dataset)
    t1 = time.perf_counter()
    config = _config_from_args(args, datasets[0][0].n_voxels)
    report = cross_validate(datasets, args.method, config)
    t2 = time.perf_counter()
    os.makedirs(out, exist_ok=True)
    rows = [
        f"{args.method},{fold},{fmt(acc)}" for fold, acc in enumerate(report.accuracies)
    ]
    _write_csv(os.path.join(out, "accuracy.csv"), ACCURACY_HEADER, rows)
    conf_rows = []
    for fold, confusion in enumerate(report.confusions):
        for true_k in range(confusion.shape[0]):
            for pred_k in range(confusion.shape[1]):
                conf_rows.append(
                    f"{args.method},{fold},{true_k},{pred_k},{confusion[true_k, pred_k]}"
                )
    _write_csv(
        os.path.join(out, "confusion.csv"), "method,fold,true,predicted,count", conf_rows
    )
    _write_csv(
        os.path.join(out, "runtime.csv"),
        RUNTIME_HEADER,
        [
            f"{args.method},design_build,{fmt((t1 - t0) * 1e3)}",
            f"{args.method},cv,{fmt((t2 - t1) * 1e3)}",
        ],
    )
    with open(os.path.join(out, "run.json"), "w") as fh:
        json.dump(_config_echo(args, args.method, args.dataset), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(
        f"method={args.method} folds={report.n_folds} "
        f"accuracy={report.mean_accuracy:.4f}+/-{report.std_accuracy:.4f} -> {out}"
    )
    return 0


def _cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    worst_b = 0.0
    for _ in range(10):
        p, v, n = 3, 5, 8
        b = rng.standard_normal((p, v))
        d = rng.standard_normal((n, p))
        f = rng.standard_normal((n, v))
        analytic = grad_b(b, d, f, alpha=10.0)
        h = 1e-6
        for k in range(p):
            for j in range(v):
                if abs(b[k, j]) <= 1e-3:
                    continue
                bp, bm = b.copy(), b.copy()
                bp[k, j] += h
                bm[k, j] -= h
                fd = (objective(bp, d, f, 10.0) - objective(bm, d, f, 10.0)) / (2 * h)
                rel = abs(analytic[k, j] - fd) / max(1.0, abs(fd))
                worst_b = max(worst_b, rel)
    worst_theta = 0.0
    for activation in ("sigmoid", "tanh"):
        params = init_params((6, 5, 4, 3), "scaled_normal", rng=rng)
        x = rng.standard_normal((7, 6))
        t = rng.standard_normal((7, 3))
        grads = backprop(params, x, t, activation)
        h = 1e-5
        for li, (w, bias) in enumerate(params.layers):
            for arr_idx, arr in enumerate((w, bias)):
                flat = arr.ravel()
                for pos in range(flat.size):
                    layers = [
                        (wi.copy(), bi.copy()) for wi, bi in params.layers
                    ]
                    target = layers[li][arr_idx].ravel()
                    target[pos] += h
                    plus = kernel_loss(
                        type(params)(layers=tuple(layers), layer_sizes=params.layer_sizes),
                        x, t, activation,
                    )
                    target[pos] -= 2 * h
                    minus = kernel_loss(
                        type(params)(layers=tuple(layers), layer_sizes=params.layer_sizes),
                        x, t, activation,
                    )
                    fd = (plus - minus) / (2 * h)
                    rel = abs(grads.layers[li][arr_idx].ravel()[pos] - fd) / max(1.0, abs(fd))
                    worst_theta = max(worst_theta, rel)
    print(f"grad_b max relative error:    {worst_b:.3e} (threshold 1e-6)")
    print(f"backprop max relative error:  {worst_theta:.3e} (threshold 1e-5)")
    ok = worst_b < 1e-6 and worst_theta < 1e-5
    if not ok:
        print("gradcheck FAILED", file=sys.stderr)
    return 0 if ok else 1


def _cmd_bench(args) -> int:
    methods = [m for m in str(args.methods).split(",") if m]
    for m in methods:
        if m not in METHODS:
            raise DrslError(f"unknown method {m!r}; expected subset of {METHODS}")
    rows = []
    for method in methods:
        t0 = time.perf_counter()
        datasets = _load_standardized(args.dataset)
        t1 = time.perf_counter()
        config = _config_from_args(args, datasets[0][0].n_voxels)
        method_fit = fit_method(
            datasets, method, config,
            lasso_alpha=args.lasso_alpha, lasso_iterations=args.lasso_iters,
        )
        t2 = time.perf_counter()
        _fit_eval_numbers(datasets, method_fit, config)
        t3 = time.perf_counter()
        rows += [
            f"{method},design_build,{fmt((t1 - t0) * 1e3)}",
            f"{method},fit,{fmt((t2 - t1) * 1e3)}",
            f"{method},eval,{fmt((t3 - t2) * 1e3)}",
        ]
        print(f"{method}: fit {(t2 - t1) * 1e3:.1f} ms")
    os.makedirs(args.out, exist_ok=True)
    _write_csv(os.path.join(args.out, "runtime.csv"), RUNTIME_HEADER, rows)
    return 0


def _cmd_iters(args) -> int:
    schedule = [int(s) for s in str(args.schedule).split(",") if s]
    if not schedule:
        raise DrslError("empty --schedule")
    datasets = _load_standardized(args.dataset)
    designs = [design for _, design in datasets]
    rows = []
    for total in schedule:
        m2 = min(args.m2, total) if total > 0 else args.m2
        m1 = max(1, -(-total // m2))  # ceil division
        override = argparse.Namespace(**{**vars(args), "m1": m1, "m2": m2})
        config = _config_from_args(override, datasets[0][0].n_voxels)
        method_fit = fit_method(datasets, args.method, config)
        mse = group_mse(
            method_fit.mapped_responses, method_fit.subject_signatures, designs
        )
        rows.append(f"{m1 * m2},{fmt(mse)}")
        print(f"iterations={m1 * m2} mse={mse:.6f}")
    os.makedirs(args.out, exist_ok=True)
    _write_csv(os.path.join(args.out, "mse.csv"), MSE_HEADER, rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drsl",
        description="Deep representational similarity learning and linear baselines",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset with known signatures")
    p.add_argument("--subjects", type=int, default=4)
    p.add_argument("--scans", type=int, default=200)
    p.add_argument("--voxels", type=int, default=40)
    p.add_argument("--conditions", type=int, default=4)
    p.add_argument("--tr", type=float, default=2.0)
    p.add_argument("--snr", type=float, default=2.0, help="signal/noise std ratio")
    p.add_argument(
        "--nonlinearity",
        choices=["identity", "tanh_warp", "quadratic_mix"],
        default="identity",
    )
    p.add_argument(
        "--signature-style", choices=["orthogonal", "correlated"], default="orthogonal"
    )
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("fit", help="fit one method and write signatures + tables")
    p.add_argument("--dataset", required=True)
    p.add_argument("--method", choices=list(METHODS), required=True)
    p.add_argument("--out", default=None)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("eval", help="recompute correlation/MSE tables from a fit output")
    p.add_argument("--fit-output", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("cv", help="one-subject-out cross-validated classification")
    p.add_argument("--dataset", required=True)
    p.add_argument("--method", choices=list(METHODS), required=True)
    p.add_argument("--out", default=None)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_cv)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suites")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("bench", help="per-method wall-clock benchmark")
    p.add_argument("--dataset", required=True)
    p.add_argument("--methods", default="glm,lasso,lrsl,drsl")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("iters", help="MSE against total iteration count")
    p.add_argument("--dataset", required=True)
    p.add_argument("--method", choices=[METHOD_DRSL, "lrsl"], default=METHOD_DRSL)
    p.add_argument("--schedule", default="100,500,1000")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_iters)

    return parser


def run_cli(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except DrslError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
