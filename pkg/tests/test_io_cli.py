import csv
import json
import os

import numpy as np
import pytest

from drsl.cli import run_cli
from drsl.data_model import FitConfig
from drsl.dataset_io import (
    RunResult,
    read_dataset,
    write_dataset,
    write_results,
)
from drsl.errors import ManifestMismatch, MissingFile, ParseError
from drsl.synth import SynthSpec, generate_dataset


@pytest.fixture()
def small_dataset(tmp_path):
    spec = SynthSpec(n_subjects=3, n_scans=120, n_voxels=10, n_conditions=3, seed=7)
    ds = generate_dataset(spec)
    path = str(tmp_path / "data")
    write_dataset(path, [(subj, ds.events) for subj in ds.subjects])
    return path, ds


class TestDatasetRoundTrip:
    def test_responses_and_designs_reproduced(self, small_dataset):
        path, ds = small_dataset
        loaded = read_dataset(path)
        assert len(loaded) == 3
        for (data, design), orig_subj, orig_design in zip(
            loaded, ds.subjects, ds.designs
        ):
            np.testing.assert_allclose(
                data.responses, orig_subj.responses, atol=1e-12
            )
            np.testing.assert_allclose(
                design.values, orig_design.values, atol=1e-12
            )
            assert design.conditions == orig_design.conditions

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(MissingFile):
            read_dataset(str(tmp_path))

    def test_missing_bold_file(self, small_dataset):
        path, _ = small_dataset
        os.remove(os.path.join(path, "sub-01_bold.tsv"))
        with pytest.raises(MissingFile):
            read_dataset(path)

    def test_wrong_column_count_names_line(self, small_dataset):
        path, _ = small_dataset
        bold = os.path.join(path, "sub-01_bold.tsv")
        lines = open(bold).read().splitlines()
        lines[2] = "\t".join(lines[2].split("\t")[:-1])
        open(bold, "w").write("\n".join(lines) + "\n")
        with pytest.raises(ParseError, match="line 3"):
            read_dataset(path)

    def test_non_numeric_field_names_position(self, small_dataset):
        path, _ = small_dataset
        bold = os.path.join(path, "sub-01_bold.tsv")
        lines = open(bold).read().splitlines()
        fields = lines[4].split("\t")
        fields[2] = "oops"
        lines[4] = "\t".join(fields)
        open(bold, "w").write("\n".join(lines) + "\n")
        with pytest.raises(ParseError, match="line 5"):
            read_dataset(path)

    def test_negative_onset_rejected(self, small_dataset):
        path, _ = small_dataset
        events = os.path.join(path, "sub-02_events.tsv")
        lines = open(events).read().splitlines()
        first = lines[1].split("\t")
        first[0] = "-4.0"
        lines[1] = "\t".join(first)
        open(events, "w").write("\n".join(lines) + "\n")
        with pytest.raises(ParseError, match="negative onset"):
            read_dataset(path)

    def test_row_count_mismatch(self, small_dataset):
        path, _ = small_dataset
        bold = os.path.join(path, "sub-03_bold.tsv")
        lines = open(bold).read().splitlines()
        open(bold, "w").write("\n".join(lines[:-1]) + "\n")
        with pytest.raises(ManifestMismatch):
            read_dataset(path)

    def test_unknown_event_condition(self, small_dataset):
        path, _ = small_dataset
        events = os.path.join(path, "sub-01_events.tsv")
        lines = open(events).read().splitlines()
        first = lines[1].split("\t")
        first[2] = "mystery"
        lines[1] = "\t".join(first)
        open(events, "w").write("\n".join(lines) + "\n")
        with pytest.raises(ManifestMismatch):
            read_dataset(path)


class TestWriteResults:
    def make_result(self):
        from drsl.evaluation import CvReport

        report = CvReport(
            subject_ids=("01", "02"),
            accuracies=(0.75, 0.5),
            confusions=(np.zeros((2, 2), dtype=np.int64),) * 2,
        )
        return RunResult(
            method="glm",
            config=FitConfig(),
            rho_max=0.125,
            mse_by_iterations=((1000, 0.25),),
            cv=report,
            phase_ms=(("design_build", 1.5), ("fit", 20.0), ("eval", 3.0)),
            version="0.1.0",
        )

    def test_headers_byte_exact(self, tmp_path):
        write_results(self.make_result(), str(tmp_path))
        assert open(tmp_path / "correlation.csv").readline().rstrip("\n") == (
            "method,rho_max,rho_std_over_seeds"
        )
        assert open(tmp_path / "accuracy.csv").readline().rstrip("\n") == (
            "method,fold,accuracy"
        )
        assert open(tmp_path / "mse.csv").readline().rstrip("\n") == "iterations,mse"
        assert open(tmp_path / "runtime.csv").readline().rstrip("\n") == (
            "method,phase,ms"
        )

    def test_round_trip_with_generic_csv_reader(self, tmp_path):
        write_results(self.make_result(), str(tmp_path))
        with open(tmp_path / "correlation.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert rows[0]["method"] == "glm"
        assert float(rows[0]["rho_max"]) == 0.125
        with open(tmp_path / "mse.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert int(rows[0]["iterations"]) == 1000
        assert float(rows[0]["mse"]) == 0.25

    def test_accuracy_rows_one_per_fold(self, tmp_path):
        write_results(self.make_result(), str(tmp_path))
        with open(tmp_path / "accuracy.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 2
        assert [float(r["accuracy"]) for r in rows] == [0.75, 0.5]

    def test_non_finite_rejected(self):
        with pytest.raises(Exception):
            RunResult(method="glm", config=FitConfig(), rho_max=float("nan"))


def run(argv):
    return run_cli(argv)


class TestCli:
    def test_synth_then_fit_glm_happy_path(self, tmp_path):
        out = str(tmp_path / "d")
        assert run(
            [
                "synth", "--subjects", "4", "--scans", "200", "--conditions", "4",
                "--snr", "2", "--seed", "7", "--out", out,
            ]
        ) == 0
        assert run(["fit", "--dataset", out, "--method", "glm"]) == 0
        results = os.path.join(out, "results-glm")
        for name in ("signatures.tsv", "correlation.csv", "mse.csv", "runtime.csv", "run.json"):
            assert os.path.isfile(os.path.join(results, name)), name

    def test_unknown_method_is_usage_error(self, tmp_path):
        assert run(["fit", "--dataset", str(tmp_path), "--method", "unknown"]) == 2

    def test_missing_dataset_is_compute_error(self, tmp_path):
        assert run(["fit", "--dataset", str(tmp_path / "nope"), "--method", "glm"]) == 1

    def test_gradcheck_passes(self):
        assert run(["gradcheck", "--seed", "1"]) == 0

    def test_eval_recomputes_fit_numbers(self, tmp_path, capsys):
        data_dir = str(tmp_path / "d")
        run(["synth", "--subjects", "3", "--scans", "120", "--voxels", "12",
             "--conditions", "3", "--seed", "3", "--out", data_dir])
        fit_out = str(tmp_path / "fit")
        assert run(["fit", "--dataset", data_dir, "--method", "lasso", "--out", fit_out]) == 0
        corr_before = open(os.path.join(fit_out, "correlation.csv")).read()
        mse_before = open(os.path.join(fit_out, "mse.csv")).read()
        eval_out = str(tmp_path / "eval")
        assert run(["eval", "--fit-output", fit_out, "--out", eval_out]) == 0
        assert open(os.path.join(eval_out, "correlation.csv")).read() == corr_before
        assert open(os.path.join(eval_out, "mse.csv")).read() == mse_before

    def test_config_echo_reproduces_run(self, tmp_path):
        data_dir = str(tmp_path / "d")
        run(["synth", "--subjects", "3", "--scans", "120", "--voxels", "10",
             "--conditions", "3", "--seed", "5", "--out", data_dir])
        out1 = str(tmp_path / "r1")
        run(["fit", "--dataset", data_dir, "--method", "lrsl", "--m1", "2",
             "--m2", "30", "--batch", "40", "--seed", "9", "--out", out1])
        echo = json.load(open(os.path.join(out1, "run.json")))
        out2 = str(tmp_path / "r2")
        argv = [
            "fit", "--dataset", echo["dataset"], "--method", echo["method"],
            "--alpha", str(echo["alpha"]), "--eta", str(echo["eta"]),
            "--m1", str(echo["m1"]), "--m2", str(echo["m2"]),
            "--batch", str(echo["batch"]), "--activation", echo["activation"],
            "--init", echo["init"], "--seed", str(echo["seed"]),
            "--regularizer", echo["regularizer"], "--out", out2,
        ]
        assert run(argv) == 0
        assert open(os.path.join(out1, "correlation.csv")).read() == open(
            os.path.join(out2, "correlation.csv")
        ).read()

    def test_bench_writes_runtime_rows(self, tmp_path):
        data_dir = str(tmp_path / "d")
        run(["synth", "--subjects", "2", "--scans", "100", "--voxels", "8",
             "--conditions", "2", "--seed", "2", "--out", data_dir])
        out = str(tmp_path / "bench")
        assert run([
            "bench", "--dataset", data_dir, "--methods", "glm,lasso",
            "--out", out,
        ]) == 0
        with open(os.path.join(out, "runtime.csv")) as fh:
            rows = list(csv.DictReader(fh))
        assert {(r["method"], r["phase"]) for r in rows} == {
            ("glm", "design_build"), ("glm", "fit"), ("glm", "eval"),
            ("lasso", "design_build"), ("lasso", "fit"), ("lasso", "eval"),
        }

    def test_iters_schedule(self, tmp_path):
        data_dir = str(tmp_path / "d")
        run(["synth", "--subjects", "2", "--scans", "100", "--voxels", "8",
             "--conditions", "2", "--seed", "2", "--out", data_dir])
        out = str(tmp_path / "iters")
        assert run([
            "iters", "--dataset", data_dir, "--method", "lrsl",
            "--schedule", "40,80", "--m2", "20", "--batch", "30", "--out", out,
        ]) == 0
        with open(os.path.join(out, "mse.csv")) as fh:
            rows = list(csv.DictReader(fh))
        assert [int(r["iterations"]) for r in rows] == [40, 80]

    def test_version_flag(self):
        assert run(["--version"]) == 0

    def test_cli_defaults_match_fit_config(self):
        from drsl.cli import build_parser

        args = build_parser().parse_args(["fit", "--dataset", "x", "--method", "glm"])
        cfg = FitConfig()
        assert args.alpha == cfg.alpha
        assert args.eta == cfg.eta
        assert args.m1 == cfg.m1
        assert args.m2 == cfg.m2
        assert args.batch == cfg.batch_size
        assert args.activation == cfg.activation.value
        assert args.init == cfg.init.value
        assert args.regularizer == cfg.regularizer.value
