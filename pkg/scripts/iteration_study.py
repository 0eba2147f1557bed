#!/usr/bin/env python3
"""Reconstruction MSE against the total iteration budget.

Runs the deep model at several total-iteration counts (outer x inner) on
one synthetic dataset and prints the MSE curve, the desk-scale version of
the iteration analysis.
"""

import argparse

from drsl.data_model import FitConfig
from drsl.evaluation import fit_method, group_mse
from drsl.synth import SynthSpec, generate_dataset


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--schedule", default="100,500,1000,2000")
    ap.add_argument("--subjects", type=int, default=3)
    ap.add_argument("--scans", type=int, default=160)
    ap.add_argument("--voxels", type=int, default=16)
    ap.add_argument("--conditions", type=int, default=3)
    ap.add_argument("--snr", type=float, default=3.0)
    ap.add_argument("--seed", type=int, default=21)
    args = ap.parse_args()

    spec = SynthSpec(
        n_subjects=args.subjects,
        n_scans=args.scans,
        n_voxels=args.voxels,
        n_conditions=args.conditions,
        snr=args.snr,
        seed=args.seed,
    )
    ds = generate_dataset(spec)
    designs = [d for _, d in ds.pairs]
    print("iterations,mse")
    for total in (int(s) for s in args.schedule.split(",") if s):
        m2 = min(100, total)
        m1 = max(1, -(-total // m2))
        config = FitConfig(
            layer_sizes=(args.voxels, 12, 10, 8),
            activation="tanh",
            m1=m1,
            m2=m2,
            batch_size=50,
            seed=31,
        )
        mf = fit_method(ds.pairs, "drsl", config)
        mse = group_mse(mf.mapped_responses, mf.subject_signatures, designs)
        print(f"{m1 * m2},{mse:.6f}")


if __name__ == "__main__":
    main()
