"""Desk-scale learnability transition: 1D all-to-all circuits at L=12.

Trains the 20K model on N_m=2e4 shots at a shallow and a deep depth for a
handful of circuit realizations and writes per-cell and aggregate Delta
CSVs.  The aggregate should show Delta(t=0.25) well below Delta(t=4), the
scaled-down analogue of the full-size transition curves.
"""

import argparse

from mielearn.pipeline import SweepConfig, cmd_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/scaled_transition")
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--realizations", type=int, default=5)
    ap.add_argument("--epochs", type=int, default=300)
    args = ap.parse_args()

    cfg = SweepConfig(
        geometry="all-to-all-1d",
        num_qubits=12,
        depths=[0.25, 4.0],
        n_m_values=[20000],
        presets=["20K"],
        n_e=10000,
        realizations=args.realizations,
        master_seed=args.seed,
        out_dir=args.out,
        train_overrides={"epochs": args.epochs, "dtype": "float32"},
    )
    rows_path, agg_path, failed = cmd_sweep(cfg)
    print(f"rows: {rows_path}")
    print(f"aggregate: {agg_path}")
    with open(agg_path) as fh:
        print(fh.read())
    raise SystemExit(1 if failed else 0)


if __name__ == "__main__":
    main()
