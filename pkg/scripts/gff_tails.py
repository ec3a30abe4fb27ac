"""Oscillation tails of the harmonic extension and nice-vertex bad fractions.

    python3 scripts/gff_tails.py --n 32 --r 8 --batches 10
"""
import argparse

import numpy as np

from carpetlab.gff import harmonic_oscillation, nice_statistics, sample_field, sample_fields, tail_fit


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=32)
    ap.add_argument("--r", type=int, default=8)
    ap.add_argument("--batches", type=int, default=10, help="batches of 10^4 fields")
    ap.add_argument("--nice-samples", type=int, default=200)
    args = ap.parse_args()
    S = np.concatenate([harmonic_oscillation(sample_fields(args.n, 100 + b, 10_000), args.r)
                        for b in range(args.batches)])
    fit = tail_fit(S, S.std() * np.arange(1, 6))
    print("t,frequency")
    for t, f in zip(fit.t, fit.frequency):
        print(f"{t:.4f},{f}")
    print(f"# slope {fit.slope:.4f}, R^2 {fit.r_squared:.5f}, C_hat {fit.C_hat:.4f}")
    stats = [nice_statistics(sample_field(160, s, cap=200), 4, 1, 2) for s in range(args.nice_samples)]
    print("M,bad_fraction_level_1,bad_fraction_level_2")
    for M in (0.75, 1.0, 1.25, 1.5, 2.0, 2.5):
        f = np.mean([[st.table(M).bad_fraction(j) for j in (1, 2)] for st in stats], axis=0)
        print(f"{M},{f[0]:.4f},{f[1]:.4f}")


if __name__ == "__main__":
    main()
