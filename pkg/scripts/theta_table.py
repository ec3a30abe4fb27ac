"""Thresholds p0(N) and theta sequences around them.

    python3 scripts/theta_table.py --N 2 4 6 --M 200
"""
import argparse

from carpetlab.goodness import TWO_THIRDS, p0_threshold, theta_sequence


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--N", type=int, nargs="+", default=[2, 4, 6])
    ap.add_argument("--M", type=int, default=200)
    args = ap.parse_args()
    print("N,p0,nu,sufficient_bound,min_theta_above,min_theta_below")
    for N in args.N:
        t = p0_threshold(N)
        above = theta_sequence(N, min(1.0, t.p0 + 1e-4), args.M).min
        below = theta_sequence(N, t.p0 - 1e-2, args.M).min
        print(f"{N},{t.p0:.7f},{t.nu},{t.sufficient_bound:.7f},{above:.6f},{below:.3g}")
        assert above >= TWO_THIRDS > below


if __name__ == "__main__":
    main()
