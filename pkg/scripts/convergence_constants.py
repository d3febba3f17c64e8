#!/usr/bin/env python3
"""Print zeta, q0(D), the calibrated M and the exact w_k coefficient table."""
import argparse

from icx.partitions import ZETA, a_coefficient, calibrate_M, q0, total_partition_sequence


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kmax", type=int, default=8)
    args = ap.parse_args()
    print(f"zeta = {ZETA!r}")
    print(f"M    = {calibrate_M()!r}")
    for D in (0.0, 0.5, 1.0, 2.0):
        print(f"q0({D}) = {q0(D):.6f}")
    print("b:", total_partition_sequence(args.kmax)[1:])
    for k in range(1, args.kmax + 1):
        print(k, [a_coefficient(nu, k) for nu in range(1, k + 1)])


if __name__ == "__main__":
    main()
