#!/usr/bin/env python3
"""Geweke joint-distribution validation of the Gibbs kernel, with an
optional deliberate fault injection to confirm the harness has power.

Example:
    python scripts/run_geweke.py --rounds 100000
    python scripts/run_geweke.py --rounds 30000 --variance-inflation 2.0
"""

import argparse
import sys

from precfactor.sampler import geweke_hyper, validate_geweke


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--d", type=int, default=3)
    ap.add_argument("--q", type=int, default=2)
    ap.add_argument("--n", type=int, default=5)
    ap.add_argument("--rounds", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument(
        "--variance-inflation", type=float, default=1.0,
        help="!= 1 corrupts step 2 on purpose; the test should then fail",
    )
    args = ap.parse_args()

    report = validate_geweke(
        geweke_hyper(args.q), d=args.d, n=args.n, n_rounds=args.rounds,
        seed=args.seed, variance_inflation=args.variance_inflation,
    )
    for name, z in sorted(report.z_scores.items()):
        print(f"{name:14s} z = {z:+.3f}")
    if report.diverged_at is not None:
        print(f"chain left the representable support at round {report.diverged_at}")
    verdict = "PASS" if report.passed() else "FAIL"
    print(f"{verdict}: max |z| = {report.max_abs_z:.2f} over {report.n_rounds} rounds")
    return 0 if report.passed() else 1


if __name__ == "__main__":
    sys.exit(main())
