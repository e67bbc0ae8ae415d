"""Run the acceptance suite and print one line per criterion."""
import argparse
import sys

from qmupl import acceptance

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("suite", nargs="?", default="all", choices=sorted(acceptance.SUITES))
    ap.add_argument("--seed", type=int, default=acceptance.DEFAULT_SEED)
    args = ap.parse_args()
    res = acceptance.run_suite(args.suite, seed=args.seed, echo=print)
    print(f"{sum(r.passed for r in res)}/{len(res)} passed")
    sys.exit(0 if all(r.passed for r in res) else 1)
