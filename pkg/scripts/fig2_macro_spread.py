"""Spread of a 1e24-nucleon object for several initial spreads over the first 10 ms.

Every curve ends below 1e-7 m; the script exits nonzero otherwise.
"""
import csv
import sys

from qmupl.cli import main

OUT = "out/fig2"

if __name__ == "__main__":
    status = main(["single", "--nucleons", "1e24", "--sigma0", "1e-2,1e-3,1e-4,1e-5,1e-6", "--horizon", "1e-2",
                   "--format", "both", "--out", OUT])
    if status:
        sys.exit(status)
    with open(f"{OUT}/single.csv") as fh:
        rows = list(csv.DictReader(fh))
    last = rows[-1]
    finals = {k: float(v) for k, v in last.items() if k.startswith("sigma_stochastic")}
    for k, v in finals.items():
        print(f"{k}: {v:.3g} m at t = {float(last['t_s']):.3g} s")
    sys.exit(0 if all(v < 1e-7 for v in finals.values()) else 1)
