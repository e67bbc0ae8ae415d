"""Spread of a nucleon wave packet (sigma0 = 1 mm): free spreading against the stochastic law.

Writes out/fig1/single.csv and single.svg.
"""
import sys

from qmupl.cli import main

if __name__ == "__main__":
    sys.exit(main(["single", "--preset", "nucleon", "--sigma0", "1e-3", "--format", "both",
                   "--out", "out/fig1", *sys.argv[1:]]))
