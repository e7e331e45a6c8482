"""Voting with r = s - c_bar against flip attacks of every actual size c <= c_bar."""

import argparse

from byzsprt.models import GaussianPair
from byzsprt.montecarlo import unknown_c_report

p = argparse.ArgumentParser()
p.add_argument("--c-bar", type=int, default=3)
p.add_argument("--thresholds", type=float, nargs="+", default=[50, 100, 200])
p.add_argument("--trials", type=int, default=10_000)
p.add_argument("--seed", type=int, default=9)
p.add_argument("--threads", type=int, default=1)
args = p.parse_args()

rows = unknown_c_report(10, args.c_bar, range(args.c_bar + 1), GaussianPair(), args.thresholds, args.trials, args.seed, args.threads)
print(f"{'c':>2} {'a=b':>6} {'gamma/I':>8} {'stderr':>7} {'bound':>6}")
for r in rows:
    print(f"{r.c:>2} {r.threshold:>6g} {r.normalized:>8.3f} {r.gamma_stderr / 2:>7.3f} {r.bound:>6g}")
