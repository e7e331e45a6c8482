"""Equilibrium pair vs. a unilateral deviation by either player (s = 10, c = 2)."""

import argparse

from byzsprt.models import GaussianPair
from byzsprt.montecarlo import equilibrium_sandwich_report

p = argparse.ArgumentParser()
p.add_argument("--thresholds", type=float, nargs="+", default=[20, 50, 100])
p.add_argument("--c", type=int, default=2)
p.add_argument("--trials", type=int, default=10_000)
p.add_argument("--seed", type=int, default=5)
p.add_argument("--threads", type=int, default=1)
args = p.parse_args()

for chk in equilibrium_sandwich_report(10, args.c, GaussianPair(), args.thresholds, args.trials, args.seed, workers=args.threads):
    cells = "  ".join(f"{k}={g / 2:.3f}+-{chk.stderr[k] / 2:.3f}" for k, g in chk.gamma.items())
    print(f"a=b={chk.threshold:g}  {cells}  attacker-side {chk.attack_side_ok}  detector-side {chk.detector_side_ok}")
