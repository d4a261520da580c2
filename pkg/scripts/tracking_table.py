"""Validate chained memories on every tracking scenario, each substage on its own rows.

    python scripts/tracking_table.py --seed 0 [--episodes 100]

Also scores the substage-1 and substage-3 memories on one shared
leaving-field geometry, the contrast the acceptance suite checks.
"""

import argparse
from dataclasses import replace

from sensorimotor.config import TABLE_I, apply_preset, default_substage
from sensorimotor.experiment import run_training, run_validation
from sensorimotor.study import LEAVING


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--episodes", type=int, default=100)
    ap.add_argument("--preset", choices=("full", "fast"), default="full")
    args = ap.parse_args()
    cfgs = {n: apply_preset(default_substage(n, args.seed), args.preset) for n in (1, 2, 3)}
    mems = {}
    prior = None
    for n in (1, 2, 3):
        prior, _ = run_training(cfgs[n], prior)
        mems[n] = prior

    def row(name, scenario, n):
        scenario = replace(scenario, substage=n, seed=args.seed, episodes=args.episodes)
        rep = run_validation(scenario, mems[n], cfgs[n])
        print(f"{name:28s} substage {n}  time on target {rep.time_on_target_ratio:.3f}  mean reward {rep.mean_reward:8.1f}")

    for name, scenario in TABLE_I.items():
        row(name, scenario, scenario.substage)
    for n in (1, 2, 3):
        row(f"{LEAVING} (shared)", TABLE_I[LEAVING], n)


if __name__ == "__main__":
    main()
