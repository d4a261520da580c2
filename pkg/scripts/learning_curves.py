"""Reward and action curves of the incremental chain against scratch training.

    python scripts/learning_curves.py --seed 0 --out figures/

Top panel: substages 1, 2, 3 trained in sequence, each seeded by the previous
memory. Bottom panel: substages 2 and 3 trained from an empty memory.
"""

import argparse
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from sensorimotor.config import apply_preset, default_substage
from sensorimotor.experiment import metrics_csv, run_training


def smooth(y, k=10):
    return np.convolve(y, np.ones(k) / k, mode="valid") if len(y) >= k else np.asarray(y)


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--preset", choices=("full", "fast"), default="full")
    ap.add_argument("--out", type=Path, default=Path("figures"))
    args = ap.parse_args()
    cfgs = {n: apply_preset(default_substage(n, args.seed), args.preset) for n in (1, 2, 3)}

    runs = {}
    prior = None
    for n in (1, 2, 3):
        prior, runs[f"substage {n}"] = run_training(cfgs[n], prior)
    for n in (2, 3):
        _, runs[f"substage {n} scratch"] = run_training(cfgs[n])

    args.out.mkdir(parents=True, exist_ok=True)
    fig, axes = plt.subplots(2, 2, figsize=(11, 7), sharex=True)
    for row, names in enumerate((["substage 1", "substage 2", "substage 3"], ["substage 2 scratch", "substage 3 scratch"])):
        for name in names:
            logs = runs[name]
            axes[row, 0].plot(smooth([lg.total_reward for lg in logs]), label=name, lw=1)
            axes[row, 1].plot(smooth([lg.action_count for lg in logs]), label=name, lw=1)
        axes[row, 0].set_ylabel("reward (10-episode mean)")
        axes[row, 1].set_ylabel("actions (10-episode mean)")
        axes[row, 0].legend(fontsize="small")
    for ax in axes[1]:
        ax.set_xlabel("episode")
    fig.tight_layout()
    path = args.out / f"learning_curves_seed{args.seed}.png"
    fig.savefig(path, dpi=110)
    for name, logs in runs.items():
        (args.out / f"{name.replace(' ', '_')}_seed{args.seed}.csv").write_text(metrics_csv(logs))
        print(f"{name:20s} last-20 mean reward {np.mean([lg.total_reward for lg in logs[-20:]]):8.1f}")
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
