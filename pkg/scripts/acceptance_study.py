"""Fill the acceptance cache: one full chain-plus-scratch study per seed.

    python scripts/acceptance_study.py --seeds 0 1 2 3 4 --jobs 5

Prints the per-seed numbers the learning-curve and tracking criteria use.
"""

import argparse
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from sensorimotor.study import cached_study

ROOT = Path(__file__).resolve().parents[1]


def one(args):
    seed, cache, preset = args
    return cached_study(seed, cache, preset)


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--preset", choices=("full", "fast"), default="full")
    ap.add_argument("--cache", default=os.environ.get("SENSORIMOTOR_ACCEPTANCE_CACHE", str(ROOT / ".acceptance_cache")))
    args = ap.parse_args()
    jobs = [(s, args.cache, args.preset) for s in args.seeds]
    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        for st in pool.map(one, jobs):
            l20 = "  ".join(f"{k} {v:7.1f}" for k, v in st.last20.items())
            tot = "  ".join(f"{k} {v:.3f}" for k, v in st.time_on_target.items())
            sl = st.slopes["s2_scratch"]
            print(f"seed {st.seed}: last-20 {l20}")
            print(f"         scratch s2 slope {sl.slope:+.3f} [{sl.low:+.3f}, {sl.high:+.3f}], "
                  f"chained s2 slope {st.slopes['s2'].slope:+.3f}")
            print(f"         time on target {tot}")


if __name__ == "__main__":
    main()
