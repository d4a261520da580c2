"""Incremental-versus-scratch study for one seed.

Trains the 1 -> 2 -> 3 chain and scratch substage-2/3 runs, then validates
the frozen memories on the tracking scenarios. Everything the learning-curve
and behaviour checks need is reduced to plain numbers in :class:`SeedStudy`.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .config import TABLE_I, apply_preset, default_substage
from .experiment import EpisodeLog, run_training, run_validation

# one leaving-field geometry shared by every substage in the contrast
LEAVING = "s1_leaving"
FIXED_INSIDE = "s1_fixed_inside"


@dataclass(frozen=True)
class Slope:
    slope: float
    low: float
    high: float

    @property
    def contains_zero(self) -> bool:
        return self.low <= 0.0 <= self.high


def reward_slope(logs: Sequence[EpisodeLog], confidence: float = 0.95) -> Slope:
    """Least-squares slope of reward against episode with a two-sided t interval."""
    x = np.array([lg.episode for lg in logs], dtype=np.float64)
    y = np.array([lg.total_reward for lg in logs], dtype=np.float64)
    fit = stats.linregress(x, y)
    half = stats.t.ppf(0.5 + confidence / 2.0, len(x) - 2) * fit.stderr
    return Slope(float(fit.slope), float(fit.slope - half), float(fit.slope + half))


def last_mean(logs: Sequence[EpisodeLog], n: int = 20) -> float:
    return float(np.mean([lg.total_reward for lg in logs[-n:]]))


@dataclass(frozen=True)
class SeedStudy:
    seed: int
    preset: str
    last20: dict[str, float]
    slopes: dict[str, Slope]
    time_on_target: dict[str, float]
    rewards: dict[str, list[float]]

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SeedStudy":
        d = json.loads(text)
        d["slopes"] = {k: Slope(**v) for k, v in d["slopes"].items()}
        return cls(**d)


def run_study(seed: int, preset: str = "full", validation_episodes: int | None = None) -> SeedStudy:
    """Runs labelled ``s1``, ``s2``, ``s3`` (chain) and ``s2_scratch``, ``s3_scratch``."""
    cfgs = {n: apply_preset(default_substage(n, seed), preset) for n in (1, 2, 3)}
    runs: dict[str, list[EpisodeLog]] = {}
    m1, runs["s1"] = run_training(cfgs[1])
    m2, runs["s2"] = run_training(cfgs[2], m1)
    _, runs["s2_scratch"] = run_training(cfgs[2])
    m3, runs["s3"] = run_training(cfgs[3], m2)
    _, runs["s3_scratch"] = run_training(cfgs[3])

    def validate(name: str, substage: int, mem) -> float:
        scenario = replace(TABLE_I[name], substage=substage, seed=seed)
        if validation_episodes is not None:
            scenario = replace(scenario, episodes=validation_episodes)
        if preset == "fast":
            scenario = replace(scenario, max_steps=cfgs[substage].max_steps)
        return run_validation(scenario, mem, cfgs[substage]).time_on_target_ratio

    tot = {
        "s1_fixed_inside": validate(FIXED_INSIDE, 1, m1),
        "s1_leaving": validate(LEAVING, 1, m1),
        "s3_leaving": validate(LEAVING, 3, m3),
    }
    return SeedStudy(
        seed,
        preset,
        {k: last_mean(v) for k, v in runs.items()},
        {k: reward_slope(v) for k, v in runs.items()},
        tot,
        {k: [lg.total_reward for lg in v] for k, v in runs.items()},
    )


def source_digest() -> str:
    """Hash of the package sources; cached study results are only reused for identical code."""
    h = hashlib.sha256()
    for path in sorted(Path(__file__).parent.glob("*.py")):
        h.update(path.name.encode())
        h.update(path.read_bytes())
    return h.hexdigest()[:16]


def cached_study(seed: int, cache_dir: str | Path | None, preset: str = "full") -> SeedStudy:
    """:func:`run_study`, reusing a JSON result stored under ``cache_dir`` for the same sources."""
    if cache_dir is None:
        return run_study(seed, preset)
    path = Path(cache_dir) / source_digest() / f"{preset}_seed{seed}.json"
    if path.exists():
        return SeedStudy.from_json(path.read_text())
    result = run_study(seed, preset)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(result.to_json())
    return result
