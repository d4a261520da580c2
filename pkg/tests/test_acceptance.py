"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Criteria 1-4 need five full-preset seeds (chain plus scratch training and
validation, roughly ten minutes per seed on one core). Results are cached
per source digest in ``$SENSORIMOTOR_ACCEPTANCE_CACHE`` (default
``.acceptance_cache`` at the repository root); delete it or change the code
to force fresh runs. ``scripts/acceptance_study.py`` fills the cache with
several processes.
"""

import os
from pathlib import Path

import numpy as np
import pytest

from sensorimotor.attention import GRID, KINDS, GoalSpec, band, bottom_up_maps, top_down_map
from sensorimotor.cli import main
from sensorimotor.config import parse_run_config
from sensorimotor.experiment import TERMINATIONS, run_episode
from sensorimotor.memory import ProceduralMemory, Schema, accommodate, encode_state
from sensorimotor.study import cached_study
from sensorimotor.world import RED, Observation, WorldState, make_world

ROOT = Path(__file__).resolve().parents[1]
SEEDS = (0, 1, 2, 3, 4)
CACHE = os.environ.get("SENSORIMOTOR_ACCEPTANCE_CACHE", str(ROOT / ".acceptance_cache"))


def verdict(record_property, n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    record_property("criterion", line)
    assert ok, line


@pytest.fixture(scope="module")
def studies():
    return [cached_study(seed, CACHE) for seed in SEEDS]


# --------------------------------------------------------------------------- learning curves


def test_criterion_1_incremental_advantage(studies, record_property):
    chain = np.array([s.last20["s3"] for s in studies])
    scratch = np.array([s.last20["s3_scratch"] for s in studies])
    ratio = chain.mean() / scratch.mean()
    verdict(
        record_property,
        1,
        ratio >= 1.5,
        f"s3 last-20 mean, chained {chain.mean():.1f} vs scratch {scratch.mean():.1f}: ratio {ratio:.2f} (need >= 1.5); "
        f"per seed {np.round(chain / scratch, 2).tolist()}",
    )


def test_criterion_2_scratch_stagnation(studies, record_property):
    hits = [s.slopes["s2_scratch"].contains_zero and s.slopes["s2"].slope > 0 for s in studies]
    detail = "; ".join(
        f"seed {s.seed}: scratch {s.slopes['s2_scratch'].slope:+.3f} "
        f"[{s.slopes['s2_scratch'].low:+.3f}, {s.slopes['s2_scratch'].high:+.3f}], chained {s.slopes['s2'].slope:+.3f}"
        for s in studies
    )
    verdict(record_property, 2, sum(hits) >= 3, f"{sum(hits)}/5 seeds (need >= 3): {detail}")


def test_criterion_3_developmental_ordering(studies, record_property):
    med = {k: float(np.median([s.last20[k] for s in studies])) for k in ("s1", "s2", "s3")}
    verdict(
        record_property,
        3,
        med["s3"] > med["s2"] > med["s1"],
        f"median last-20 reward s1 {med['s1']:.1f}, s2 {med['s2']:.1f}, s3 {med['s3']:.1f}",
    )


def test_criterion_4_tracking_contrast(studies, record_property):
    gap = float(np.median([s.time_on_target["s3_leaving"] - s.time_on_target["s1_leaving"] for s in studies]))
    s1_fixed = float(np.median([s.time_on_target["s1_fixed_inside"] for s in studies]))
    s1_leaving = float(np.median([s.time_on_target["s1_leaving"] for s in studies]))
    verdict(
        record_property,
        4,
        gap >= 0.15 and s1_fixed > s1_leaving,
        f"leaving field: median s3 - s1 = {gap:+.3f} (need >= 0.15); "
        f"s1 fixed-inside {s1_fixed:.3f} vs s1 leaving {s1_leaving:.3f}",
    )


# --------------------------------------------------------------------------- contracts


def test_criterion_5_state_space(record_property):
    rng = np.random.default_rng(5)
    states = [encode_state(rng.random((GRID, GRID)) ** rng.uniform(0.2, 5)) for _ in range(2000)]
    states += [encode_state(np.zeros((GRID, GRID))), encode_state(np.eye(GRID))]
    in_range = all(0 <= s <= 65535 for s in states)
    full = np.zeros((GRID, GRID))
    full[::4, ::4] = 1.0
    extremes = encode_state(np.zeros((GRID, GRID))) == 0 and encode_state(full, relative=False) == 65535
    reached = set()
    for bit in range(16):
        r, c = divmod(bit, 4)
        sal = np.zeros((GRID, GRID))
        sal[4 * r + 3, 4 * c] = 0.5
        if encode_state(sal) == 1 << bit:
            reached.add(bit)
    verdict(
        record_property,
        5,
        in_range and extremes and reached == set(range(16)),
        f"range [0, 65535] attained: {extremes}; {len(reached)}/16 bits reachable individually",
    )


def test_criterion_6_pipeline_shapes(record_property):
    rng = np.random.default_rng(6)
    goal = GoalSpec(target_color=RED, target_distance=0.4, target_region=2)
    shapes_ok = True
    levels = set()
    for res in (64, 128, 256):
        obs = Observation(res, rng.random((4, res, res)).astype(np.float32))
        maps = bottom_up_maps(obs) + [top_down_map(k, obs, goal) for k in KINDS[4:]]
        shapes_ok &= [m.kind for m in maps] == list(KINDS) and all(m.cells.shape == (GRID, GRID) for m in maps)
        for m in maps[4:]:
            levels |= set(np.unique(m.cells).tolist())
    p = rng.random(100_000)
    banded = band(p)
    expected = 0.25 * ((p >= 0.2).astype(int) + (p >= 0.4) + (p >= 0.6) + (p >= 0.8))
    edges_exact = all(band(e) - band(np.nextafter(e, 0.0)) == 0.25 for e in (0.2, 0.4, 0.6, 0.8))
    ok = (
        shapes_ok
        and levels <= {0.0, 0.25, 0.5, 0.75, 1.0}
        and set(np.unique(banded).tolist()) <= {0.0, 0.25, 0.5, 0.75, 1.0}
        and np.array_equal(banded, expected)
        and edges_exact
    )
    verdict(record_property, 6, ok, f"7 maps 16x16 at 64/128/256: {shapes_ok}; 1e5-pixel band check exact: {ok}")


def test_criterion_7_q_update_oracle(record_property):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(10_000):
        q, r, q_next = rng.uniform(-20, 20), rng.uniform(-10, 3), rng.uniform(-20, 20, 10)
        alpha, gamma = rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)
        mem = ProceduralMemory(10)
        row = rng.uniform(-1, 1, 10)
        row[3] = q
        mem.schemas[1] = Schema(1, row)
        mem.schemas[2] = Schema(2, q_next.copy())
        got = accommodate(mem, 1, 3, r, 2, alpha, gamma)
        # independent formulation: move a fraction alpha of the way to the target
        target = r + gamma * max(q_next.tolist())
        oracle = q + alpha * target - alpha * q
        worst = max(worst, abs(got - oracle))
    verdict(record_property, 7, worst <= 1e-12, f"10^4 instances, max |error| {worst:.2e} (need <= 1e-12)")


def test_criterion_8_chain_determinism(tmp_path, record_property):
    runs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["chain", "--fast", "--seed", "11", "-o", str(out)]) == 0
        runs.append(out)
    a, b = runs
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.suffix in (".csv", ".pmem", ".json"))
    same = [(a / f).read_bytes() == (b / f).read_bytes() for f in files]
    pmems = sum(f.suffix == ".pmem" for f in files)
    verdict(
        record_property,
        8,
        all(same) and pmems == 3,
        f"{sum(same)}/{len(files)} CSV/.pmem/manifest files byte-identical across two fast chains",
    )


def test_criterion_9_protocol_constants(record_property):
    subs = parse_run_config("").substages
    defaults = all(
        (c.max_episodes, c.max_steps, c.max_no_salience, c.alpha, c.gamma, c.exploration_start)
        == (200, 500, 5, 0.9, 0.99, 0.95)
        for c in subs
    )
    cfg = parse_run_config('preset = "fast"').substages[0]
    home = cfg.world.home()
    empty = WorldState(2.0, (), None, 0.0, np.random.default_rng(0))
    outcomes = {}
    logs = [
        run_episode(cfg, ProceduralMemory(10), empty, 0.0, True, np.random.default_rng(0))[0],
        run_episode(cfg, ProceduralMemory(10), make_world(0), 0.0, True, np.random.default_rng(0),
                    head=home, script=[2] * cfg.max_steps)[0],
        run_episode(cfg, ProceduralMemory(10), make_world(0), 0.0, True, np.random.default_rng(0),
                    head=home, script=[6] * cfg.max_steps)[0],
    ]
    for lg in logs:
        outcomes[lg.termination] = lg.action_count
    trichotomy = (
        list(outcomes) == ["no_salience", "catastrophic", "max_steps"]
        and outcomes["no_salience"] == 5
        and outcomes["max_steps"] == cfg.max_steps
        and all(lg.termination in TERMINATIONS for lg in logs)
    )
    verdict(
        record_property,
        9,
        defaults and trichotomy,
        f"defaults (200, 500, 5, 0.9, 0.99, 0.95): {defaults}; scripted terminations {outcomes}",
    )
