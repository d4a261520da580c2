"""Episode loop, substage training, frozen-policy validation and metric export."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import attention as att_
from .attention import AttentionalMap, FeatureMap, GoalSpec, WinnerLocus
from .config import ScenarioSpec, SubstageConfig, WorldConfig
from .learning import (
    ACTION_BY_ID,
    ActionSpec,
    MotivationState,
    TransitionContext,
    compose_reward,
    decide,
    epsilon_schedule,
    sync_test,
    topdown_hit_test,
    volition_emit,
    winner_on_side,
)
from .memory import (
    ProceduralMemory,
    Schema,
    SensoryMemory,
    WorkingMemory,
    accommodate,
    assimilate,
    encode_state,
    recall,
    transfer,
)
from .world import (
    Camera,
    HeadPose,
    LimitViolation,
    Observation,
    WorldState,
    apply_head_command,
    make_world,
    move_fovea,
    place_distractor_at,
    place_distractor_randomly,
    project,
    render_rgbd,
    step_world,
)

log = logging.getLogger(__name__)

TERMINATIONS = ("max_steps", "catastrophic", "no_salience")
TOPDOWN_ORDER = ("color", "dist", "reg")


class OutputError(Exception):
    """Writing experiment outputs failed."""


@dataclass
class StepRecord:
    state: int
    action: int
    reward: float
    winner: tuple[int, int] | None
    pitch: float
    yaw: float
    fovea_zone: int
    new_schema: bool = False
    sync: bool = False
    topdown_hit: bool = False
    on_target: bool = False


@dataclass
class EpisodeLog:
    episode: int
    steps: list[StepRecord] = field(default_factory=list)
    total_reward: float = 0.0
    action_count: int = 0
    termination: str | None = None
    assimilations: int = 0

    @property
    def on_target_steps(self) -> int:
        return sum(s.on_target for s in self.steps)

    def finish(self, termination: str) -> None:
        if self.termination is not None:
            raise RuntimeError("termination already set")
        if termination not in TERMINATIONS:
            raise ValueError(termination)
        self.termination = termination
        self.action_count = len(self.steps)
        self.total_reward = float(sum(s.reward for s in self.steps))


@dataclass
class ValidationReport:
    scenario: str
    episodes: list[EpisodeLog]
    time_on_target_ratio: float
    mean_reward: float
    max_steps: int


@dataclass
class Percept:
    obs: Observation
    salience: FeatureMap
    topdown: FeatureMap | None
    winner: WinnerLocus | None
    state: int
    maps: list[FeatureMap]
    combined: FeatureMap


# --------------------------------------------------------------------------- perception


def perceive(
    cfg: SubstageConfig,
    camera: Camera,
    world: WorldState,
    head: HeadPose,
    att: AttentionalMap,
    goal: GoalSpec | None,
    emphasis: str | None,
) -> Percept:
    obs = render_rgbd(world, head, cfg.resolution, camera)
    maps = att_.bottom_up_maps(obs, cfg.enabled_maps)
    topdown = None
    if goal is not None and emphasis is not None:
        topdown = att_.top_down_map(emphasis, obs, goal)
        maps.append(topdown)
    combined = att_.combine_maps(maps)
    sal = att_.salience(combined, att)
    winner = att_.select_winner(sal, cfg.winner_threshold)
    return Percept(obs, sal, topdown, winner, encode_state(sal), maps, combined)


def winner_on_distractor(
    winner: WinnerLocus | None, world: WorldState, head: HeadPose, camera: Camera, resolution: int
) -> bool:
    """Does the winner cell back-project onto the distractor's image footprint?"""
    if winner is None or world.distractor is None:
        return False
    d = world.distractor
    p = project(d.position, d.size, head, camera, resolution)
    if p is None:
        return False
    k = resolution / att_.GRID
    return p.u0 < (winner.col + 1) * k and p.u1 > winner.col * k and p.v0 < (winner.row + 1) * k and p.v1 > winner.row * k


def _execute(
    spec: ActionSpec,
    head: HeadPose,
    winner: WinnerLocus | None,
    emphasis: str | None,
    goal: GoalSpec | None,
    cfg: SubstageConfig,
) -> tuple[HeadPose, str | None]:
    w = cfg.world
    mags = (w.coarse_step, w.fine_step)
    if spec.zone is not None:
        return move_fovea(head, spec.zone), emphasis
    if spec.feature is not None:
        if goal is not None and goal.has(spec.feature) and spec.feature in cfg.enabled_maps:
            return head, spec.feature
        return head, emphasis
    if spec.axis is None:
        return head, emphasis
    if spec.attend:
        if not winner_on_side(winner, spec.axis, spec.sign):
            return head, emphasis
        return apply_head_command(head, spec.axis, spec.sign * w.coarse_step, mags), emphasis
    return apply_head_command(head, spec.axis, spec.sign * cfg.motor_step, mags), emphasis


def initial_head(cfg: SubstageConfig, rng: np.random.Generator) -> HeadPose:
    home = cfg.world.home()
    n = cfg.world.start_noise
    jp, jy = rng.uniform(-n, n, size=2) if n > 0 else (0.0, 0.0)
    pitch = min(max(home.pitch + float(jp), home.pitch_limits[0]), home.pitch_limits[1])
    yaw = min(max(home.yaw + float(jy), home.yaw_limits[0]), home.yaw_limits[1])
    return replace(home, pitch=pitch, yaw=yaw)


def default_emphasis(cfg: SubstageConfig, goal: GoalSpec | None) -> str | None:
    if goal is None:
        return None
    for kind in TOPDOWN_ORDER:
        if kind in cfg.enabled_maps and goal.has(kind):
            return kind
    return None


# --------------------------------------------------------------------------- episode


def run_episode(
    cfg: SubstageConfig,
    mem: ProceduralMemory,
    world: WorldState,
    epsilon: float,
    learn: bool,
    rng: np.random.Generator,
    *,
    episode: int = 0,
    head: HeadPose | None = None,
    script: Sequence[int] | None = None,
    seen_pairs: set | None = None,
    trace: Callable[[int, StepRecord, np.ndarray], None] | None = None,
    probe: Callable[[int, int, Percept], None] | None = None,
) -> tuple[EpisodeLog, WorldState]:
    """One sense-decide-act episode; returns the log and the world after the last step.

    With ``learn=False`` the memory is left untouched: unseen states get a
    throw-away row instead of a stored schema. ``script`` forces the action
    ids, one per step. ``probe(episode, cycle, percept)`` sees every
    perception cycle.
    """
    camera = cfg.world.camera(cfg.fov_deg)
    head = head if head is not None else initial_head(cfg, rng)
    att = AttentionalMap(ior_floor=cfg.ior_floor, ior_cycles=cfg.ior_cycles)
    motivation = MotivationState(cfg.curiosity_weight) if cfg.motivation_on else None
    emission = volition_emit(cfg)
    goal = emission.active_goal if emission else None
    base_emphasis = default_emphasis(cfg, goal)
    emphasis = base_emphasis
    sensory, working = SensoryMemory(), WorkingMemory()
    scratch: dict[int, Schema] = {}
    pair_mode = cfg.reward.new_schema_mode == "pair"
    if pair_mode and seen_pairs is None:
        seen_pairs = set()

    out = EpisodeLog(episode)
    pending: tuple[int, int, WinnerLocus | None, ActionSpec] | None = None
    no_salience = 0

    def lookup(state: int) -> tuple[Schema, bool]:
        schema = recall(mem, state)
        if schema is not None:
            return schema, False
        if learn:
            out.assimilations += 1
            return assimilate(mem, state, rng, episode), True
        if state not in scratch:
            scratch[state] = Schema(state, rng.uniform(0.0, 0.1, size=mem.action_count), episode)
            return scratch[state], True
        return scratch[state], False

    def credit(percept: Percept, new: bool, fovea_zone: int) -> None:
        prev_state, prev_action, prev_winner, spec = pending
        if pair_mode:
            new = (prev_state, prev_action) not in seen_pairs
            seen_pairs.add((prev_state, prev_action))
        ctx = TransitionContext(
            new_schema=new,
            sync=sync_test(prev_winner, spec, percept.winner, fovea_zone),
            topdown_hit=cfg.reward.w_topdown > 0 and topdown_hit_test(goal, percept.topdown, percept.winner),
        )
        rec = out.steps[-1]
        rec.reward = compose_reward(ctx, cfg.reward)
        rec.new_schema, rec.sync, rec.topdown_hit = ctx.new_schema, ctx.sync, ctx.topdown_hit
        if learn:
            accommodate(mem, prev_state, prev_action - 1, rec.reward, percept.state, cfg.alpha, cfg.gamma)

    for t in range(cfg.max_steps):
        percept = perceive(cfg, camera, world, head, att, goal, emphasis)
        if probe is not None:
            probe(episode, t, percept)
        sensory.store(percept.obs)
        state = working.update(percept.salience)
        att = att_.update_attentional_map(att, percept.winner)
        if not cfg.topdown_latch:
            emphasis = base_emphasis
        schema, new = lookup(state)
        if pending is not None:
            credit(percept, new, head.fovea_zone)
            if trace is not None:
                trace(episode, out.steps[-1], recall(mem, pending[0]).q if learn else None)
        no_salience = no_salience + 1 if percept.winner is None else 0

        action = int(script[t]) if script is not None else decide(schema, motivation, epsilon, rng)
        if motivation is not None:
            motivation.mark(state, action)
        w = percept.winner
        out.steps.append(
            StepRecord(
                state,
                action,
                0.0,
                None if w is None else (w.row, w.col),
                head.pitch,
                head.yaw,
                head.fovea_zone,
                on_target=winner_on_distractor(w, world, head, camera, cfg.resolution),
            )
        )
        spec = ACTION_BY_ID[action]
        try:
            head, emphasis = _execute(spec, head, w, emphasis, goal, cfg)
            failed = False
        except LimitViolation:
            failed = True
        if failed or no_salience >= cfg.max_no_salience:
            rec = out.steps[-1]
            rec.reward = compose_reward(TransitionContext(catastrophic=True), cfg.reward)
            if learn:
                accommodate(mem, state, action - 1, rec.reward, None, cfg.alpha, cfg.gamma)
            if trace is not None:
                trace(episode, rec, schema.q)
            out.finish("catastrophic" if failed else "no_salience")
            return out, world
        world = step_world(world, cfg.world.dt)
        pending = (state, action, w, spec)

    # credit the last action with one more perception cycle
    percept = perceive(cfg, camera, world, head, att, goal, emphasis)
    if probe is not None:
        probe(episode, cfg.max_steps, percept)
    _, new = lookup(percept.state)
    credit(percept, new, head.fovea_zone)
    if trace is not None:
        trace(episode, out.steps[-1], recall(mem, pending[0]).q if learn else None)
    out.finish("max_steps")
    return out, world


# --------------------------------------------------------------------------- training


def _streams(seed: int, tag: int) -> tuple[np.random.Generator, np.random.Generator]:
    ss = np.random.SeedSequence([seed, tag])
    a, b = ss.spawn(2)
    return np.random.default_rng(a), np.random.default_rng(b)


def build_world(cfg: WorldConfig, seed: int, rng: np.random.Generator | None = None) -> WorldState:
    """Arena for ``seed``: the block layout depends on the seed only, not on the substage."""
    world = make_world(
        seed,
        arena_half_extent=cfg.arena_half_extent,
        n_blocks=cfg.n_blocks,
        block_size=cfg.block_size,
        distractor_speed=cfg.distractor_speed,
        distractor_size=cfg.distractor_size,
        heading_jitter=cfg.heading_jitter,
    )
    if rng is not None:
        world.rng = rng
    return world


def run_training(
    cfg: SubstageConfig,
    prior: ProceduralMemory | None = None,
    *,
    on_episode: Callable[[EpisodeLog, ProceduralMemory], None] | None = None,
    trace: Callable | None = None,
    probe: Callable[[int, int, Percept], None] | None = None,
) -> tuple[ProceduralMemory, list[EpisodeLog]]:
    """Train one substage for ``max_episodes`` episodes, starting from ``prior`` when given."""
    cfg.validate()
    world_rng, agent_rng = _streams(cfg.seed, cfg.substage)
    if prior is not None:
        mem = transfer(prior, cfg.action_count, agent_rng)
    else:
        mem = ProceduralMemory(cfg.action_count)
    world = build_world(cfg.world, cfg.seed, world_rng)
    seen_pairs: set = set()
    logs = []
    for ep in range(cfg.max_episodes):
        eps = epsilon_schedule(ep, cfg.max_episodes, cfg.exploration_start)
        world = place_distractor_randomly(world)
        ep_log, world = run_episode(
            cfg, mem, world, eps, True, agent_rng, episode=ep, seen_pairs=seen_pairs, trace=trace, probe=probe
        )
        logs.append(ep_log)
        if on_episode is not None:
            on_episode(ep_log, mem)
        log.debug(
            "substage %d ep %d eps=%.3f reward=%.1f actions=%d end=%s schemas=%d",
            cfg.substage, ep, eps, ep_log.total_reward, ep_log.action_count, ep_log.termination, len(mem),
        )
    return mem, logs


def run_validation(scenario: ScenarioSpec, mem: ProceduralMemory, cfg: SubstageConfig) -> ValidationReport:
    """Frozen greedy policy (no learning, epsilon 0) on a scripted distractor placement."""
    vcfg = replace(cfg, max_steps=scenario.max_steps, world=replace(cfg.world, heading_jitter=scenario.heading_jitter))
    if vcfg.action_count != mem.action_count:
        raise ValueError(f"memory has {mem.action_count} actions, substage {cfg.substage} uses {vcfg.action_count}")
    camera = vcfg.world.camera(vcfg.fov_deg)
    world_rng, agent_rng = _streams(scenario.seed, 1000 + cfg.substage)
    base = build_world(vcfg.world, cfg.seed, world_rng)
    if scenario.empty:
        base = replace(base, blocks=(), distractor=None)
    logs = []
    for ep in range(scenario.episodes):
        world = base
        if not scenario.empty:
            world = place_distractor_at(base, scenario.distance, scenario.bearing, scenario.heading, scenario.speed, camera)
        ep_log, _ = run_episode(vcfg, mem, world, 0.0, False, agent_rng, episode=ep)
        logs.append(ep_log)
    on_target = sum(lg.on_target_steps for lg in logs)
    ratio = on_target / (scenario.episodes * scenario.max_steps)
    mean_reward = float(np.mean([lg.total_reward for lg in logs])) if logs else 0.0
    return ValidationReport(scenario.name, logs, ratio, mean_reward, scenario.max_steps)


# --------------------------------------------------------------------------- export

METRIC_FIELDS = ("episode", "total_reward", "action_count", "termination")


def metrics_csv(logs: Sequence[EpisodeLog]) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(METRIC_FIELDS)
    for lg in logs:
        w.writerow([lg.episode, repr(lg.total_reward), lg.action_count, lg.termination])
    return out.getvalue()


def steps_csv(logs: Sequence[EpisodeLog]) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["episode", "step", "state", "action", "reward", "winner_row", "winner_col", "pitch", "yaw",
                "fovea_zone", "new_schema", "sync", "topdown_hit", "on_target"])
    for lg in logs:
        for i, s in enumerate(lg.steps):
            row, col = s.winner if s.winner is not None else ("", "")
            w.writerow([lg.episode, i, s.state, s.action, repr(s.reward), row, col, repr(s.pitch), repr(s.yaw),
                        s.fovea_zone, int(s.new_schema), int(s.sync), int(s.topdown_hit), int(s.on_target)])
    return out.getvalue()


def read_metrics_csv(text: str) -> list[dict]:
    rows = list(csv.DictReader(io.StringIO(text)))
    return [
        {
            "episode": int(r["episode"]),
            "total_reward": float(r["total_reward"]),
            "action_count": int(r["action_count"]),
            "termination": r["termination"],
        }
        for r in rows
    ]


def _write(path: Path, data: str | bytes) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if isinstance(data, bytes):
            path.write_bytes(data)
        else:
            path.write_text(data)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror}") from exc


def export_metrics(logs: Sequence[EpisodeLog], csv_path: str | Path, plot_dir: str | Path | None = None,
                   label: str = "") -> list[Path]:
    """Per-episode CSV plus reward/actions line plots; no plot for an empty log list."""
    csv_path = Path(csv_path)
    _write(csv_path, metrics_csv(logs))
    written = [csv_path]
    if logs and plot_dir is not None:
        written += plot_curves({label or csv_path.stem: logs}, Path(plot_dir), csv_path.stem)
    return written


def plot_curves(curves: dict[str, Sequence[EpisodeLog]], plot_dir: Path, stem: str) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (ax_r, ax_a) = plt.subplots(1, 2, figsize=(10, 3.5))
    for label, logs in curves.items():
        ep = [lg.episode for lg in logs]
        ax_r.plot(ep, [lg.total_reward for lg in logs], label=label, lw=0.8)
        ax_a.plot(ep, [lg.action_count for lg in logs], label=label, lw=0.8)
    ax_r.set_xlabel("episode")
    ax_r.set_ylabel("reward")
    ax_a.set_xlabel("episode")
    ax_a.set_ylabel("actions")
    ax_r.legend(fontsize="small")
    fig.tight_layout()
    path = plot_dir / f"{stem}.png"
    try:
        plot_dir.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, dpi=100, metadata={"Software": None})
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror}") from exc
    finally:
        plt.close(fig)
    return [path]
