"""Action repertoire, decision making, motivation, volition and reward.

Action ids follow a fixed table of 17 entries; a substage enables a prefix
of it (ids 1-10 or 1-17), and Q rows are indexed by ``id - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attention import GRID, FeatureMap, GoalSpec, WinnerLocus
from .memory import Schema
from .world import RED, zone_mask

CURIOSITY_WEIGHT = 0.2
TOPDOWN_HIT_LEVEL = 0.75


@dataclass(frozen=True)
class ActionSpec:
    id: int
    group: str  # motor | virtual | attentional
    name: str
    axis: str | None = None
    sign: int = 0
    coarse: bool | None = None  # None: substage decides (motor 2-5)
    zone: int | None = None
    attend: bool = False
    feature: str | None = None

    @property
    def directional(self) -> bool:
        return self.axis is not None


ACTIONS: tuple[ActionSpec, ...] = (
    ActionSpec(1, "motor", "no-action"),
    ActionSpec(2, "motor", "yaw right", "yaw", +1),
    ActionSpec(3, "motor", "yaw left", "yaw", -1),
    ActionSpec(4, "motor", "pitch down", "pitch", -1),
    ActionSpec(5, "motor", "pitch up", "pitch", +1),
    ActionSpec(6, "virtual", "fovea center", zone=1),
    ActionSpec(7, "virtual", "fovea top-left", zone=2),
    ActionSpec(8, "virtual", "fovea top-right", zone=3),
    ActionSpec(9, "virtual", "fovea bottom-left", zone=4),
    ActionSpec(10, "virtual", "fovea bottom-right", zone=5),
    ActionSpec(11, "attentional", "attend right", "yaw", +1, coarse=True, attend=True),
    ActionSpec(12, "attentional", "attend left", "yaw", -1, coarse=True, attend=True),
    ActionSpec(13, "attentional", "attend down", "pitch", -1, coarse=True, attend=True),
    ActionSpec(14, "attentional", "attend up", "pitch", +1, coarse=True, attend=True),
    ActionSpec(15, "attentional", "emphasize color", feature="color"),
    ActionSpec(16, "attentional", "emphasize distance", feature="dist"),
    ActionSpec(17, "attentional", "emphasize region", feature="reg"),
)
ACTION_BY_ID = {a.id: a for a in ACTIONS}


def winner_on_side(winner: WinnerLocus | None, axis: str, sign: int) -> bool:
    """Is the winner in the grid half that a move along ``axis``/``sign`` turns toward?"""
    if winner is None:
        return False
    half = GRID // 2
    if axis == "yaw":
        return winner.col >= half if sign > 0 else winner.col < half
    # pitch up looks toward low row indices
    return winner.row < half if sign > 0 else winner.row >= half


# --------------------------------------------------------------------------- policy


def epsilon_schedule(episode: int, max_episodes: int, start: float = 0.95) -> float:
    if not 0 <= episode < max_episodes:
        raise ValueError(f"episode {episode} outside [0, {max_episodes})")
    if max_episodes == 1:
        return 0.0
    return start * (1.0 - episode / (max_episodes - 1))


@dataclass
class MotivationState:
    """Curiosity drive: a bonus for (state, action) pairs not yet tried this episode."""

    curiosity_weight: float = CURIOSITY_WEIGHT
    tried: set[tuple[int, int]] = field(default_factory=set)

    def reset(self) -> None:
        self.tried.clear()

    def mark(self, state: int, action_id: int) -> None:
        self.tried.add((state, action_id))


def decide(
    schema: Schema,
    motivation: MotivationState | None,
    epsilon: float,
    rng: np.random.Generator,
) -> int:
    """Epsilon-greedy action id over the schema's row, with an optional curiosity bonus."""
    n = len(schema.q)
    if n == 0:
        raise ValueError("empty Q row")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(n)) + 1
    if motivation is None:
        return int(np.argmax(schema.q)) + 1
    bonus = np.array([(schema.state, a) not in motivation.tried for a in range(1, n + 1)], dtype=np.float64)
    return int(np.argmax(schema.q + motivation.curiosity_weight * bonus)) + 1


# --------------------------------------------------------------------------- reward


@dataclass(frozen=True)
class RewardConfig:
    w_new_schema: float = 1.0
    w_sync: float = 1.0
    w_topdown: float = 0.0
    penalty_catastrophic: float = -10.0
    new_schema_mode: str = "row"  # row | pair


@dataclass(frozen=True)
class TransitionContext:
    new_schema: bool = False
    sync: bool = False
    topdown_hit: bool = False
    catastrophic: bool = False


def compose_reward(ctx: TransitionContext, cfg: RewardConfig) -> float:
    if ctx.catastrophic:
        return cfg.penalty_catastrophic
    return cfg.w_new_schema * ctx.new_schema + cfg.w_sync * ctx.sync + cfg.w_topdown * ctx.topdown_hit


def sync_test(
    prev_winner: WinnerLocus | None,
    action: ActionSpec,
    new_winner: WinnerLocus | None,
    fovea_zone: int = 1,
) -> bool:
    """Did the last action line up with where the stimulus emerged?

    Head moves are rewarded when the new winner lies in the half of the
    grid the head turned toward. Everything that leaves the head in place
    (no-action, fovea moves, emphasis switches, and attend actions whose
    stimulus was on the other side) is rewarded when the new winner falls
    inside the current fovea zone.
    """
    if new_winner is None:
        return False
    if action.directional and (not action.attend or winner_on_side(prev_winner, action.axis, action.sign)):
        return winner_on_side(new_winner, action.axis, action.sign)
    return bool(zone_mask(fovea_zone, GRID)[new_winner.row, new_winner.col])


def topdown_hit_test(goal: GoalSpec | None, topdown: FeatureMap | None, winner: WinnerLocus | None) -> bool:
    if goal is None or topdown is None or winner is None:
        return False
    return bool(topdown.cells[winner.row, winner.col] >= TOPDOWN_HIT_LEVEL)


# --------------------------------------------------------------------------- volition


@dataclass(frozen=True)
class GoalEmission:
    active_goal: GoalSpec
    source: str = "volition"


def default_goal() -> GoalSpec:
    return GoalSpec(target_color=RED)


def volition_emit(cfg) -> GoalEmission | None:
    """Turn the substage's motivation into a top-down goal; only when top-down maps are enabled."""
    if not any(k in cfg.enabled_maps for k in ("color", "dist", "reg")):
        return None
    goal = cfg.goal if cfg.goal is not None else default_goal()
    return GoalEmission(goal)
