"""Substage, world and scenario configuration, and their TOML files.

A chain/train file looks like::

    seed = 7
    preset = "full"          # or "fast"

    [world]
    arena_half_extent = 2.0
    n_blocks = 12

    [[substages]]
    substage = 1
    max_episodes = 200       # any SubstageConfig field may be overridden

Unknown keys and wrong types are reported with the line they appear on.
"""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np
import tomli

from .attention import BOTTOM_UP, KINDS, GoalSpec
from .learning import RewardConfig
from .world import BLUE, GREEN, RED, RESOLUTIONS, Block, Camera, Distractor, HeadPose, make_world

COLORS = {"red": RED, "green": GREEN, "blue": BLUE}


class ConfigError(Exception):
    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line else f"{path}: "
        super().__init__(where + message)
        self.path = path
        self.line = line


@dataclass(frozen=True)
class WorldConfig:
    arena_half_extent: float = 2.0
    n_blocks: int = 12
    block_size: float = 0.2
    distractor_speed: float = 0.1
    distractor_size: float = 0.4
    heading_jitter: float = 0.3
    dt: float = 0.1
    camera_x: float = 0.0
    camera_y: float = -2.2
    camera_height: float = 0.8
    pitch_home: float = -0.2
    pitch_limits: tuple[float, float] = (-0.5, 0.2)
    yaw_limits: tuple[float, float] = (-1.0, 1.0)
    start_noise: float = 0.05
    coarse_step: float = 0.10
    fine_step: float = 0.05

    def camera(self, fov_deg: float) -> Camera:
        diag = 2.0 * math.sqrt(2.0) * self.arena_half_extent
        return Camera((self.camera_x, self.camera_y), self.camera_height, fov_deg, diag)

    def home(self) -> HeadPose:
        return HeadPose(self.pitch_home, 0.0, tuple(self.pitch_limits), tuple(self.yaw_limits), 1)


@dataclass(frozen=True)
class SubstageConfig:
    substage: int = 1
    resolution: int = 64
    enabled_actions: tuple[int, ...] = tuple(range(1, 11))
    enabled_maps: tuple[str, ...] = BOTTOM_UP
    motivation_on: bool = False
    curiosity_weight: float = 0.2
    reward: RewardConfig = field(default_factory=RewardConfig)
    goal: GoalSpec | None = None
    max_episodes: int = 200
    max_steps: int = 500
    max_no_salience: int = 5
    alpha: float = 0.9
    gamma: float = 0.99
    exploration_start: float = 0.95
    seed: int = 0
    fov_deg: float = 60.0
    fine_motor: bool = False
    winner_threshold: float = 0.01
    ior_floor: float = 0.2
    ior_cycles: int = 5
    topdown_latch: bool = True
    world: WorldConfig = field(default_factory=WorldConfig)

    @property
    def action_count(self) -> int:
        return len(self.enabled_actions)

    @property
    def motor_step(self) -> float:
        return self.world.fine_step if self.fine_motor else self.world.coarse_step

    def validate(self) -> None:
        if self.substage not in (1, 2, 3):
            raise ConfigError(f"substage must be 1, 2 or 3, got {self.substage}")
        if self.resolution not in RESOLUTIONS:
            raise ConfigError(f"resolution must be one of {RESOLUTIONS}, got {self.resolution}")
        if tuple(self.enabled_actions) != tuple(range(1, len(self.enabled_actions) + 1)) or not (
            1 <= len(self.enabled_actions) <= 17
        ):
            raise ConfigError("enabled_actions must be a prefix 1..n of the 17-action table")
        bad = [k for k in self.enabled_maps if k not in KINDS]
        if bad or not self.enabled_maps:
            raise ConfigError(f"enabled_maps must be non-empty kinds from {KINDS}, got {self.enabled_maps}")
        for name in ("max_episodes", "max_steps", "max_no_salience", "ior_cycles"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not 0 < self.alpha <= 1 or not 0 <= self.gamma <= 1:
            raise ConfigError("alpha must be in (0, 1] and gamma in [0, 1]")
        if not 0 <= self.exploration_start <= 1:
            raise ConfigError("exploration_start must be in [0, 1]")
        if self.world.dt <= 0:
            raise ConfigError("world.dt must be positive")
        if self.substage < 3 and self.reward.w_topdown != 0:
            raise ConfigError("w_topdown must be 0 before substage 3")


def default_substage(n: int, seed: int = 0, world: WorldConfig | None = None) -> SubstageConfig:
    """Protocol defaults: 64/128/256 px, 10/10/17 actions, bottom-up / + motivation / + top-down."""
    world = world or WorldConfig()
    if n == 1:
        return SubstageConfig(1, 64, tuple(range(1, 11)), BOTTOM_UP, False, seed=seed, world=world)
    if n == 2:
        return SubstageConfig(
            2, 128, tuple(range(1, 11)), BOTTOM_UP, True, seed=seed, fov_deg=75.0, fine_motor=True, world=world
        )
    if n == 3:
        return SubstageConfig(
            3,
            256,
            tuple(range(1, 18)),
            KINDS,
            True,
            reward=RewardConfig(w_topdown=1.0),
            goal=GoalSpec(target_color=RED),
            seed=seed,
            fov_deg=75.0,
            fine_motor=True,
            world=world,
        )
    raise ConfigError(f"substage must be 1, 2 or 3, got {n}")


FAST = {"max_episodes": 60, "max_steps": 150}


def apply_preset(cfg: SubstageConfig, preset: str) -> SubstageConfig:
    if preset == "full":
        return cfg
    if preset == "fast":
        return replace(cfg, **FAST)
    raise ConfigError(f"unknown preset {preset!r}")


@dataclass(frozen=True)
class ScenarioSpec:
    """Frozen-policy validation scenario (one row of the tracking table)."""

    name: str
    substage: int = 1
    distance: float = 0.8
    bearing: float = 0.0
    heading: float = 0.0
    speed: float = 0.1
    heading_jitter: float = 0.3
    episodes: int = 100
    max_steps: int = 500
    empty: bool = False
    seed: int = 0


# Distances for "close / medium / high" in the tracking table.
CLOSE, MEDIUM, FAR = 0.8, 1.6, 3.0

# Headings are world-frame (radians from +x); the head looks along +y.
TABLE_I: dict[str, ScenarioSpec] = {
    "s1_fixed_inside": ScenarioSpec("s1_fixed_inside", 1, CLOSE, 0.0, 0.0, 0.0),
    "s1_moving_inside": ScenarioSpec("s1_moving_inside", 1, CLOSE, 0.0, math.pi / 2, 0.1),
    "s1_leaving": ScenarioSpec("s1_leaving", 1, CLOSE, 0.0, 0.0, 0.1),
    "s2_moving_inside": ScenarioSpec("s2_moving_inside", 2, MEDIUM, 0.0, math.pi / 2, 0.1),
    "s2_fixed_outside": ScenarioSpec("s2_fixed_outside", 2, MEDIUM, 1.2, 0.0, 0.0),
    "s2_entering_leaving": ScenarioSpec("s2_entering_leaving", 2, MEDIUM, 0.9, math.pi, 0.1),
    "s3_moving_inside": ScenarioSpec("s3_moving_inside", 3, FAR, 0.0, math.pi / 2, 0.1),
    "s3_leaving": ScenarioSpec("s3_leaving", 3, FAR, 0.0, 0.0, 0.1),
}


# --------------------------------------------------------------------------- TOML


def _key_line(text: str, key: str) -> int | None:
    pat = re.compile(rf"^\s*{re.escape(key)}\s*=", re.MULTILINE)
    m = pat.search(text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _table_line(text: str, header: str, index: int = 0) -> int | None:
    hits = [m for m in re.finditer(rf"^\s*\[+\s*{re.escape(header)}\s*\]+", text, re.MULTILINE)]
    if index < len(hits):
        return text.count("\n", 0, hits[index].start()) + 1
    return None


def _coerce(value: Any, target: Any, name: str) -> Any:
    if isinstance(target, bool):
        if not isinstance(value, bool):
            raise TypeError(f"{name} must be a boolean")
        return value
    if isinstance(target, int) and not isinstance(target, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise TypeError(f"{name} must be an integer")
        return value
    if isinstance(target, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeError(f"{name} must be a number")
        return float(value)
    if isinstance(target, tuple):
        if not isinstance(value, list):
            raise TypeError(f"{name} must be an array")
        return tuple(float(v) if isinstance(target[0], float) else v for v in value) if target else tuple(value)
    if isinstance(target, str):
        if not isinstance(value, str):
            raise TypeError(f"{name} must be a string")
        return value
    return value


def _section(text: str, header: str, index: int) -> tuple[str, int]:
    """Text of the ``index``-th ``[[header]]`` entry (up to the next one) and its first line number."""
    hits = [m.start() for m in re.finditer(rf"^\s*\[\[\s*{re.escape(header)}\s*\]\]", text, re.MULTILINE)]
    if index >= len(hits):
        return text, 1
    end = hits[index + 1] if index + 1 < len(hits) else len(text)
    return text[hits[index]:end], text.count("\n", 0, hits[index]) + 1


def _update(obj, table: dict, text: str, path: str, prefix: str = "", first: int = 1):
    known = {f.name: f for f in fields(obj)}
    changes = {}
    for key, value in table.items():
        line = _key_line(text, key)
        line = None if line is None else line + first - 1
        if key not in known:
            raise ConfigError(f"unknown key {prefix}{key!r}", path, line)
        try:
            changes[key] = _coerce(value, getattr(obj, key), prefix + key)
        except TypeError as exc:
            raise ConfigError(str(exc), path, line) from None
    return replace(obj, **changes)


def _goal(table: dict, text: str, path: str, first: int = 1) -> GoalSpec:
    def line(key):
        n = _key_line(text, key)
        return None if n is None else n + first - 1

    color = table.get("target_color")
    if isinstance(color, str):
        if color not in COLORS:
            raise ConfigError(f"unknown color {color!r}", path, line("target_color"))
        color = COLORS[color]
    elif color is not None:
        color = tuple(float(c) for c in color)
    extra = set(table) - {"target_color", "target_distance", "target_region"}
    if extra:
        raise ConfigError(f"unknown goal keys {sorted(extra)}", path, line(sorted(extra)[0]))
    return GoalSpec(color, table.get("target_distance"), table.get("target_region"))


def _substage_from_table(table: dict, seed: int, world: WorldConfig, text: str, path: str, idx: int) -> SubstageConfig:
    table = dict(table)
    n = table.pop("substage", None)
    if n not in (1, 2, 3):
        raise ConfigError("each [[substages]] entry needs substage = 1, 2 or 3", path, _table_line(text, "substages", idx))
    cfg = default_substage(n, seed, world)
    reward = table.pop("reward", None)
    goal = table.pop("goal", None)
    section, first = _section(text, "substages", idx)
    cfg = _update(cfg, table, section, path, first=first)
    if reward is not None:
        cfg = replace(cfg, reward=_update(cfg.reward, reward, section, path, "reward.", first))
    if goal is not None:
        cfg = replace(cfg, goal=_goal(goal, section, path, first))
    try:
        cfg.validate()
    except ConfigError as exc:
        raise ConfigError(str(exc), path, _table_line(text, "substages", idx)) from None
    return cfg


@dataclass(frozen=True)
class RunConfig:
    seed: int
    preset: str
    world: WorldConfig
    substages: tuple[SubstageConfig, ...]


def parse_run_config(text: str, path: str = "<string>", seed: int | None = None, preset: str | None = None) -> RunConfig:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(str(exc), path) from None
    top = {"seed", "preset", "world", "substages"}
    for key in data:
        if key not in top:
            raise ConfigError(f"unknown key {key!r}", path, _key_line(text, key) or _table_line(text, key))
    seed = seed if seed is not None else data.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer", path, _key_line(text, "seed"))
    preset = preset or data.get("preset", "full")
    if preset not in ("full", "fast"):
        raise ConfigError(f"preset must be 'full' or 'fast', got {preset!r}", path, _key_line(text, "preset"))
    world = WorldConfig()
    if "world" in data:
        world = _update(world, data["world"], text, path, "world.")
    tables = data.get("substages") or [{"substage": n} for n in (1, 2, 3)]
    subs = []
    for i, t in enumerate(tables):
        cfg = _substage_from_table(t, seed, world, text, path, i)
        subs.append(apply_preset(cfg, preset))
    return RunConfig(seed, preset, world, tuple(subs))


def load_run_config(path: str | Path, seed: int | None = None, preset: str | None = None) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(p)) from None
    return parse_run_config(text, str(p), seed, preset)


def parse_scenario(text: str, path: str = "<string>") -> ScenarioSpec:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(str(exc), path) from None
    if "preset" in data:
        name = data.pop("preset")
        if name not in TABLE_I:
            raise ConfigError(f"unknown scenario preset {name!r}", path, _key_line(text, "preset"))
        base = TABLE_I[name]
    else:
        if "name" not in data:
            raise ConfigError("scenario needs a name or a preset", path)
        base = ScenarioSpec(str(data["name"]))
    return _update(base, data, text, path)


def load_scenario(path: str | Path) -> ScenarioSpec:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario: {exc.strerror}", str(p)) from None
    return parse_scenario(text, str(p))


def to_dict(obj) -> Any:
    """Plain-data view of a config for manifests."""
    if dataclasses.is_dataclass(obj):
        return {f.name: to_dict(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, (tuple, list)):
        return [to_dict(v) for v in obj]
    return obj


def parse_scene(text: str, path: str = "<string>"):
    """Scene file: arena size, seed, optional [distractor] and a [[blocks]] list.

    Returns ``(world_state, head_pose)``; without a ``[[blocks]]`` list the
    layout is drawn from ``seed``.
    """
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(str(exc), path) from None
    allowed = {"seed", "arena_half_extent", "n_blocks", "distractor", "blocks", "pitch", "yaw", "fovea_zone"}
    for key in data:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r}", path, _key_line(text, key) or _table_line(text, key))
    seed = data.get("seed", 0)
    half = float(data.get("arena_half_extent", 2.0))
    world = make_world(seed, arena_half_extent=half, n_blocks=int(data.get("n_blocks", 12)))
    if "blocks" in data:
        blocks = []
        for i, b in enumerate(data["blocks"]):
            color = b.get("color", "blue")
            if isinstance(color, str):
                if color not in COLORS:
                    raise ConfigError(f"unknown color {color!r}", path, _table_line(text, "blocks", i))
                color = COLORS[color]
            try:
                x, y = (float(v) for v in b["position"])
            except (KeyError, TypeError, ValueError):
                raise ConfigError("block needs position = [x, y]", path, _table_line(text, "blocks", i)) from None
            blocks.append(Block((x, y), tuple(float(c) for c in color), float(b.get("size", 0.2))))
        world = replace(world, blocks=tuple(blocks))
    if "distractor" in data:
        d = data["distractor"]
        if d.get("absent", False):
            world = replace(world, distractor=None)
        else:
            base = world.distractor
            pos = tuple(float(v) for v in d.get("position", base.position))
            world = replace(
                world,
                distractor=Distractor(pos, float(d.get("heading", base.heading)), float(d.get("speed", base.speed)),
                                      RED, float(d.get("size", base.size))),
            )
    world.rng = np.random.default_rng([seed, 1])
    head = replace(
        WorldConfig().home(),
        pitch=float(data.get("pitch", WorldConfig().pitch_home)),
        yaw=float(data.get("yaw", 0.0)),
        fovea_zone=int(data.get("fovea_zone", 1)),
    )
    return world, head
