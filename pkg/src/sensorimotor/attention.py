"""Attentional pipeline on a 16x16 grid.

Bottom-up maps measure how much each region of a channel departs from the
channel mean. Top-down maps score closeness to a goal (color, distance,
region) in four bands. The combined map is gated by an attentional map that
carries inhibition of return, and the strongest cell of the product wins.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .world import Observation, zone_mask

GRID = 16
BOTTOM_UP = ("R", "G", "B", "D")
TOP_DOWN = ("color", "dist", "reg")
KINDS = BOTTOM_UP + TOP_DOWN

BAND_EDGES = (0.2, 0.4, 0.6, 0.8)

IOR_FLOOR = 0.2
IOR_CYCLES = 5
WINNER_THRESHOLD = 0.01


@dataclass(frozen=True)
class FeatureMap:
    cells: np.ndarray
    kind: str


@dataclass(frozen=True)
class GoalSpec:
    target_color: tuple[float, float, float] | None = None
    target_distance: float | None = None
    target_region: int | None = None

    def has(self, kind: str) -> bool:
        return {
            "color": self.target_color is not None,
            "dist": self.target_distance is not None,
            "reg": self.target_region is not None,
        }[kind]


@dataclass(frozen=True)
class WinnerLocus:
    row: int
    col: int
    value: float


@dataclass
class AttentionalMap:
    cells: np.ndarray = field(default_factory=lambda: np.ones((GRID, GRID)))
    ior_age: np.ndarray = field(default_factory=lambda: np.zeros((GRID, GRID), dtype=np.int64))
    ior_floor: float = IOR_FLOOR
    ior_cycles: int = IOR_CYCLES


def _pool(a: np.ndarray, op) -> np.ndarray:
    n = a.shape[0]
    if a.shape != (n, n) or n % GRID:
        raise ValueError(f"expected a square image with side divisible by {GRID}, got {a.shape}")
    k = n // GRID
    return op(a.reshape(GRID, k, GRID, k), axis=(1, 3))


def bottom_up_map(channel: np.ndarray, kind: str = "R") -> FeatureMap:
    """Average-pool to 16x16 (kernel = stride = side/16) and subtract the channel mean."""
    pooled = _pool(np.asarray(channel, dtype=np.float64), np.mean)
    return FeatureMap(pooled - pooled.mean(), kind)


def bottom_up_maps(obs: Observation, kinds: tuple[str, ...] = BOTTOM_UP) -> list[FeatureMap]:
    """All four channel maps in one pooling pass; same values as :func:`bottom_up_map` per channel."""
    k = obs.resolution // GRID
    starts = np.arange(0, obs.resolution, k)
    sums = np.add.reduceat(np.add.reduceat(obs.channels, starts, axis=2, dtype=np.float64), starts, axis=1)
    pooled = sums / (k * k)
    means = pooled.mean(axis=(1, 2))
    return [FeatureMap(pooled[i] - means[i], kind) for i, kind in enumerate(BOTTOM_UP) if kind in kinds]


def band(proximity: np.ndarray | float) -> np.ndarray:
    """Map proximity in [0, 1] to 0 / 0.25 / 0.5 / 0.75 / 1 with steps at 0.2, 0.4, 0.6, 0.8."""
    p = np.asarray(proximity, dtype=np.float64)
    out = np.zeros_like(p)
    for edge in BAND_EDGES:
        out += 0.25 * (p >= edge)
    return out


def color_proximity(rgb: np.ndarray, target: tuple[float, float, float]) -> np.ndarray:
    return 1.0 - np.abs(rgb - np.asarray(target, dtype=np.float64)).sum(axis=-1) / 3.0


# Pixels with zero depth returned no surface; they carry no colour or range
# evidence and score zero proximity in both goal maps.


def top_down_color_map(obs: Observation, goal: GoalSpec) -> FeatureMap:
    if goal.target_color is None:
        raise ValueError("goal has no target color")
    t = goal.target_color
    dist = np.abs(obs.r - t[0]) + np.abs(obs.g - t[1]) + np.abs(obs.b - t[2])
    prox = np.where(obs.depth > 0, 1.0 - dist / 3.0, 0.0)
    # band() is non-decreasing, so banding the pooled maximum equals pooling the banded pixels
    return FeatureMap(band(_pool(prox, np.max)), "color")


def top_down_distance_map(obs: Observation, goal: GoalSpec) -> FeatureMap:
    if goal.target_distance is None:
        raise ValueError("goal has no target distance")
    prox = np.where(obs.depth > 0, 1.0 - np.abs(obs.depth - goal.target_distance), 0.0)
    return FeatureMap(band(_pool(prox, np.max)), "dist")


def top_down_region_map(goal: GoalSpec) -> FeatureMap:
    if goal.target_region is None:
        raise ValueError("goal has no target region")
    return FeatureMap(zone_mask(goal.target_region, GRID).astype(np.float64), "reg")


def top_down_map(kind: str, obs: Observation, goal: GoalSpec) -> FeatureMap:
    if kind == "color":
        return top_down_color_map(obs, goal)
    if kind == "dist":
        return top_down_distance_map(obs, goal)
    if kind == "reg":
        return top_down_region_map(goal)
    raise ValueError(f"not a top-down kind: {kind!r}")


def combine_maps(maps: list[FeatureMap], weights: list[float] | None = None) -> FeatureMap:
    """Weighted element-wise mean, clamped at zero from below."""
    if not maps:
        raise ValueError("need at least one feature map")
    if weights is None:
        weights = [1.0] * len(maps)
    if len(weights) != len(maps):
        raise ValueError("one weight per map")
    w = np.asarray(weights, dtype=np.float64)
    if (w < 0).any() or w.sum() <= 0:
        raise ValueError("weights must be non-negative with a positive sum")
    stacked = np.stack([m.cells for m in maps])
    mean = np.tensordot(w, stacked, axes=1) / w.sum()
    return FeatureMap(np.maximum(mean, 0.0), "combined")


def update_attentional_map(att: AttentionalMap, winner: WinnerLocus | None) -> AttentionalMap:
    """Recover inhibited cells one step, then inhibit the winner's 3x3 neighbourhood."""
    cells = att.cells.copy()
    age = att.ior_age.copy()
    inhibited = cells < 1.0
    if inhibited.any():
        age[inhibited] += 1
        done = inhibited & (age >= att.ior_cycles)
        cells[inhibited] = att.ior_floor + (1.0 - att.ior_floor) * age[inhibited] / att.ior_cycles
        cells[done] = 1.0
        age[done] = 0
    if winner is not None:
        r0, r1 = max(winner.row - 1, 0), min(winner.row + 2, GRID)
        c0, c1 = max(winner.col - 1, 0), min(winner.col + 2, GRID)
        cells[r0:r1, c0:c1] = att.ior_floor
        age[r0:r1, c0:c1] = 0
    return AttentionalMap(cells, age, att.ior_floor, att.ior_cycles)


def salience(combined: FeatureMap, att: AttentionalMap) -> FeatureMap:
    return FeatureMap(combined.cells * att.cells, "salience")


def select_winner(sal: FeatureMap, threshold: float = WINNER_THRESHOLD) -> WinnerLocus | None:
    """Largest cell above ``threshold``; ties go to the first cell in row-major order."""
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    idx = int(np.argmax(sal.cells))
    value = float(sal.cells.flat[idx])
    if value <= threshold:
        return None
    row, col = divmod(idx, GRID)
    return WinnerLocus(row, col, value)
