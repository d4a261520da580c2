"""Simulated arena, 2-DOF head and synthetic RGB-D camera.

The world is 2.5D: blocks and the wandering distractor sit on a ground
plane, the head sits just outside the arena at a fixed height and looks
inward (+y) when yaw is zero. Positive yaw turns right, positive pitch
looks up.

The camera maps viewing angles linearly to pixels (equidistant model) so
that a yaw rotation shifts every object by the same number of pixels.
Objects are flat-shaded billboards; pixel values are area-weighted
coverage, which makes renders at different resolutions consistent under
box downsampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

RESOLUTIONS = (64, 128, 256)
N_ZONES = 5

BLUE = (0.0, 0.0, 1.0)
GREEN = (0.0, 1.0, 0.0)
RED = (1.0, 0.0, 0.0)


class LimitViolation(Exception):
    """A head command would drive a joint past its limit."""

    def __init__(self, axis: str, angle: float, limits: tuple[float, float]):
        super().__init__(f"{axis} {angle:+.4f} rad outside [{limits[0]:+.4f}, {limits[1]:+.4f}]")
        self.axis = axis
        self.angle = angle
        self.limits = limits


@dataclass(frozen=True)
class Block:
    position: tuple[float, float]
    color: tuple[float, float, float]
    size: float


@dataclass(frozen=True)
class Distractor:
    position: tuple[float, float]
    heading: float
    speed: float = 0.1
    color: tuple[float, float, float] = RED
    size: float = 0.4


@dataclass
class WorldState:
    arena_half_extent: float
    blocks: tuple[Block, ...]
    distractor: Distractor | None
    sim_time: float = 0.0
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0), repr=False)
    heading_jitter: float = 0.3


@dataclass(frozen=True)
class HeadPose:
    pitch: float = -0.2
    yaw: float = 0.0
    pitch_limits: tuple[float, float] = (-0.5, 0.2)
    yaw_limits: tuple[float, float] = (-1.0, 1.0)
    fovea_zone: int = 1


@dataclass(frozen=True)
class Camera:
    """Head placement and optics. ``fov_deg`` is the horizontal (and vertical) field of view."""

    position: tuple[float, float] = (0.0, -2.2)
    height: float = 0.8
    fov_deg: float = 60.0
    max_range: float = 4.0 * math.sqrt(2.0)

    def focal(self, resolution: int) -> float:
        return (resolution / 2.0) / math.radians(self.fov_deg / 2.0)


@dataclass(frozen=True)
class Observation:
    """Co-registered R, G, B and depth images stacked as ``channels[4, res, res]`` (float32)."""

    resolution: int
    channels: np.ndarray

    @property
    def r(self) -> np.ndarray:
        return self.channels[0]

    @property
    def g(self) -> np.ndarray:
        return self.channels[1]

    @property
    def b(self) -> np.ndarray:
        return self.channels[2]

    @property
    def depth(self) -> np.ndarray:
        return self.channels[3]

    def rgb(self) -> np.ndarray:
        return np.moveaxis(self.channels[:3], 0, -1)


# --------------------------------------------------------------------------- motion


def _fold(x: float, lo: float, hi: float) -> tuple[float, int]:
    """Reflect ``x`` into [lo, hi]; returns the folded value and the bounce count."""
    width = hi - lo
    t = (x - lo) % (2 * width)
    bounces = int(math.floor((x - lo) / width))
    if t > width:
        t = 2 * width - t
    return lo + t, abs(bounces)


def step_world(world: WorldState, dt: float) -> WorldState:
    """Advance the distractor by ``speed * dt``; reflect and jitter its heading on wall contact.

    Blocks are shared with the input state. The random generator is shared
    too and advances by one draw per wall contact.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    d = world.distractor
    if d is None or d.speed == 0.0:
        return replace(world, sim_time=world.sim_time + dt)

    margin = d.size / 2.0
    lo, hi = -world.arena_half_extent + margin, world.arena_half_extent - margin
    x = d.position[0] + d.speed * dt * math.cos(d.heading)
    y = d.position[1] + d.speed * dt * math.sin(d.heading)
    heading = d.heading
    contact = False
    if not lo < x < hi:
        x, n = _fold(x, lo, hi)
        if n % 2:
            heading = math.pi - heading
        contact = True
    if not lo < y < hi:
        y, n = _fold(y, lo, hi)
        if n % 2:
            heading = -heading
        contact = True
    if contact:
        heading += float(world.rng.uniform(-world.heading_jitter, world.heading_jitter))
        # folding can land exactly on a wall
        eps = 1e-9 * max(1.0, world.arena_half_extent)
        x = min(max(x, lo + eps), hi - eps)
        y = min(max(y, lo + eps), hi - eps)
    heading = math.remainder(heading, 2 * math.pi)
    return replace(
        world,
        distractor=replace(d, position=(x, y), heading=heading),
        sim_time=world.sim_time + dt,
    )


_LIMIT_TOL = 1e-9


def apply_head_command(
    head: HeadPose, axis: str, step: float, magnitudes: tuple[float, ...] = (0.10, 0.05)
) -> HeadPose:
    """Rotate one neck joint by ``step`` radians or raise :class:`LimitViolation`."""
    if step != 0.0 and not any(math.isclose(abs(step), m) for m in magnitudes):
        raise ValueError(f"step {step} is not one of the configured magnitudes {magnitudes}")
    if axis == "pitch":
        angle, limits = head.pitch + step, head.pitch_limits
    elif axis == "yaw":
        angle, limits = head.yaw + step, head.yaw_limits
    else:
        raise ValueError(f"unknown axis {axis!r}")
    if angle < limits[0] - _LIMIT_TOL or angle > limits[1] + _LIMIT_TOL:
        raise LimitViolation(axis, angle, limits)
    angle = min(max(angle, limits[0]), limits[1])
    return replace(head, **{axis: angle})


def move_fovea(head: HeadPose, zone: int) -> HeadPose:
    if not 1 <= zone <= N_ZONES:
        raise ValueError(f"fovea zone must be in 1..{N_ZONES}, got {zone}")
    return replace(head, fovea_zone=zone)


def zone_slices(zone: int, size: int) -> tuple[slice, slice]:
    """Row/column slices of a fovea zone on a ``size``x``size`` grid.

    Zone 1 is the central half-width/half-height rectangle; zones 2-5 are
    the top-left, top-right, bottom-left and bottom-right quadrants.
    """
    h, q = size // 2, size // 4
    return {
        1: (slice(q, q + h), slice(q, q + h)),
        2: (slice(0, h), slice(0, h)),
        3: (slice(0, h), slice(h, size)),
        4: (slice(h, size), slice(0, h)),
        5: (slice(h, size), slice(h, size)),
    }[zone]


def zone_mask(zone: int, size: int = 16) -> np.ndarray:
    mask = np.zeros((size, size), dtype=bool)
    mask[zone_slices(zone, size)] = True
    return mask


# --------------------------------------------------------------------------- rendering


@dataclass(frozen=True)
class Projection:
    """Screen rectangle of one object, in pixel units (column/row extents)."""

    u0: float
    u1: float
    v0: float
    v1: float
    distance: float


def project(
    position: tuple[float, float], size: float, head: HeadPose, camera: Camera, resolution: int
) -> Projection | None:
    """Screen-space rectangle of a ``size``-tall billboard standing at ``position``."""
    dx = position[0] - camera.position[0]
    dy = position[1] - camera.position[1]
    rng = math.hypot(dx, dy)
    if rng < 1e-3:
        return None
    az = math.remainder(math.atan2(dx, dy) - head.yaw, 2 * math.pi)
    if abs(az) >= math.pi / 2:
        return None
    f = camera.focal(resolution)
    c = resolution / 2.0
    half_w = math.atan2(size / 2.0, rng)
    el_top = math.atan2(size - camera.height, rng) - head.pitch
    el_bot = math.atan2(-camera.height, rng) - head.pitch
    p = Projection(
        u0=c + f * (az - half_w),
        u1=c + f * (az + half_w),
        v0=c - f * el_top,
        v1=c - f * el_bot,
        distance=rng,
    )
    if p.u1 <= 0 or p.u0 >= resolution or p.v1 <= 0 or p.v0 >= resolution:
        return None
    return p


def bearing_of_column(u: float, head: HeadPose, camera: Camera, resolution: int) -> float:
    """World bearing (radians, clockwise from +y) seen at horizontal pixel coordinate ``u``."""
    return head.yaw + (u - resolution / 2.0) / camera.focal(resolution)


def _coverage_1d(lo: float, hi: float, n: int) -> tuple[int, int, np.ndarray]:
    i0 = max(int(math.floor(lo)), 0)
    i1 = min(int(math.ceil(hi)), n)
    edges = np.arange(i0, i1 + 1, dtype=np.float64)
    cov = np.minimum(edges[1:], hi) - np.maximum(edges[:-1], lo)
    return i0, i1, np.maximum(cov, 0.0)


def _objects(world: WorldState):
    for blk in world.blocks:
        yield blk.position, blk.size, blk.color
    if world.distractor is not None:
        d = world.distractor
        yield d.position, d.size, d.color


def _footprint(p: Projection, n: int) -> tuple[int, int, int, int]:
    return (
        max(int(math.floor(p.v0)), 0),
        min(int(math.ceil(p.v1)), n),
        max(int(math.floor(p.u0)), 0),
        min(int(math.ceil(p.u1)), n),
    )


def _exact_window(items, r0: int, r1: int, c0: int, c1: int, img: np.ndarray) -> None:
    """Exact visible-area shading of the pixel window [r0:r1, c0:c1].

    The window is cut at every pixel edge and every rectangle edge; each
    elementary piece belongs to the nearest rectangle covering it (items are
    ordered far to near), and pieces are summed back into pixels.
    """
    xs = [float(c) for c in range(c0, c1 + 1)]
    ys = [float(r) for r in range(r0, r1 + 1)]
    for p, _ in items:
        xs += [min(max(p.u0, c0), c1), min(max(p.u1, c0), c1)]
        ys += [min(max(p.v0, r0), r1), min(max(p.v1, r0), r1)]
    xs = np.unique(xs)
    ys = np.unique(ys)
    label = np.full((len(ys) - 1, len(xs) - 1), len(items), dtype=np.intp)
    for k, (p, _) in enumerate(items):
        xa, xb = np.searchsorted(xs, [min(max(p.u0, c0), c1), min(max(p.u1, c0), c1)])
        ya, yb = np.searchsorted(ys, [min(max(p.v0, r0), r1), min(max(p.v1, r0), r1)])
        label[ya:yb, xa:xb] = k
    vals = np.zeros((len(items) + 1, 4))
    vals[:-1] = [v for _, v in items]
    contrib = vals[label] * np.outer(np.diff(ys), np.diff(xs))[..., None]
    xs0 = np.searchsorted(xs, np.arange(c0, c1, dtype=np.float64))
    ys0 = np.searchsorted(ys, np.arange(r0, r1, dtype=np.float64))
    sums = np.add.reduceat(np.add.reduceat(contrib, ys0, axis=0), xs0, axis=1)
    img[:, r0:r1, c0:c1] = np.moveaxis(sums, 2, 0)


def render_rgbd(world: WorldState, head: HeadPose, resolution: int, camera: Camera = Camera()) -> Observation:
    """Flat-shaded RGB-D render; depth is ``1 - range/max_range`` clamped to [0, 1], background 0.

    Each pixel holds the area-weighted colour of what is visible through it.
    Pixels touched by a single object are shaded directly from its coverage;
    pixels shared by several objects are resolved exactly by
    :func:`_exact_window`.
    """
    if resolution not in RESOLUTIONS:
        raise ValueError(f"resolution must be one of {RESOLUTIONS}, got {resolution}")
    img = np.zeros((4, resolution, resolution), dtype=np.float32)
    items = []
    for pos, size, color in _objects(world):
        p = project(pos, size, head, camera, resolution)
        if p is not None:
            depth = min(max(1.0 - p.distance / camera.max_range, 0.0), 1.0)
            items.append((p, (color[0], color[1], color[2], depth)))
    # painter's algorithm, far to near
    items.sort(key=lambda it: -it[0].distance)
    boxes = []
    for p, values in items:
        r0, r1, c0, c1 = box = _footprint(p, resolution)
        if r1 <= r0 or c1 <= c0:
            continue
        boxes.append((box, p, values))
        _, _, cx = _coverage_1d(p.u0, p.u1, resolution)
        _, _, cy = _coverage_1d(p.v0, p.v1, resolution)
        cov = np.outer(cy, cx).astype(np.float32)
        region = img[:, r0:r1, c0:c1]
        region *= 1.0 - cov
        region += np.asarray(values, dtype=np.float32)[:, None, None] * cov
    for i in range(len(boxes)):
        (a0, a1, b0, b1), _, _ = boxes[i]
        for j in range(i + 1, len(boxes)):
            (e0, e1, f0, f1), _, _ = boxes[j]
            r0, r1, c0, c1 = max(a0, e0), min(a1, e1), max(b0, f0), min(b1, f1)
            if r1 > r0 and c1 > c0:
                inside = [
                    (p, v) for (g0, g1, h0, h1), p, v in boxes if g0 < r1 and g1 > r0 and h0 < c1 and h1 > c0
                ]
                _exact_window(inside, r0, r1, c0, c1, img)
    return Observation(resolution, img)


# --------------------------------------------------------------------------- construction


def make_world(
    seed: int,
    arena_half_extent: float = 2.0,
    n_blocks: int = 12,
    block_size: float = 0.2,
    block_colors: tuple[tuple[float, float, float], ...] = (BLUE, GREEN),
    distractor_speed: float = 0.1,
    distractor_size: float = 0.4,
    heading_jitter: float = 0.3,
) -> WorldState:
    """Random block layout and distractor start drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    lim = arena_half_extent - block_size
    blocks = tuple(
        Block(
            position=(float(rng.uniform(-lim, lim)), float(rng.uniform(-lim, lim))),
            color=block_colors[i % len(block_colors)],
            size=block_size,
        )
        for i in range(n_blocks)
    )
    world = WorldState(arena_half_extent, blocks, None, 0.0, rng, heading_jitter)
    return place_distractor_randomly(world, distractor_speed, distractor_size)


def place_distractor_randomly(world: WorldState, speed: float | None = None, size: float | None = None) -> WorldState:
    old = world.distractor
    speed = speed if speed is not None else (old.speed if old else 0.1)
    size = size if size is not None else (old.size if old else 0.4)
    lim = world.arena_half_extent - size
    pos = (float(world.rng.uniform(-lim, lim)), float(world.rng.uniform(-lim, lim)))
    heading = float(world.rng.uniform(-math.pi, math.pi))
    return replace(world, distractor=Distractor(pos, heading, speed, RED, size))


def place_distractor_at(
    world: WorldState,
    distance: float,
    bearing: float,
    heading: float,
    speed: float,
    camera: Camera = Camera(),
    size: float | None = None,
) -> WorldState:
    """Put the distractor ``distance`` meters from the head along world ``bearing``."""
    size = size if size is not None else (world.distractor.size if world.distractor else 0.4)
    x = camera.position[0] + distance * math.sin(bearing)
    y = camera.position[1] + distance * math.cos(bearing)
    lim = world.arena_half_extent - size / 2.0
    x, y = min(max(x, -lim + 1e-6), lim - 1e-6), min(max(y, -lim + 1e-6), lim - 1e-6)
    return replace(world, distractor=Distractor((x, y), heading, speed, RED, size))
