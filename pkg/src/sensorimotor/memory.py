"""Sensory, working and procedural memory.

Procedural memory is a map from a 16-bit state id to a Q-value row (a
schema). New rows are created with small random values (assimilation) and
updated with one-step Q-learning (accommodation). Rows survive from one
substage to the next; when the action repertoire grows, new slots are
appended.
"""

from __future__ import annotations

import csv
import io
import math
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .attention import FeatureMap
from .world import Observation

POOL = 4
STATE_BITS = 16
BINARIZE_FLOOR = 0.01
Q_INIT_HIGH = 0.1

MAGIC = b"PMEM"
FORMAT_VERSION = 1


class ProceduralMemoryError(Exception):
    """Base class for procedural-memory errors."""


class DuplicateStateError(ProceduralMemoryError):
    pass


class MissingSchemaError(ProceduralMemoryError):
    pass


class ShrinkError(ProceduralMemoryError):
    pass


class MalformedFileError(ProceduralMemoryError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


@dataclass
class SensoryMemory:
    latest: Observation | None = None
    capacity: int = 1

    def store(self, obs: Observation) -> None:
        self.latest = obs


def pool_salience(sal: np.ndarray) -> np.ndarray:
    return sal.reshape(POOL, sal.shape[0] // POOL, POOL, sal.shape[1] // POOL).max(axis=(1, 3))


def encode_state(sal: FeatureMap | np.ndarray, floor: float = BINARIZE_FLOOR, relative: bool = True) -> int:
    """Max-pool 16x16 -> 4x4, keep cells above both the pooled mean and ``floor``, pack row-major.

    Bit ``i`` is pooled cell ``divmod(i, 4)``. ``relative=False`` drops the
    mean test and keeps only the absolute floor.
    """
    cells = sal.cells if isinstance(sal, FeatureMap) else sal
    pooled = pool_salience(cells).ravel()
    active = pooled > floor
    if relative:
        # correctly rounded mean, so a constant map never sits above its own mean
        active &= pooled > math.fsum(pooled) / STATE_BITS
    return int(np.dot(active, 1 << np.arange(STATE_BITS)))


def decode_state(state: int) -> np.ndarray:
    """4x4 boolean grid of a state id."""
    return ((state >> np.arange(STATE_BITS)) & 1).astype(bool).reshape(POOL, POOL)


@dataclass
class WorkingMemory:
    state: int | None = None
    salience: FeatureMap | None = None

    def update(self, sal: FeatureMap) -> int:
        self.salience = sal
        self.state = encode_state(sal)
        return self.state


@dataclass
class Schema:
    state: int
    q: np.ndarray
    created_episode: int = 0
    visit_count: int = 0

    def __eq__(self, other):
        if not isinstance(other, Schema):
            return NotImplemented
        return (
            self.state == other.state
            and self.created_episode == other.created_episode
            and self.visit_count == other.visit_count
            and np.array_equal(self.q, other.q)
        )


@dataclass
class ProceduralMemory:
    action_count: int
    schemas: dict[int, Schema] = field(default_factory=dict)
    action_set_version: str = ""

    def __post_init__(self):
        if not self.action_set_version:
            self.action_set_version = f"A{self.action_count}"

    def __len__(self) -> int:
        return len(self.schemas)

    def __contains__(self, state: int) -> bool:
        return state in self.schemas

    def __eq__(self, other):
        if not isinstance(other, ProceduralMemory):
            return NotImplemented
        return (
            self.action_count == other.action_count
            and self.action_set_version == other.action_set_version
            and self.schemas.keys() == other.schemas.keys()
            and all(self.schemas[k] == other.schemas[k] for k in self.schemas)
        )


def recall(mem: ProceduralMemory, state: int) -> Schema | None:
    return mem.schemas.get(state)


def assimilate(mem: ProceduralMemory, state: int, rng: np.random.Generator, episode: int = 0) -> Schema:
    """Create a schema for an unseen state with q ~ U[0, 0.1)."""
    if state in mem.schemas:
        raise DuplicateStateError(f"state {state} already has a schema")
    schema = Schema(state, rng.uniform(0.0, Q_INIT_HIGH, size=mem.action_count), episode, 0)
    mem.schemas[state] = schema
    return schema


def accommodate(
    mem: ProceduralMemory,
    state: int,
    action: int,
    reward: float,
    next_state: int | None,
    alpha: float,
    gamma: float,
) -> float:
    """One-step Q-learning on action index ``action`` (0-based); ``next_state=None`` is terminal."""
    schema = mem.schemas.get(state)
    if schema is None:
        raise MissingSchemaError(f"no schema for state {state}")
    if next_state is None:
        target = reward
    else:
        nxt = mem.schemas.get(next_state)
        if nxt is None:
            raise MissingSchemaError(f"no schema for next state {next_state}")
        target = reward + gamma * float(nxt.q.max())
    q = schema.q
    q[action] += alpha * (target - q[action])
    schema.visit_count += 1
    return float(q[action])


def transfer(prior: ProceduralMemory, new_action_count: int, rng: np.random.Generator) -> ProceduralMemory:
    """Deep copy ``prior`` into a repertoire of ``new_action_count`` actions.

    Shared slots are copied; appended slots are drawn from U[0, 0.1) in
    ascending state order so the result depends only on ``rng``.
    """
    if new_action_count < prior.action_count:
        raise ShrinkError(f"cannot shrink {prior.action_count} actions to {new_action_count}")
    extra = new_action_count - prior.action_count
    out = ProceduralMemory(new_action_count, action_set_version=f"A{new_action_count}")
    for state in sorted(prior.schemas):
        s = prior.schemas[state]
        q = s.q.copy()
        if extra:
            q = np.concatenate([q, rng.uniform(0.0, Q_INIT_HIGH, size=extra)])
        out.schemas[state] = Schema(state, q, s.created_episode, s.visit_count)
    return out


# --------------------------------------------------------------------------- persistence

_HEADER = struct.Struct("<4sHHH")  # magic, version, action_count, version-tag length
_COUNT = struct.Struct("<I")
_ROW = struct.Struct("<HiI")  # state, created_episode, visit_count
_CRC = struct.Struct("<I")


def save(mem: ProceduralMemory) -> bytes:
    tag = mem.action_set_version.encode("utf-8")
    body = io.BytesIO()
    body.write(_HEADER.pack(MAGIC, FORMAT_VERSION, mem.action_count, len(tag)))
    body.write(tag)
    body.write(_COUNT.pack(len(mem.schemas)))
    for state in sorted(mem.schemas):
        s = mem.schemas[state]
        body.write(_ROW.pack(s.state, s.created_episode, s.visit_count))
        body.write(np.asarray(s.q, dtype="<f8").tobytes())
    payload = body.getvalue()
    return payload + _CRC.pack(zlib.crc32(payload))


def load(data: bytes) -> ProceduralMemory:
    """Parse a .pmem blob; any inconsistency raises :class:`MalformedFileError`."""
    view = memoryview(data)
    pos = 0

    def take(n: int, what: str) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise MalformedFileError(f"truncated while reading {what}", pos)
        chunk = view[pos : pos + n]
        pos += n
        return chunk

    magic, version, action_count, tag_len = _HEADER.unpack(take(_HEADER.size, "header"))
    if magic != MAGIC:
        raise MalformedFileError(f"bad magic {bytes(magic)!r}", 0)
    if version != FORMAT_VERSION:
        raise MalformedFileError(f"unsupported format version {version}", 4)
    tag = bytes(take(tag_len, "action-set tag")).decode("utf-8")
    (count,) = _COUNT.unpack(take(_COUNT.size, "schema count"))
    schemas: dict[int, Schema] = {}
    for i in range(count):
        row_at = pos
        state, created, visits = _ROW.unpack(take(_ROW.size, f"schema {i}"))
        q = np.frombuffer(take(8 * action_count, f"q row of schema {i}"), dtype="<f8").astype(np.float64)
        if state in schemas:
            raise MalformedFileError(f"duplicate state {state}", row_at)
        schemas[state] = Schema(state, q, created, visits)
    crc_at = pos
    (crc,) = _CRC.unpack(take(_CRC.size, "checksum"))
    if crc != zlib.crc32(view[:crc_at]):
        raise MalformedFileError("checksum mismatch", crc_at)
    if pos != len(view):
        raise MalformedFileError("trailing bytes after checksum", pos)
    return ProceduralMemory(action_count, schemas, tag)


def to_csv(mem: ProceduralMemory, n_columns: int = 17) -> str:
    """Readable export: state_id, q_0..q_{n-1}, created_episode, visit_count (missing slots blank)."""
    n = max(n_columns, mem.action_count)
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["state_id", *[f"q_{i}" for i in range(n)], "created_episode", "visit_count"])
    for state in sorted(mem.schemas):
        s = mem.schemas[state]
        qs = [repr(float(v)) for v in s.q] + [""] * (n - len(s.q))
        w.writerow([state, *qs, s.created_episode, s.visit_count])
    return out.getvalue()
