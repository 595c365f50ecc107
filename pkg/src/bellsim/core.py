"""Domain types shared by every module: planar axes, outcomes, logical time,
measurement events, preparation states and the seeded random streams."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

TWO_PI = 2.0 * math.pi
GEOMETRY_TOL = 1e-12

# Tick layout for a pair: creation at 0, first measurement at 1, second at 2.
CREATION_TICK = 0
FIRST_TICK = 1
SECOND_TICK = 2
PAIR_TM = SECOND_TICK


class UsageError(ValueError):
    """Raised when an operation is called outside its preconditions."""


def normalize_angle(angle: float) -> float:
    if not math.isfinite(angle):
        raise UsageError(f"axis angle must be finite, got {angle!r}")
    a = math.fmod(angle, TWO_PI)
    if a < 0.0:
        a += TWO_PI
    # fmod can land exactly on 2*pi after the correction above
    if a >= TWO_PI or TWO_PI - a <= GEOMETRY_TOL:
        a = 0.0
    return a


def _angle_gap(a: float, b: float) -> float:
    """Smallest absolute difference between two normalized angles."""
    d = abs(a - b) % TWO_PI
    return min(d, TWO_PI - d)


@dataclass(frozen=True, eq=False)
class Axis:
    """Oriented direction in the measurement plane, stored as an angle in [0, 2pi)."""

    angle: float

    def __post_init__(self):
        object.__setattr__(self, "angle", normalize_angle(float(self.angle)))

    def reverse(self) -> Axis:
        return Axis(self.angle + math.pi)

    def __eq__(self, other):
        if not isinstance(other, Axis):
            return NotImplemented
        return _angle_gap(self.angle, other.angle) <= GEOMETRY_TOL

    def __hash__(self):
        # equality is tolerance based; any angle bucketing would split equal axes
        return hash(Axis)

    def __repr__(self):
        return f"Axis({self.angle!r})"


def axis_dot(a: Axis, b: Axis) -> float:
    """u(a).u(b) for planar unit vectors; exact +-1 for equal or reversed axes."""
    if a == b:
        return 1.0
    if a == b.reverse():
        return -1.0
    return math.cos(a.angle - b.angle)


def dot_angles(a: float, b: float) -> float:
    return axis_dot(Axis(a), Axis(b))


class Outcome(enum.IntEnum):
    UP = 1
    DOWN = -1

    @classmethod
    def of(cls, value) -> Outcome:
        v = int(value)
        if v not in (1, -1) or v != value:
            raise UsageError(f"spin outcome must be +1 or -1, got {value!r}")
        return cls(v)


class Side(enum.Enum):
    P = "p"
    PP = "p'"

    @property
    def code(self) -> int:
        return 0 if self is Side.P else 1

    @classmethod
    def from_code(cls, code: int) -> Side:
        return cls.P if int(code) == 0 else cls.PP

    @property
    def partner(self) -> Side:
        return Side.PP if self is Side.P else Side.P


class TimeRole(enum.Enum):
    CREATION = "creation"
    FIRST_MEASURE = "first_measure"
    LATER = "later"


@dataclass(frozen=True, order=True)
class LogicalTime:
    tick: int
    role: TimeRole = field(default=TimeRole.LATER, compare=False)

    def __post_init__(self):
        if self.tick < 0:
            raise UsageError(f"ticks are non-negative, got {self.tick}")


def pair_times_valid(t00: int, t0: int, t0p: int, tm: int = PAIR_TM) -> bool:
    """Standing-assumption ordering t00 < T0 <= T00 <= TM for one pair."""
    T0 = min(t0, t0p)
    T00 = max(t0, t0p)
    return t00 < T0 <= T00 <= tm


@dataclass(frozen=True)
class MeasurementEvent:
    pair_index: int
    side: Side
    axis: Axis
    time: LogicalTime
    outcome: Outcome
    counterfactual: bool = False


class PrepOrigin(enum.Enum):
    DIRECT_MEASUREMENT = "direct_measurement"
    PARTNER_COLLAPSE = "partner_collapse"
    SOURCE = "source"


@dataclass(frozen=True)
class PreparationState:
    """Spin prepared along ``prepared_axis`` with ``sign`` over ticks
    [valid_from, valid_until).  ``valid_until=None`` means still open.

    A state (a, -1) is physically the state (reverse(a), +1); ``state_axis``
    gives that oriented direction and is what the No-p-L compares.
    """

    prepared_axis: Optional[Axis]
    valid_from: int
    valid_until: Optional[int] = None
    origin: PrepOrigin = PrepOrigin.DIRECT_MEASUREMENT
    sign: int = 1

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise UsageError("preparation sign must be +1 or -1")
        if self.valid_until is not None and self.valid_until <= self.valid_from:
            raise UsageError("empty preparation interval")

    @property
    def state_axis(self) -> Optional[Axis]:
        if self.prepared_axis is None:
            return None
        return self.prepared_axis if self.sign > 0 else self.prepared_axis.reverse()

    def overlaps(self, other: PreparationState) -> bool:
        end_a = math.inf if self.valid_until is None else self.valid_until
        end_b = math.inf if other.valid_until is None else other.valid_until
        return self.valid_from < end_b and other.valid_from < end_a

    def active_at(self, tick: int) -> bool:
        return self.valid_from <= tick and (self.valid_until is None or tick < self.valid_until)

    def predicted_correlation(self, probe: Axis) -> float:
        """<s(prep), s(probe)> for the next interaction-free measurement."""
        if self.prepared_axis is None:
            return 0.0
        return axis_dot(self.prepared_axis, probe)


class Particle:
    """Tracks one particle's preparation history.

    Each new preparation closes the previous one at its start tick, so the
    history can never hold two simultaneous preparations.
    """

    def __init__(self, created_at: int = CREATION_TICK):
        self._history: list[PreparationState] = [
            PreparationState(None, created_at, None, PrepOrigin.SOURCE)
        ]

    @property
    def current(self) -> PreparationState:
        return self._history[-1]

    @property
    def history(self) -> list[PreparationState]:
        return list(self._history)

    def prepare(self, axis: Axis, sign: int, tick: int, origin: PrepOrigin) -> PreparationState:
        cur = self._history[-1]
        if tick < cur.valid_from:
            raise UsageError(f"tick {tick} precedes current preparation at {cur.valid_from}")
        if tick == cur.valid_from:
            # replaced at the same instant: the old state never held
            self._history.pop()
        else:
            self._history[-1] = PreparationState(
                cur.prepared_axis, cur.valid_from, tick, cur.origin, cur.sign
            )
        state = PreparationState(axis, tick, None, origin, sign)
        self._history.append(state)
        return state


def rng_stream(seed: int, stream_id: int) -> np.random.Generator:
    """Independent, replayable PCG64 stream for ``(seed, stream_id)``."""
    mask = (1 << 64) - 1
    ss = np.random.SeedSequence(int(seed) & mask, spawn_key=(int(stream_id) & mask,))
    return np.random.Generator(np.random.PCG64(ss))


def stream_key(purpose: int, batch: int, chunk: int = 0) -> int:
    """Pack (purpose, batch, chunk) into one 64-bit stream id."""
    if not (0 <= purpose < 1 << 16 and 0 <= batch < 1 << 24 and 0 <= chunk < 1 << 24):
        raise UsageError("stream key component out of range")
    return (purpose << 48) | (batch << 24) | chunk


def as_axes(angles: Iterable[float]) -> list[Axis]:
    return [a if isinstance(a, Axis) else Axis(a) for a in angles]
