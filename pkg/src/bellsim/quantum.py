"""Standard quantum statistics: sequential single-particle measurements and
singlet pairs generated by partner collapse."""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .core import (
    FIRST_TICK,
    SECOND_TICK,
    Axis,
    LogicalTime,
    Outcome,
    Side,
    TimeRole,
    UsageError,
    as_axes,
    axis_dot,
    rng_stream,
    stream_key,
)
from .events import EventLog

CHUNK_SIZE = 1 << 16

# stream purposes, packed into the stream id by ``stream_key``
PURPOSE_OUTCOMES = 1
PURPOSE_ORDER = 2
PURPOSE_COUNTERFACTUAL = 3


class Order(enum.Enum):
    P_FIRST = "p-first"
    PP_FIRST = "pp-first"
    RANDOM = "random"


def malus_draw(prep_sign, dot: float, u: np.ndarray) -> np.ndarray:
    """+1 with probability (1 + sign*dot)/2, else -1."""
    p_up = 0.5 * (1.0 + np.asarray(prep_sign, dtype=np.float64) * dot)
    return np.where(u < p_up, 1, -1).astype(np.int8)


def fair_coin(u: np.ndarray) -> np.ndarray:
    return np.where(u < 0.5, 1, -1).astype(np.int8)


@dataclass(frozen=True)
class SingleParticleChain:
    axes: tuple[Axis, ...]
    outcomes: tuple[Outcome, ...]
    times: tuple[LogicalTime, ...]

    def __post_init__(self):
        if not (len(self.axes) == len(self.outcomes) == len(self.times)):
            raise UsageError("chain fields must have equal length")
        ticks = [t.tick for t in self.times]
        if any(b <= a for a, b in zip(ticks, ticks[1:])):
            raise UsageError("chain times must be strictly increasing")


def sample_chains(
    n: int,
    axes: Sequence[Axis | float],
    stream: np.random.Generator,
    initial_prep: Optional[tuple[Axis, int]] = None,
) -> np.ndarray:
    """Outcomes of ``n`` independent measurement chains, shape (n, len(axes)).

    Each measurement re-prepares the particle along its axis with the
    observed sign; earlier preparations play no further role.
    """
    axes = as_axes(axes)
    if not axes:
        raise UsageError("a measurement chain needs at least one axis")
    if n < 0:
        raise UsageError("n must be non-negative")
    out = np.empty((n, len(axes)), dtype=np.int8)
    u = stream.random(n)
    if initial_prep is None:
        out[:, 0] = fair_coin(u)
    else:
        prep_axis, prep_sign = initial_prep
        out[:, 0] = malus_draw(int(Outcome.of(prep_sign)), axis_dot(prep_axis, axes[0]), u)
    for k in range(1, len(axes)):
        out[:, k] = malus_draw(out[:, k - 1], axis_dot(axes[k - 1], axes[k]), stream.random(n))
    return out


def measure_chain(
    initial_prep: Optional[tuple[Axis, int]],
    axes: Sequence[Axis | float],
    stream: np.random.Generator,
) -> SingleParticleChain:
    axes = as_axes(axes)
    row = sample_chains(1, axes, stream, initial_prep)[0]
    # tick 0 is the source / initial preparation
    times = tuple(
        LogicalTime(1 + k, TimeRole.FIRST_MEASURE if k == 0 else TimeRole.LATER)
        for k in range(len(axes))
    )
    return SingleParticleChain(tuple(axes), tuple(Outcome(int(v)) for v in row), times)


def chain_two_step_correlation(a0: Axis, a1: Axis, a2: Axis) -> float:
    """Exact E[s(tau0) s(tau2)] for the chain a0 -> a1 -> a2."""
    return axis_dot(a0, a1) * axis_dot(a1, a2)


def erase_check(
    prep_axis: Axis, erase_axis: Axis, probe_axis: Axis, stream: np.random.Generator, n: int
) -> float:
    """Empirical E[s(tau0) s(tau2)] over ``n`` chains prep -> erase -> probe."""
    if n < 1:
        raise UsageError("n must be at least 1")
    s = sample_chains(n, [prep_axis, erase_axis, probe_axis], stream)
    return float(np.sum(s[:, 0].astype(np.int64) * s[:, 2])) / n


@dataclass(frozen=True)
class SingletPair:
    pair_index: int
    axis_p: Axis
    axis_pp: Axis
    time_p: LogicalTime
    time_pp: LogicalTime
    outcome_p: Outcome
    outcome_pp: Outcome
    first_measured: Side

    def outcome(self, side: Side) -> Outcome:
        return self.outcome_p if side is Side.P else self.outcome_pp

    def axis(self, side: Side) -> Axis:
        return self.axis_p if side is Side.P else self.axis_pp

    def time(self, side: Side) -> LogicalTime:
        return self.time_p if side is Side.P else self.time_pp


@dataclass
class SingletBatch:
    """Columnar batch of pairs sharing one setting (axis_p, axis_pp)."""

    pair_index: np.ndarray
    axis_p: Axis
    axis_pp: Axis
    outcome_p: np.ndarray
    outcome_pp: np.ndarray
    p_first: np.ndarray
    model: str = "qm"
    hidden: Optional[np.ndarray] = None

    def __len__(self):
        return int(self.pair_index.size)

    @property
    def tick_p(self) -> np.ndarray:
        return np.where(self.p_first, FIRST_TICK, SECOND_TICK).astype(np.int64)

    @property
    def tick_pp(self) -> np.ndarray:
        return np.where(self.p_first, SECOND_TICK, FIRST_TICK).astype(np.int64)

    def pair(self, i: int) -> SingletPair:
        first = bool(self.p_first[i])
        return SingletPair(
            pair_index=int(self.pair_index[i]),
            axis_p=self.axis_p,
            axis_pp=self.axis_pp,
            time_p=LogicalTime(int(self.tick_p[i]), TimeRole.FIRST_MEASURE if first else TimeRole.LATER),
            time_pp=LogicalTime(int(self.tick_pp[i]), TimeRole.LATER if first else TimeRole.FIRST_MEASURE),
            outcome_p=Outcome(int(self.outcome_p[i])),
            outcome_pp=Outcome(int(self.outcome_pp[i])),
            first_measured=Side.P if first else Side.PP,
        )

    def pairs(self):
        return (self.pair(i) for i in range(len(self)))

    def products(self) -> np.ndarray:
        return self.outcome_p.astype(np.int8) * self.outcome_pp

    def to_events(self) -> EventLog:
        n = len(self)
        return EventLog(
            np.concatenate([self.pair_index, self.pair_index]),
            np.concatenate([np.zeros(n, np.int8), np.ones(n, np.int8)]),
            np.concatenate([np.full(n, self.axis_p.angle), np.full(n, self.axis_pp.angle)]),
            np.concatenate([self.tick_p, self.tick_pp]),
            np.concatenate([self.outcome_p, self.outcome_pp]),
            np.zeros(2 * n, bool),
            model=self.model,
        ).sorted()

    @classmethod
    def concat(cls, parts: list[SingletBatch]) -> SingletBatch:
        first = parts[0]
        hidden = None
        if first.hidden is not None:
            hidden = np.concatenate([b.hidden for b in parts])
        return cls(
            np.concatenate([b.pair_index for b in parts]),
            first.axis_p,
            first.axis_pp,
            np.concatenate([b.outcome_p for b in parts]),
            np.concatenate([b.outcome_pp for b in parts]),
            np.concatenate([b.p_first for b in parts]),
            first.model,
            hidden,
        )


def first_sides(n: int, order: Order, order_stream: Optional[np.random.Generator]) -> np.ndarray:
    if order is Order.P_FIRST:
        return np.ones(n, bool)
    if order is Order.PP_FIRST:
        return np.zeros(n, bool)
    if order_stream is None:
        raise UsageError("random order needs its own stream")
    return order_stream.random(n) < 0.5


def sample_singlets(
    n: int,
    axis_p: Axis,
    axis_pp: Axis,
    stream: np.random.Generator,
    order: Order = Order.P_FIRST,
    order_stream: Optional[np.random.Generator] = None,
    start_index: int = 0,
) -> SingletBatch:
    """Sequential-collapse sampling of ``n`` singlet pairs.

    The side measured first gets a fair coin; its partner is then prepared
    along the reversed first axis with that sign and measured by Malus' law.
    """
    p_first = first_sides(n, order, order_stream)
    first = fair_coin(stream.random(n))
    # partner prepared along reverse(first axis): dot flips sign, symmetric in the two axes
    second = malus_draw(first, -axis_dot(axis_p, axis_pp), stream.random(n))
    return SingletBatch(
        pair_index=np.arange(start_index, start_index + n, dtype=np.int64),
        axis_p=axis_p,
        axis_pp=axis_pp,
        outcome_p=np.where(p_first, first, second).astype(np.int8),
        outcome_pp=np.where(p_first, second, first).astype(np.int8),
        p_first=p_first,
    )


def sample_singlets_joint(
    n: int, axis_p: Axis, axis_pp: Axis, stream: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Cross-check sampler drawing the 2x2 joint cell directly from
    P(s, s') = (1 - s s' dot) / 4."""
    d = axis_dot(axis_p, axis_pp)
    signs = np.array([(1, 1), (1, -1), (-1, 1), (-1, -1)], dtype=np.int8)
    probs = np.array([(1 - s * t * d) / 4.0 for s, t in signs])
    probs = np.clip(probs, 0.0, None)
    cells = stream.choice(4, size=n, p=probs / probs.sum())
    return signs[cells, 0], signs[cells, 1]


def joint_cell_probabilities(axis_p: Axis, axis_pp: Axis) -> dict[tuple[int, int], float]:
    d = axis_dot(axis_p, axis_pp)
    return {(s, t): (1 - s * t * d) / 4.0 for s in (1, -1) for t in (1, -1)}


def generate_singlet(
    pair_index: int,
    axis_p: Axis,
    axis_pp: Axis,
    order: Order,
    stream: np.random.Generator,
    order_stream: Optional[np.random.Generator] = None,
) -> SingletPair:
    if order is Order.RANDOM and order_stream is None:
        order_stream = stream
    batch = sample_singlets(1, axis_p, axis_pp, stream, order, order_stream, start_index=pair_index)
    return batch.pair(0)


def chunked(
    n: int,
    make_chunk: Callable[[int, int, int], SingletBatch],
    workers: int = 1,
    chunk_size: int = CHUNK_SIZE,
) -> list:
    """Run ``make_chunk(chunk_no, start, size)`` over fixed-size chunks.

    Chunk boundaries depend only on ``n`` and ``chunk_size``, so the result
    is the same for any worker count.
    """
    specs = [(j, s, min(chunk_size, n - s)) for j, s in enumerate(range(0, n, chunk_size))]
    if workers <= 1 or len(specs) <= 1:
        return [make_chunk(*spec) for spec in specs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda spec: make_chunk(*spec), specs))


def generate_batch(
    n: int,
    axis_p: Axis,
    axis_pp: Axis,
    seed: int,
    batch_id: int,
    order: Order = Order.P_FIRST,
    start_index: int = 0,
    workers: int = 1,
    chunk_size: int = CHUNK_SIZE,
) -> SingletBatch:
    """Seeded, chunk-parallel singlet generation for one setting pair."""
    if n < 1:
        raise UsageError("n must be at least 1")

    def make(j, start, size):
        return sample_singlets(
            size, axis_p, axis_pp,
            rng_stream(seed, stream_key(PURPOSE_OUTCOMES, batch_id, j)),
            order,
            rng_stream(seed, stream_key(PURPOSE_ORDER, batch_id, j)),
            start_index=start_index + start,
        )

    return SingletBatch.concat(chunked(n, make, workers, chunk_size))


__all__ = [
    "Order",
    "SingleParticleChain",
    "SingletBatch",
    "SingletPair",
    "chain_two_step_correlation",
    "erase_check",
    "generate_batch",
    "generate_singlet",
    "joint_cell_probabilities",
    "measure_chain",
    "sample_chains",
    "sample_singlets",
    "sample_singlets_joint",
]
