"""Augmented-QM models: a local deterministic hidden-variable model,
counterfactual (MCD) tables and the exotic before/after valuations."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import (
    FIRST_TICK,
    SECOND_TICK,
    TWO_PI,
    Axis,
    Outcome,
    Side,
    UsageError,
    as_axes,
    axis_dot,
    normalize_angle,
    rng_stream,
    stream_key,
)
from .events import EventLog
from .quantum import (
    CHUNK_SIZE,
    PURPOSE_COUNTERFACTUAL,
    PURPOSE_ORDER,
    PURPOSE_OUTCOMES,
    Order,
    SingletBatch,
    SingletPair,
    first_sides,
    chunked,
    fair_coin,
    malus_draw,
    sample_singlets,
)

MODELS = ("qm", "lhv_sign", "mcd_lhv", "mcd_qm_collapse")
MCD_MODES = ("qm_collapse", "lhv")


@dataclass(frozen=True)
class HiddenState:
    lam: float

    def __post_init__(self):
        object.__setattr__(self, "lam", normalize_angle(float(self.lam)))


def draw_hidden(n: int, stream: np.random.Generator) -> np.ndarray:
    return stream.random(n) * TWO_PI


def lhv_outcomes(lams: np.ndarray, axis: Axis, side: Side) -> np.ndarray:
    # cos == 0 is a measure-zero tie, resolved to +1
    s = np.where(np.cos(axis.angle - np.asarray(lams, dtype=np.float64)) >= 0.0, 1, -1).astype(np.int8)
    return s if side is Side.P else -s


def lhv_outcome(hidden: HiddenState, axis: Axis, side: Side) -> Outcome:
    """Deterministic local response: depends only on (lambda, own axis, side)."""
    return Outcome(int(lhv_outcomes(np.array([hidden.lam]), axis, side)[0]))


def lhv_correlation(theta: float) -> float:
    """Closed-form E[product] of the sign model at angle gap ``theta``."""
    gap = abs(math.remainder(theta, TWO_PI))
    return -1.0 + 2.0 * gap / math.pi


def lhv_correlation_grid(theta: float, points: int = 1_000_000) -> float:
    """Midpoint-rule average of the sign-model product over lambda."""
    lams = (np.arange(points) + 0.5) * (TWO_PI / points)
    a, b = Axis(0.0), Axis(theta)
    prod = lhv_outcomes(lams, a, Side.P).astype(np.int64) * lhv_outcomes(lams, b, Side.PP)
    return float(prod.sum()) / points


def sample_lhv_pairs(
    n: int,
    axis_p: Axis,
    axis_pp: Axis,
    stream: np.random.Generator,
    order: Order = Order.P_FIRST,
    order_stream: Optional[np.random.Generator] = None,
    start_index: int = 0,
) -> SingletBatch:
    lams = draw_hidden(n, stream)
    return SingletBatch(
        pair_index=np.arange(start_index, start_index + n, dtype=np.int64),
        axis_p=axis_p,
        axis_pp=axis_pp,
        outcome_p=lhv_outcomes(lams, axis_p, Side.P),
        outcome_pp=lhv_outcomes(lams, axis_pp, Side.PP),
        p_first=first_sides(n, order, order_stream),
        model="lhv_sign",
        hidden=lams,
    )


def generate_lhv_batch(
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
    if n < 1:
        raise UsageError("n must be at least 1")

    def make(j, start, size):
        return sample_lhv_pairs(
            size, axis_p, axis_pp,
            rng_stream(seed, stream_key(PURPOSE_OUTCOMES, batch_id, j)),
            order,
            rng_stream(seed, stream_key(PURPOSE_ORDER, batch_id, j)),
            start_index=start_index + start,
        )

    return SingletBatch.concat(chunked(n, make, workers, chunk_size))


@dataclass(frozen=True)
class CounterfactualRecord:
    pair_index: int
    axis_set: tuple[Axis, ...]
    values_p: tuple[Outcome, ...]
    values_pp: tuple[Outcome, ...]
    actual_axis_p: Axis
    actual_axis_pp: Axis
    enforce_conservation: bool

    def value(self, side: Side, axis: Axis) -> Outcome:
        vals = self.values_p if side is Side.P else self.values_pp
        return vals[_axis_position(self.axis_set, axis)]

    def conservation_holds(self) -> bool:
        return all(x * y == -1 for x, y in zip(self.values_p, self.values_pp))


def _axis_position(axis_set: Sequence[Axis], axis: Axis) -> int:
    for k, a in enumerate(axis_set):
        if a == axis:
            return k
    raise UsageError(f"{axis!r} is not in the declared axis set")


def _check_axis_set(axis_set: Sequence[Axis], actual_p: Axis, actual_pp: Axis) -> tuple[Axis, ...]:
    axis_set = tuple(as_axes(axis_set))
    if not axis_set:
        raise UsageError("axis set is empty")
    for i, a in enumerate(axis_set):
        if any(a == b for b in axis_set[:i]):
            raise UsageError(f"axis set repeats {a!r}")
    if not any(a == actual_p for a in axis_set) or not any(a == actual_pp for a in axis_set):
        raise UsageError("axis set must contain the actually measured axes")
    return axis_set


@dataclass
class CounterfactualTable:
    """Columnar MCD table: one row per pair, one cell per (side, axis)."""

    pair_index: np.ndarray
    axis_set: tuple[Axis, ...]
    values_p: np.ndarray
    values_pp: np.ndarray
    actual_p: int
    actual_pp: int
    p_first: np.ndarray
    mode: str
    enforce_conservation: bool

    def __len__(self):
        return int(self.pair_index.size)

    @property
    def model(self) -> str:
        return "mcd_lhv" if self.mode == "lhv" else "mcd_qm_collapse"

    def record(self, i: int) -> CounterfactualRecord:
        return CounterfactualRecord(
            pair_index=int(self.pair_index[i]),
            axis_set=self.axis_set,
            values_p=tuple(Outcome(int(v)) for v in self.values_p[i]),
            values_pp=tuple(Outcome(int(v)) for v in self.values_pp[i]),
            actual_axis_p=self.axis_set[self.actual_p],
            actual_axis_pp=self.axis_set[self.actual_pp],
            enforce_conservation=self.enforce_conservation,
        )

    def records(self):
        return (self.record(i) for i in range(len(self)))

    def to_events(self) -> EventLog:
        n, k = self.values_p.shape
        tick_p = np.where(self.p_first, FIRST_TICK, SECOND_TICK)
        tick_pp = np.where(self.p_first, SECOND_TICK, FIRST_TICK)
        idx, side, angle, tick, out, cf = [], [], [], [], [], []
        for code, vals, ticks, actual in ((0, self.values_p, tick_p, self.actual_p),
                                          (1, self.values_pp, tick_pp, self.actual_pp)):
            for j, ax in enumerate(self.axis_set):
                idx.append(self.pair_index)
                side.append(np.full(n, code, np.int8))
                angle.append(np.full(n, ax.angle))
                # an MCD value is taken jointly with that side's actual measurement
                tick.append(ticks)
                out.append(vals[:, j])
                cf.append(np.full(n, j != actual))
        return EventLog(*(np.concatenate(c) for c in (idx, side, angle, tick, out, cf)),
                        model=self.model).sorted()


def _collapse_cells(actual_axis: Axis, actual: np.ndarray, axis_set, stream) -> np.ndarray:
    """Fill every cell by Malus sampling from the final preparation (axis, outcome)."""
    n = actual.size
    cells = np.empty((n, len(axis_set)), dtype=np.int8)
    for j, ax in enumerate(axis_set):
        if ax == actual_axis:
            cells[:, j] = actual
        else:
            cells[:, j] = malus_draw(actual, axis_dot(actual_axis, ax), stream.random(n))
    return cells


def mcd_table(
    n: int,
    axis_p: Axis,
    axis_pp: Axis,
    axis_set: Sequence[Axis | float],
    mode: str,
    stream: np.random.Generator,
    order: Order = Order.P_FIRST,
    order_stream: Optional[np.random.Generator] = None,
    start_index: int = 0,
) -> CounterfactualTable:
    """``n`` counterfactual rows; actual measurements are p along ``axis_p``
    and p' along ``axis_pp``."""
    if mode not in MCD_MODES:
        raise UsageError(f"unknown MCD mode {mode!r}")
    axes = _check_axis_set(axis_set, axis_p, axis_pp)
    jp, jpp = _axis_position(axes, axis_p), _axis_position(axes, axis_pp)
    if mode == "lhv":
        lams = draw_hidden(n, stream)
        vp = np.stack([lhv_outcomes(lams, a, Side.P) for a in axes], axis=1)
        vpp = np.stack([lhv_outcomes(lams, a, Side.PP) for a in axes], axis=1)
        p_first = first_sides(n, order, order_stream)
        return CounterfactualTable(
            np.arange(start_index, start_index + n, dtype=np.int64),
            axes, vp, vpp, jp, jpp, p_first, mode, True,
        )
    batch = sample_singlets(n, axis_p, axis_pp, stream, order, order_stream, start_index)
    vp = _collapse_cells(axis_p, batch.outcome_p, axes, stream)
    vpp = _collapse_cells(axis_pp, batch.outcome_pp, axes, stream)
    return CounterfactualTable(batch.pair_index, axes, vp, vpp, jp, jpp, batch.p_first, mode, False)


def generate_mcd_table(
    n: int,
    axis_p: Axis,
    axis_pp: Axis,
    axis_set: Sequence[Axis | float],
    mode: str,
    seed: int,
    batch_id: int = 0,
    order: Order = Order.P_FIRST,
    start_index: int = 0,
    workers: int = 1,
    chunk_size: int = CHUNK_SIZE,
) -> CounterfactualTable:
    if n < 1:
        raise UsageError("n must be at least 1")

    def make(j, start, size):
        return mcd_table(
            size, axis_p, axis_pp, axis_set, mode,
            rng_stream(seed, stream_key(PURPOSE_COUNTERFACTUAL, batch_id, j)),
            order,
            rng_stream(seed, stream_key(PURPOSE_ORDER, batch_id, j)),
            start_index=start_index + start,
        )

    parts = chunked(n, make, workers, chunk_size)
    first = parts[0]
    return CounterfactualTable(
        np.concatenate([t.pair_index for t in parts]),
        first.axis_set,
        np.concatenate([t.values_p for t in parts]),
        np.concatenate([t.values_pp for t in parts]),
        first.actual_p,
        first.actual_pp,
        np.concatenate([t.p_first for t in parts]),
        first.mode,
        first.enforce_conservation,
    )


def mcd_fill(
    source: SingletPair | HiddenState,
    axis_set: Sequence[Axis | float],
    mode: str,
    stream: Optional[np.random.Generator] = None,
    actual: Optional[tuple[Axis, Axis]] = None,
    pair_index: int = 0,
) -> CounterfactualRecord:
    """Counterfactual row for one pair.

    ``lhv`` mode needs a HiddenState plus the actual axes; ``qm_collapse``
    needs a measured SingletPair and a stream for the unmeasured cells.
    """
    if mode == "lhv":
        if not isinstance(source, HiddenState):
            raise UsageError("lhv mode fills rows from a HiddenState")
        if actual is None:
            raise UsageError("lhv mode needs the actual axes (axis_p, axis_pp)")
        axes = _check_axis_set(axis_set, *actual)
        lam = np.array([source.lam])
        return CounterfactualRecord(
            pair_index,
            axes,
            tuple(Outcome(int(lhv_outcomes(lam, a, Side.P)[0])) for a in axes),
            tuple(Outcome(int(lhv_outcomes(lam, a, Side.PP)[0])) for a in axes),
            actual[0],
            actual[1],
            True,
        )
    if mode == "qm_collapse":
        if not isinstance(source, SingletPair):
            raise UsageError("qm_collapse mode fills rows from a measured SingletPair")
        if stream is None:
            raise UsageError("qm_collapse mode needs a random stream")
        axes = _check_axis_set(axis_set, source.axis_p, source.axis_pp)
        cp = _collapse_cells(source.axis_p, np.array([source.outcome_p], np.int8), axes, stream)[0]
        cpp = _collapse_cells(source.axis_pp, np.array([source.outcome_pp], np.int8), axes, stream)[0]
        return CounterfactualRecord(
            source.pair_index,
            axes,
            tuple(Outcome(int(v)) for v in cp),
            tuple(Outcome(int(v)) for v in cpp),
            source.axis_p,
            source.axis_pp,
            False,
        )
    raise UsageError(f"unknown MCD mode {mode!r}")


@dataclass(frozen=True)
class ExoticValuation:
    pair_index: int
    context_axis: Axis
    target_axis: Axis
    before: Outcome
    after: Outcome


def exotic_batch(
    batch: SingletBatch, side: Side, target: Axis, stream: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """(before, after) exotic values along ``target`` for every pair in ``batch``.

    after: Malus draw from the post-measurement preparation (own axis, own outcome).
    before: Malus draw from the preparation held just before the measurement,
    i.e. the partner-collapse state for the second-measured side, else a fair coin.
    """
    own_axis = batch.axis_p if side is Side.P else batch.axis_pp
    if own_axis == target:
        raise UsageError("exotic values are only defined for a target axis other than the measured one")
    partner_axis = batch.axis_pp if side is Side.P else batch.axis_p
    own = batch.outcome_p if side is Side.P else batch.outcome_pp
    partner = batch.outcome_pp if side is Side.P else batch.outcome_p
    own_first = batch.p_first if side is Side.P else ~batch.p_first
    n = len(batch)
    after = malus_draw(own, axis_dot(own_axis, target), stream.random(n))
    from_partner = malus_draw(partner, axis_dot(partner_axis.reverse(), target), stream.random(n))
    coin = fair_coin(stream.random(n))
    before = np.where(own_first, coin, from_partner).astype(np.int8)
    return before, after


def exotic_values(
    pair: SingletPair,
    context_axis: Axis,
    target_axis: Axis,
    stream: np.random.Generator,
    side: Side = Side.P,
) -> ExoticValuation:
    if pair.axis(side) != context_axis:
        raise UsageError("the particle was not measured along the context axis")
    one = SingletBatch(
        np.array([pair.pair_index]), pair.axis_p, pair.axis_pp,
        np.array([pair.outcome_p], np.int8), np.array([pair.outcome_pp], np.int8),
        np.array([pair.first_measured is Side.P]),
    )
    before, after = exotic_batch(one, side, target_axis, stream)
    return ExoticValuation(pair.pair_index, context_axis, target_axis, Outcome(int(before[0])), Outcome(int(after[0])))
