"""Columnar storage for measurement events and the CSV interchange format."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .core import (
    Axis,
    LogicalTime,
    MeasurementEvent,
    Outcome,
    Side,
    TimeRole,
    UsageError,
    normalize_angle,
)

CSV_HEADER = ("pair_index", "side", "axis_angle", "time_tick", "outcome", "counterfactual_flag")

_SIDE_TEXT = {0: "p", 1: "p'"}
_TEXT_SIDE = {"p": 0, "p'": 1}


def column_id(side: int, angle: float, tick: int | None = None) -> str:
    cid = f"{_SIDE_TEXT[int(side)]}@{float(angle)!r}"
    return cid if tick is None else f"{cid}#{int(tick)}"


@dataclass(frozen=True)
class Column:
    """All values recorded for one (side, axis) combination, sorted by pair index."""

    column_id: str
    side: int
    angle: float
    indices: np.ndarray
    outcomes: np.ndarray
    ticks: np.ndarray
    counterfactual: np.ndarray

    def __len__(self):
        return int(self.indices.size)

    @property
    def axis(self) -> Axis:
        return Axis(self.angle)

    def take(self, indices: np.ndarray) -> np.ndarray:
        """Positions of ``indices`` (which must all be present) in this column."""
        pos = np.searchsorted(self.indices, indices)
        if pos.size and (pos.max(initial=0) >= self.indices.size or np.any(self.indices[pos] != indices)):
            raise UsageError(f"column {self.column_id} lacks some requested pair indices")
        return pos


class EventLog:
    """Parallel arrays, one entry per measurement event (actual or counterfactual)."""

    def __init__(self, pair_index, side, angle, tick, outcome, counterfactual, model: str = "qm"):
        self.pair_index = np.asarray(pair_index, dtype=np.int64)
        self.side = np.asarray(side, dtype=np.int8)
        self.angle = np.asarray(angle, dtype=np.float64)
        self.tick = np.asarray(tick, dtype=np.int64)
        self.outcome = np.asarray(outcome, dtype=np.int8)
        self.counterfactual = np.asarray(counterfactual, dtype=bool)
        self.model = model
        n = self.pair_index.size
        for name in ("side", "angle", "tick", "outcome", "counterfactual"):
            if getattr(self, name).shape != (n,):
                raise UsageError(f"event array {name!r} has wrong shape")
        if n and not np.all(np.abs(self.outcome) == 1):
            raise UsageError("event outcomes must be +1 or -1")
        self._columns: dict[str, Column] | None = None

    def __len__(self):
        return int(self.pair_index.size)

    @classmethod
    def concat(cls, logs: list[EventLog]) -> EventLog:
        if not logs:
            raise UsageError("nothing to concatenate")
        models = {log.model for log in logs}
        if len(models) != 1:
            raise UsageError(f"cannot mix event logs from models {sorted(models)}")
        return cls(
            *(np.concatenate([getattr(log, f) for log in logs])
              for f in ("pair_index", "side", "angle", "tick", "outcome", "counterfactual")),
            model=logs[0].model,
        )

    def sorted(self) -> EventLog:
        order = np.lexsort((self.angle, self.counterfactual, self.tick, self.side, self.pair_index))
        return EventLog(
            self.pair_index[order], self.side[order], self.angle[order], self.tick[order],
            self.outcome[order], self.counterfactual[order], model=self.model,
        )

    def events(self) -> Iterator[MeasurementEvent]:
        for i in range(len(self)):
            tick = int(self.tick[i])
            yield MeasurementEvent(
                pair_index=int(self.pair_index[i]),
                side=Side.from_code(self.side[i]),
                axis=Axis(float(self.angle[i])),
                time=LogicalTime(tick, TimeRole.FIRST_MEASURE if tick == 1 else TimeRole.LATER),
                outcome=Outcome(int(self.outcome[i])),
                counterfactual=bool(self.counterfactual[i]),
            )

    def columns(self) -> dict[str, Column]:
        """Group events by (side, angle); chain logs that revisit an axis also key by tick."""
        if self._columns is None:
            self._columns = self._group(by_tick=False)
            if self._columns is None:
                self._columns = self._group(by_tick=True)
                if self._columns is None:
                    raise UsageError("event log repeats a (pair, side, axis, tick) entry")
        return self._columns

    def _group(self, by_tick: bool) -> dict[str, Column] | None:
        if len(self) == 0:
            return {}
        angles, angle_id = np.unique(self.angle, return_inverse=True)
        code = self.side.astype(np.int64) * angles.size + angle_id.reshape(-1)
        if by_tick:
            ticks, tick_id = np.unique(self.tick, return_inverse=True)
            code = code * ticks.size + tick_id.reshape(-1)
        # stable sort on a small integer code, then by pair index within each group
        order = np.lexsort((self.pair_index, code))
        bounds = np.flatnonzero(np.diff(code[order])) + 1
        out: dict[str, Column] = {}
        for sel in np.split(order, bounds):
            idx = self.pair_index[sel]
            if idx.size > 1 and np.any(idx[1:] == idx[:-1]):
                return None
            k = sel[0]
            side, angle = int(self.side[k]), float(self.angle[k])
            cid = column_id(side, angle, int(self.tick[k]) if by_tick else None)
            out[cid] = Column(cid, side, angle, idx, self.outcome[sel], self.tick[sel], self.counterfactual[sel])
        return out

    def column(self, side: Side | int, axis: Axis | float) -> Column:
        code = side.code if isinstance(side, Side) else int(side)
        angle = axis.angle if isinstance(axis, Axis) else normalize_angle(axis)
        cid = column_id(code, angle)
        cols = self.columns()
        if cid not in cols:
            raise UsageError(f"no column {cid}")
        return cols[cid]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.csv_text())

    def csv_text(self) -> str:
        # angles are few and distinct; repr gives a round-trippable float text
        angle_text = {a: repr(a) for a in np.unique(self.angle).tolist()}
        lines = [",".join(CSV_HEADER)]
        lines.extend(
            f"{p},{_SIDE_TEXT[s]},{angle_text[a]},{t},{o},{int(c)}"
            for p, s, a, t, o, c in zip(
                self.pair_index.tolist(), self.side.tolist(), self.angle.tolist(),
                self.tick.tolist(), self.outcome.tolist(), self.counterfactual.tolist(),
            )
        )
        return "\n".join(lines) + "\n"


@dataclass
class IngestStats:
    rows_read: int = 0
    rows_dropped: int = 0
    pairs_dropped: int = 0


def read_events_csv(path: str | Path, model: str = "qm") -> tuple[EventLog, IngestStats]:
    """Parse an events CSV.  Any pair with a spoiled row (outcome not +-1) is
    dropped entirely, together with its other rows."""
    stats = IngestStats()
    rows: list[tuple] = []
    spoiled: set[int] = set()
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise UsageError(f"events CSV header must be {','.join(CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            stats.rows_read += 1
            if len(row) != len(CSV_HEADER):
                raise UsageError(f"line {lineno}: expected {len(CSV_HEADER)} fields")
            try:
                pidx = int(row[0])
                side = _TEXT_SIDE[row[1].strip()]
                angle = normalize_angle(float(row[2]))
                tick = int(row[3])
                cf = int(row[5])
            except (ValueError, KeyError) as exc:
                raise UsageError(f"line {lineno}: malformed row {row!r}") from exc
            try:
                out = float(row[4])
            except ValueError:
                out = math.nan
            if out not in (1.0, -1.0):
                spoiled.add(pidx)
                continue
            rows.append((pidx, side, angle, tick, int(out), bool(cf)))
    kept = [r for r in rows if r[0] not in spoiled]
    stats.pairs_dropped = len(spoiled)
    stats.rows_dropped = stats.rows_read - len(kept)
    if kept:
        cols = list(zip(*kept))
    else:
        cols = [[] for _ in range(6)]
    return EventLog(*cols, model=model), stats


def read_wide_csv(path: str | Path) -> tuple[list[str], np.ndarray, IngestStats]:
    """Parse a table whose columns are +-1 sequences sharing one row index.
    Rows holding any value outside {-1, +1} are dropped and counted."""
    stats = IngestStats()
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise UsageError("wide CSV needs a header row")
        names = [h.strip() for h in header]
        good = []
        for row in reader:
            if not row:
                continue
            stats.rows_read += 1
            try:
                vals = [float(v) for v in row]
            except ValueError:
                vals = None
            if vals is None or len(vals) != len(names) or any(v not in (1.0, -1.0) for v in vals):
                stats.rows_dropped += 1
                continue
            good.append([int(v) for v in vals])
    data = np.asarray(good, dtype=np.int8).reshape(-1, len(names))
    stats.pairs_dropped = stats.rows_dropped
    return names, data, stats


def sniff_events_csv(path: str | Path) -> bool:
    with open(path, encoding="utf-8", newline="") as fh:
        header = next(csv.reader(fh), None) or []
    return tuple(h.strip() for h in header) == CSV_HEADER
