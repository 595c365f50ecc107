"""Provenance auditing of correlation terms.

Every datum that enters a correlation is traced to a (pair index, side)
entry of a ledger.  Preparations implied by the data are imputed from a
fixed rule table; two different preparations held by one particle at the
same tick make the evaluation MIXED_PREPARATION.  Otherwise the terms are
SINGLE_SAMPLE when they all draw on the same index set and MULTI_SAMPLE
when they do not.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import (
    CREATION_TICK,
    GEOMETRY_TOL,
    TWO_PI,
    Axis,
    PreparationState,
    PrepOrigin,
    Side,
    UsageError,
    normalize_angle,
)
from .events import Column, EventLog, column_id, read_events_csv

OPEN_END = np.iinfo(np.int64).max


class Verdict(enum.Enum):
    SINGLE_SAMPLE = "SINGLE_SAMPLE"
    MULTI_SAMPLE = "MULTI_SAMPLE"
    MIXED_PREPARATION = "MIXED_PREPARATION"


# Which preparations each model's data imply:
#   measurement    an actual measurement prepares the particle along its axis
#   counterfactual an MCD value along b is a measurement result along b at that tick
#   partner        a cross-particle correlation read through the singlet law makes
#                  each particle reverse(partner axis)-prepared before its own measurement
# Hidden-variable models fix every value through lambda and imply none.
IMPUTATION_RULES: dict[str, frozenset[str]] = {
    "qm": frozenset({"measurement", "counterfactual", "partner"}),
    "mcd_qm_collapse": frozenset({"measurement", "counterfactual", "partner"}),
    "lhv_sign": frozenset(),
    "mcd_lhv": frozenset(),
}


@dataclass(frozen=True)
class ImputedPreparation:
    """Preparations imputed to one side over a set of pair indices.

    ``state_angle`` is the oriented spin direction (axis reversed for a -1 sign).
    """

    side: int
    reason: str
    origin: PrepOrigin
    axis_angle: float
    indices: np.ndarray
    signs: np.ndarray
    valid_from: np.ndarray
    valid_until: np.ndarray

    @property
    def state_angle(self) -> np.ndarray:
        return np.mod(self.axis_angle + np.where(self.signs > 0, 0.0, math.pi), TWO_PI)

    def state_at(self, pair_index: int) -> PreparationState:
        k = int(np.searchsorted(self.indices, pair_index))
        if k >= self.indices.size or self.indices[k] != pair_index:
            raise KeyError(pair_index)
        until = int(self.valid_until[k])
        return PreparationState(
            Axis(self.axis_angle),
            int(self.valid_from[k]),
            None if until == OPEN_END else until,
            self.origin,
            int(self.signs[k]),
        )


@dataclass
class Conflict:
    side: int
    first: ImputedPreparation
    second: ImputedPreparation
    indices: np.ndarray

    def describe(self) -> str:
        side = "p" if self.side == 0 else "p'"
        return (f"{side} on {self.indices.size} pair(s): [{self.first.reason}] "
                f"overlaps [{self.second.reason}] with a different spin direction")


@dataclass
class AuditVerdict:
    classification: Verdict
    details: list[str] = field(default_factory=list)
    offending_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    conflicts: list[Conflict] = field(default_factory=list)

    def preparations_at(self, pair_index: int) -> list[tuple[str, PreparationState, PreparationState]]:
        """The pairs of incompatible preparations imputed at one pair index."""
        out = []
        for c in self.conflicts:
            if np.any(c.indices == pair_index):
                out.append(("p" if c.side == 0 else "p'", c.first.state_at(pair_index), c.second.state_at(pair_index)))
        return out

    def to_dict(self, max_indices: int = 20) -> dict:
        return {
            "classification": self.classification.value,
            "details": list(self.details),
            "n_offending": int(self.offending_indices.size),
            "offending_sample": [int(i) for i in self.offending_indices[:max_indices]],
        }

    def write_offending_csv(self, path: str | Path) -> None:
        """One row per (pair index, side, conflicting preparation pair)."""
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("pair_index", "side", "first_reason", "first_state_angle",
                        "second_reason", "second_state_angle"))
            for c in self.conflicts:
                side = "p" if c.side == 0 else "p'"
                p1 = np.searchsorted(c.first.indices, c.indices)
                p2 = np.searchsorted(c.second.indices, c.indices)
                a1 = c.first.state_angle[p1]
                a2 = c.second.state_angle[p2]
                for i, x, y in zip(c.indices.tolist(), a1.tolist(), a2.tolist()):
                    w.writerow((i, side, c.first.reason, repr(x), c.second.reason, repr(y)))


class ProvenanceLedger:
    """Read-only provenance view of an event log.

    Each (pair index, side, axis) datum is one ledger entry; the model name
    selects the imputation rules.
    """

    def __init__(self, log: EventLog, model: Optional[str] = None):
        self.log = log
        self.model = model or log.model
        if self.model not in IMPUTATION_RULES:
            raise UsageError(f"no imputation rules for model {self.model!r}")
        self.rules = IMPUTATION_RULES[self.model]
        self.columns = log.columns()
        actual = ~log.counterfactual
        self._stride = int(log.tick.max(initial=0)) + 2
        self._actual_keys = {
            side: np.sort(log.pair_index[actual & (log.side == side)] * self._stride
                          + log.tick[actual & (log.side == side)])
            for side in (0, 1)
        }

    def next_actual_tick(self, side: int, indices: np.ndarray, ticks: np.ndarray) -> np.ndarray:
        """Tick of each particle's next actual measurement after ``ticks``
        (OPEN_END when there is none)."""
        keys = self._actual_keys[side]
        probe = indices * self._stride + ticks
        pos = np.searchsorted(keys, probe, side="right")
        out = np.full(indices.size, OPEN_END, np.int64)
        ok = pos < keys.size
        nxt = keys[np.minimum(pos, keys.size - 1)] if keys.size else probe
        same = ok & (nxt // self._stride == indices)
        out[same] = nxt[same] % self._stride
        return out

    def column(self, cid: str) -> Column:
        if cid not in self.columns:
            raise UsageError(f"column {cid!r} is not registered in the ledger")
        return self.columns[cid]

    def check_registered(self, term) -> None:
        for cid in term.column_ids:
            col = self.column(cid)
            pos = np.searchsorted(col.indices, term.provenance)
            if pos.size and (pos.max() >= col.indices.size or np.any(col.indices[pos] != term.provenance)):
                raise UsageError(f"term data not traceable to ledger column {cid}")

    def actual_column(self, side: int, indices: np.ndarray) -> list[tuple[Column, np.ndarray]]:
        """Actual (non-counterfactual) measurements of ``side`` at ``indices``,
        grouped by column, as (column, positions-in-column)."""
        out = []
        for col in self.columns.values():
            if col.side != side:
                continue
            _, pos, _ = np.intersect1d(col.indices, indices, assume_unique=True, return_indices=True)
            pos = pos[~col.counterfactual[pos]]
            if pos.size:
                out.append((col, np.sort(pos)))
        return out

    def history(self, pair_index: int, side: Side | int) -> list[PreparationState]:
        """Preparations implied by this particle's own recorded data, time-sorted."""
        code = side.code if isinstance(side, Side) else int(side)
        states = []
        for col in self.columns.values():
            if col.side != code:
                continue
            k = int(np.searchsorted(col.indices, pair_index))
            if k < col.indices.size and col.indices[k] == pair_index:
                cf = bool(col.counterfactual[k])
                if ("counterfactual" if cf else "measurement") in self.rules:
                    tick = int(col.ticks[k])
                    until = int(self.next_actual_tick(code, np.array([pair_index]), np.array([tick]))[0])
                    states.append(PreparationState(
                        col.axis, tick, None if until == OPEN_END else until,
                        PrepOrigin.DIRECT_MEASUREMENT, int(col.outcomes[k])))
        return sorted(states, key=lambda s: s.valid_from)

    @classmethod
    def from_csv(cls, path: str | Path, model: str) -> ProvenanceLedger:
        log, _ = read_events_csv(path, model=model)
        return cls(log, model)


def nopl_check(history: Sequence[PreparationState]) -> bool:
    """True when no two overlapping preparations point in different directions."""
    starts = [s.valid_from for s in history]
    if any(b < a for a, b in zip(starts, starts[1:])):
        raise UsageError("preparation history must be sorted by valid_from")
    for i, a in enumerate(history):
        for b in history[i + 1:]:
            if a.state_axis is None or b.state_axis is None:
                continue
            if a.overlaps(b) and a.state_axis != b.state_axis:
                return False
    return True


def _measurement_imputation(
    ledger: ProvenanceLedger, col: Column, positions: np.ndarray, counterfactual: bool
) -> ImputedPreparation:
    kind = "counterfactual value" if counterfactual else "measurement"
    idx = col.indices[positions]
    ticks = col.ticks[positions]
    return ImputedPreparation(
        side=col.side,
        reason=f"{kind} {col.column_id}",
        origin=PrepOrigin.DIRECT_MEASUREMENT,
        axis_angle=col.angle,
        indices=idx,
        signs=col.outcomes[positions],
        valid_from=ticks,
        valid_until=ledger.next_actual_tick(col.side, idx, ticks),
    )


def _partner_imputation(target: Column, source: Column, shared: np.ndarray, reason: str) -> ImputedPreparation:
    """``target`` particle prepared along reverse(source axis) with the source sign,
    from creation up to its own measurement tick."""
    ps = source.take(shared)
    pt = target.take(shared)
    return ImputedPreparation(
        side=target.side,
        reason=reason,
        origin=PrepOrigin.PARTNER_COLLAPSE,
        axis_angle=normalize_angle(source.angle + math.pi),
        indices=shared,
        signs=source.outcomes[ps],
        valid_from=np.full(shared.size, CREATION_TICK, np.int64),
        valid_until=target.ticks[pt],
    )


def _angles_differ(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = np.abs(a - b) % TWO_PI
    return np.minimum(d, TWO_PI - d) > GEOMETRY_TOL


def find_conflicts(imputations: list[ImputedPreparation]) -> list[Conflict]:
    conflicts = []
    for i, a in enumerate(imputations):
        for b in imputations[i + 1:]:
            if a.side != b.side or not a.indices.size or not b.indices.size:
                continue
            # indices are sorted; batches occupy disjoint index ranges
            if a.indices[-1] < b.indices[0] or b.indices[-1] < a.indices[0]:
                continue
            shared, ia, ib = np.intersect1d(a.indices, b.indices, assume_unique=True, return_indices=True)
            if shared.size == 0:
                continue
            overlap = (a.valid_from[ia] < b.valid_until[ib]) & (b.valid_from[ib] < a.valid_until[ia])
            bad = overlap & _angles_differ(a.state_angle[ia], b.state_angle[ib])
            if np.any(bad):
                conflicts.append(Conflict(a.side, a, b, shared[bad]))
    return conflicts


def _dedupe(imputations: list[ImputedPreparation]) -> list[ImputedPreparation]:
    seen, out = set(), []
    for imp in imputations:
        # the same reason can recur over different batches of pairs
        key = (imp.side, imp.reason, imp.indices.tobytes())
        if key not in seen:
            seen.add(key)
            out.append(imp)
    return out


def _own_imputations(ledger: ProvenanceLedger, cols: list[Column], within: np.ndarray) -> list[ImputedPreparation]:
    out = []
    for col in cols:
        _, pos, _ = np.intersect1d(col.indices, within, assume_unique=True, return_indices=True)
        pos = np.sort(pos)
        for cf, rule in ((False, "measurement"), (True, "counterfactual")):
            sel = pos[col.counterfactual[pos] == cf]
            if sel.size and rule in ledger.rules:
                out.append(_measurement_imputation(ledger, col, sel, cf))
    return out


def _classify(conflicts: list[Conflict], index_sets: list[np.ndarray], details: list[str]) -> AuditVerdict:
    if conflicts:
        offending = np.unique(np.concatenate([c.indices for c in conflicts]))
        details = details + [c.describe() for c in conflicts]
        return AuditVerdict(Verdict.MIXED_PREPARATION, details, offending, conflicts)
    first = index_sets[0]
    if all(s.size == first.size and np.array_equal(s, first) for s in index_sets[1:]):
        details = details + [f"all data drawn from one sample of {first.size} pair(s)"]
        return AuditVerdict(Verdict.SINGLE_SAMPLE, details)
    sizes = ", ".join(str(s.size) for s in index_sets)
    disjoint = all(np.intersect1d(a, b).size == 0
                   for i, a in enumerate(index_sets) for b in index_sets[i + 1:])
    shape = "disjoint" if disjoint else "differing"
    details = details + [f"terms draw on {shape} pair-index sets (sizes {sizes})"]
    return AuditVerdict(Verdict.MULTI_SAMPLE, details)


def audit_abi(report_terms: Sequence, ledger: ProvenanceLedger) -> AuditVerdict:
    """Classify the data lineage of a set of correlation terms."""
    if not report_terms:
        raise UsageError("nothing to audit")
    for t in report_terms:
        ledger.check_registered(t)
    index_sets = [np.unique(t.provenance) for t in report_terms]
    within = np.unique(np.concatenate(index_sets))
    cols = []
    for t in report_terms:
        for cid in t.column_ids:
            col = ledger.column(cid)
            if all(c.column_id != cid for c in cols):
                cols.append(col)
    imputations = _own_imputations(ledger, cols, within)
    if "partner" in ledger.rules:
        for t, idx in zip(report_terms, index_sets):
            cx, cy = ledger.column(t.column_ids[0]), ledger.column(t.column_ids[1])
            if cx.side == cy.side:
                continue
            imputations.append(_partner_imputation(cx, cy, idx, f"partner of {cy.column_id}"))
            imputations.append(_partner_imputation(cy, cx, idx, f"partner of {cx.column_id}"))
    conflicts = find_conflicts(_dedupe(imputations))
    details = [f"model {ledger.model}; {len(report_terms)} term(s)"]
    return _classify(conflicts, index_sets, details)


def audit_rows(ledger: ProvenanceLedger, column_ids: Optional[Sequence[str]] = None) -> AuditVerdict:
    """Audit whole rows: every listed column's data taken jointly per pair."""
    ids = list(column_ids) if column_ids is not None else sorted(ledger.columns)
    if not ids:
        raise UsageError("nothing to audit")
    cols = [ledger.column(cid) for cid in ids]
    within = np.unique(np.concatenate([c.indices for c in cols]))
    conflicts = find_conflicts(_dedupe(_own_imputations(ledger, cols, within)))
    details = [f"model {ledger.model}; {len(cols)} column(s) read jointly"]
    return _classify(conflicts, [c.indices for c in cols], details)


def locality_substitution_audit(lhs_column: str, rhs_column: str, ledger: ProvenanceLedger) -> AuditVerdict:
    """Audit reading <s(p,a), s(p,b)> off the partner column along reverse(b).

    ``lhs_column`` holds s(p, a); ``rhs_column`` holds the partner's values
    along c = reverse(b).  The substitution treats p as prepared by the
    partner's c-measurement; the pair's actual partner measurement prepares p
    too.  When the two disagree, p holds two preparations at once.
    """
    left, right = ledger.column(lhs_column), ledger.column(rhs_column)
    if left.side == right.side:
        raise UsageError("the substitution pairs a column of one particle with its partner's")
    a = Axis(left.angle)
    b = Axis(right.angle).reverse()
    shared = np.intersect1d(left.indices, right.indices, assume_unique=True)
    header = [f"model {ledger.model}; substituting {right.column_id} for the partner of {left.column_id} "
              f"(a={a.angle!r}, b={b.angle!r})"]
    if shared.size == 0:
        return AuditVerdict(Verdict.MULTI_SAMPLE, header + ["the substitute column comes from other pairs"])
    if a == b:
        return AuditVerdict(Verdict.SINGLE_SAMPLE, header + ["a = b: no second preparation is imputed"])
    if "partner" not in ledger.rules:
        return AuditVerdict(Verdict.SINGLE_SAMPLE,
                            header + ["hidden-variable model: values fixed by lambda, no preparation imputed"])
    imputations = [_partner_imputation(left, right, shared, f"substitution via {right.column_id}")]
    for col, pos in ledger.actual_column(right.side, shared):
        idx = col.indices[pos]
        if col.column_id == right.column_id:
            continue
        imputations.append(_partner_imputation(left, col, idx, f"actual partner {col.column_id}"))
    conflicts = find_conflicts(imputations)
    return _classify(conflicts, [shared], header)


def write_ledger_json(path: str | Path, model: str, events_file: str, terms: list[dict],
                      abi_reports: list[dict], substitutions: list[dict]) -> None:
    doc = {
        "model": model,
        "events": events_file,
        "terms": terms,
        "abi_reports": abi_reports,
        "substitutions": substitutions,
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def column_key(side: Side, axis: Axis) -> str:
    return column_id(side.code, axis.angle)
