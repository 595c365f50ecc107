"""Correlation estimates, convergence diagnostics and the V3/V4 inequality
evaluators, with a brute-force bound oracle."""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from .core import UsageError, dot_angles
from .events import Column

V3_BOUND = 1
V4_BOUND = 2


@dataclass(frozen=True)
class CorrelationEstimate:
    """Mean of x_i * y_i over aligned samples.

    ``total`` is the exact integer sum of products, so estimates merge
    associatively.  ``history`` keeps the per-sample products when requested.
    """

    column_ids: tuple[str, str]
    n: int
    total: int
    provenance: np.ndarray
    history: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def value(self) -> float:
        return self.total / self.n

    @property
    def exact(self) -> Fraction:
        return Fraction(self.total, self.n)

    @property
    def variance(self) -> float:
        """Per-sample variance of the +-1 products."""
        return max(0.0, 1.0 - self.value * self.value)

    @property
    def stderr(self) -> float:
        return math.sqrt(self.variance / self.n)

    def merge(self, other: CorrelationEstimate) -> CorrelationEstimate:
        if self.column_ids != other.column_ids:
            raise UsageError("cannot merge estimates of different columns")
        history = None
        if self.history is not None and other.history is not None:
            history = np.concatenate([self.history, other.history])
        return CorrelationEstimate(
            self.column_ids,
            self.n + other.n,
            self.total + other.total,
            np.concatenate([self.provenance, other.provenance]),
            history,
        )

    def to_dict(self) -> dict:
        return {
            "columns": list(self.column_ids),
            "value": self.value,
            "n": self.n,
            "total": self.total,
            "stderr": self.stderr,
        }


def _as_signs(values, name: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise UsageError(f"{name} must be one-dimensional")
    arr = arr.astype(np.int64)
    if not np.all((arr == 1) | (arr == -1)):
        raise UsageError(f"{name} must hold only +1/-1")
    return arr


def correlate(
    xs: Sequence[int],
    ys: Sequence[int],
    provenance: Optional[Sequence[int]] = None,
    column_ids: tuple[str, str] = ("x", "y"),
    retain_history: bool = False,
) -> CorrelationEstimate:
    x = _as_signs(xs, "xs")
    y = _as_signs(ys, "ys")
    if x.size != y.size:
        raise UsageError(f"length mismatch: {x.size} vs {y.size}")
    if x.size == 0:
        raise UsageError("cannot correlate empty sequences")
    prov = np.arange(x.size, dtype=np.int64) if provenance is None else np.asarray(provenance, dtype=np.int64)
    if prov.shape != x.shape:
        raise UsageError("provenance must give one pair index per sample")
    prod = x * y
    history = prod.astype(np.int8) if retain_history else None
    return CorrelationEstimate(tuple(column_ids), int(x.size), int(prod.sum()), prov, history)


def correlate_chunked(
    xs: Sequence[int],
    ys: Sequence[int],
    provenance: Optional[Sequence[int]] = None,
    column_ids: tuple[str, str] = ("x", "y"),
    chunk_size: int = 1 << 16,
    workers: int = 1,
) -> CorrelationEstimate:
    """Same result as ``correlate``, built from merged partial sums."""
    x = np.asarray(xs)
    y = np.asarray(ys)
    if x.size != y.size:
        raise UsageError(f"length mismatch: {x.size} vs {y.size}")
    if x.size == 0:
        raise UsageError("cannot correlate empty sequences")
    prov = np.arange(x.size, dtype=np.int64) if provenance is None else np.asarray(provenance, dtype=np.int64)
    bounds = [(s, min(s + chunk_size, x.size)) for s in range(0, x.size, chunk_size)]

    def part(b):
        s, e = b
        return correlate(x[s:e], y[s:e], prov[s:e], column_ids)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(part, bounds))
    else:
        parts = [part(b) for b in bounds]
    out = parts[0]
    for p in parts[1:]:
        out = out.merge(p)
    return out


def aligned_pairs(col_x: Column, col_y: Column) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pair indices present in both columns, with the aligned values."""
    shared, ix, iy = np.intersect1d(col_x.indices, col_y.indices, assume_unique=True, return_indices=True)
    return shared, col_x.outcomes[ix], col_y.outcomes[iy]


def correlate_columns(col_x: Column, col_y: Column, retain_history: bool = False) -> CorrelationEstimate:
    shared, xs, ys = aligned_pairs(col_x, col_y)
    if shared.size == 0:
        raise UsageError(f"columns {col_x.column_id} and {col_y.column_id} share no pair index")
    return correlate(xs, ys, shared, (col_x.column_id, col_y.column_id), retain_history)


@dataclass(frozen=True)
class ConvergenceTrace:
    points: list[tuple[int, float]]
    band: float
    stabilized_at: int
    final: float

    def to_dict(self) -> dict:
        return {"band": self.band, "stabilized_at": self.stabilized_at, "final": self.final,
                "points": len(self.points)}


def partial_means(estimate: CorrelationEstimate) -> np.ndarray:
    if estimate.history is None:
        raise UsageError("history was not retained for this estimate")
    csum = np.cumsum(estimate.history, dtype=np.int64)
    return csum / np.arange(1, csum.size + 1)


def convergence_trace(estimate: CorrelationEstimate, window: int = 1000, band: float = 0.01) -> ConvergenceTrace:
    """Partial means every ``window`` samples (final sample always included),
    plus the smallest n after which every partial mean stays within ``band``
    of the final value."""
    if window < 1:
        raise UsageError("window must be positive")
    means = partial_means(estimate)
    n = means.size
    final = estimate.value
    picks = list(range(window, n + 1, window))
    if not picks or picks[-1] != n:
        picks.append(n)
    points = [(k, float(means[k - 1])) for k in picks]
    outside = np.flatnonzero(np.abs(means - final) > band)
    stabilized = 1 if outside.size == 0 else int(outside[-1]) + 2
    return ConvergenceTrace(points, band, min(stabilized, n), final)


def v4_sign_lhs(x: int, y: int, z: int, w: int) -> int:
    return abs(x * y + x * z) + abs(w * y - w * z)


def v3_sign_lhs(x: int, y: int, z: int) -> int:
    return abs(x * y - x * z) + y * z


def bound_oracle(kind: str, keep: Optional[Callable[..., bool]] = None) -> int:
    """Maximum left-hand side over every +-1 assignment (8 for V3, 16 for V4).
    ``keep`` optionally restricts the enumeration."""
    if kind == "V4":
        fn, k = v4_sign_lhs, 4
    elif kind == "V3":
        fn, k = v3_sign_lhs, 3
    else:
        raise UsageError(f"unknown inequality kind {kind!r}")
    best = None
    for signs in itertools.product((-1, 1), repeat=k):
        if keep is not None and not keep(*signs):
            continue
        val = fn(*signs)
        best = val if best is None else max(best, val)
    if best is None:
        raise UsageError("restriction excluded every assignment")
    return best


@dataclass
class AbiReport:
    kind: str
    terms: dict[str, CorrelationEstimate]
    lhs_exact: Fraction
    bound: float
    slack: float
    satisfied: bool
    audit: Optional[object] = None

    @property
    def lhs(self) -> float:
        return float(self.lhs_exact)

    def recompute(self) -> Fraction:
        return _lhs(self.kind, {k: t.exact for k, t in self.terms.items()})

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind,
            "terms": {k: t.to_dict() for k, t in self.terms.items()},
            "lhs": self.lhs,
            "bound": self.bound,
            "slack": self.slack,
            "satisfied": self.satisfied,
        }
        if self.audit is not None:
            d["audit"] = self.audit.to_dict()
        return d


def _lhs(kind: str, c: dict[str, Fraction]) -> Fraction:
    if kind == "V4":
        return abs(c["xy"] + c["xz"]) + abs(c["wy"] - c["wz"])
    return abs(c["xy"] - c["xz"]) + c["yz"]


def _report(kind: str, terms: dict[str, CorrelationEstimate], ledger) -> AbiReport:
    bound = V4_BOUND if kind == "V4" else V3_BOUND
    lhs = _lhs(kind, {k: t.exact for k, t in terms.items()})
    slack = 3.0 * math.sqrt(sum(t.variance / t.n for t in terms.values()))
    report = AbiReport(kind, terms, lhs, float(bound), slack, lhs <= bound + Fraction(slack))
    if ledger is not None:
        from .audit import audit_abi

        report.audit = audit_abi(list(terms.values()), ledger)
    return report


def eval_v4(cxy, cxz, cwy, cwz, ledger=None) -> AbiReport:
    """|<x,y> + <x,z>| + |<w,y> - <w,z>| against the bound 2."""
    return _report("V4", {"xy": cxy, "xz": cxz, "wy": cwy, "wz": cwz}, ledger)


def eval_v3(cxy, cxz, cyz, ledger=None) -> AbiReport:
    """|<x,y> - <x,z>| + <y,z> against the bound 1."""
    return _report("V3", {"xy": cxy, "xz": cxz, "yz": cyz}, ledger)


def tml(a: float, b: float) -> float:
    """Singlet correlation -u(a).u(b) for p along ``a`` and p' along ``b``."""
    return -dot_angles(a, b)


def qm_chsh_lhs(x: float, w: float, y: float, z: float) -> float:
    """V4 left side with p measured along x, w and p' along y, z."""
    return abs(tml(x, y) + tml(x, z)) + abs(tml(w, y) - tml(w, z))


def qm_v3_lhs(x: float, y: float, z: float) -> float:
    """V3 left side for u = s(p, x), v = s(p, y), u' = s(p', z).

    <u, v> is a same-particle quantity; it is obtained, as in the usual
    locality argument, from p along x and p' along reverse(y).
    """
    return abs(tml(x, y + math.pi) - tml(x, z)) + tml(y, z)


def v3_grid_search(steps: int = 72) -> tuple[float, tuple[float, float, float]]:
    """Largest ``qm_v3_lhs`` on a grid of ``steps`` angles per axis, x fixed at 0."""
    best = (-math.inf, (0.0, 0.0, 0.0))
    grid = [2 * math.pi * k / steps for k in range(steps)]
    for y in grid:
        for z in grid:
            val = qm_v3_lhs(0.0, y, z)
            if val > best[0] + 1e-12:
                best = (val, (0.0, y, z))
    return best
