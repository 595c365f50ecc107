"""Command-line experiment runner.

Every run writes ``events.csv`` (one row per measurement event),
``summary.json`` and ``ledger.json`` (model + term specs, re-auditable with
``audit-replay``).  Exit codes: 0 success (whatever the verdicts), 2 bad
configuration, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .audit import (
    AuditVerdict,
    ProvenanceLedger,
    Verdict,
    _classify,
    audit_rows,
    locality_substitution_audit,
    write_ledger_json,
)
from .core import Axis, Side, UsageError, axis_dot, rng_stream, stream_key
from .estimators import (
    AbiReport,
    CorrelationEstimate,
    bound_oracle,
    convergence_trace,
    correlate,
    correlate_columns,
    eval_v3,
    eval_v4,
    tml,
)
from .events import EventLog, read_events_csv, read_wide_csv, sniff_events_csv
from .hv import MODELS, generate_lhv_batch, generate_mcd_table, lhv_correlation
from .quantum import PURPOSE_OUTCOMES, Order, generate_batch, sample_chains

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3
SEED_ENV = "BELLSIM_SEED"

# p measured along x, w; p' along y, z.  This labelling reaches 2*sqrt(2) in
# |<x,y> + <x,z>| + |<w,y> - <w,z>|.
CHSH_PRESET = (math.pi / 2, 0.0, math.pi / 4, 3 * math.pi / 4)
# u = s(p, x), v = s(p, y), u' = s(p', z); maximizer of the V3 grid search
V3_PRESET = (0.0, math.pi / 3, 5 * math.pi / 3)

COMMAND_MODELS = {
    "singlet-run": ("qm", "lhv_sign"),
    "chain-run": ("qm",),
    "chsh": MODELS,
    "v3": MODELS,
    "mcd-table": ("mcd_lhv", "mcd_qm_collapse"),
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    command: str
    model: str = "qm"
    angles: tuple[float, ...] = ()
    n: int = 10_000
    seed: int = 0
    order: str = "p-first"
    axis_set: Optional[tuple[float, ...]] = None
    out_dir: str = "bellsim-out"
    retain_history: bool = False
    workers: int = 1
    band: float = 0.01

    def validate(self) -> None:
        if self.command in COMMAND_MODELS and self.model not in COMMAND_MODELS[self.command]:
            raise ConfigError(f"model {self.model!r} not available for {self.command}; "
                              f"choose from {', '.join(COMMAND_MODELS[self.command])}")
        if self.n < 1:
            raise ConfigError("--n must be at least 1")
        if self.workers < 1:
            raise ConfigError("--workers must be at least 1")
        if not all(math.isfinite(a) for a in self.angles + (self.axis_set or ())):
            raise ConfigError("angles must be finite")
        if self.band <= 0:
            raise ConfigError("--band must be positive")
        try:
            Order(self.order)
        except ValueError:
            raise ConfigError(f"unknown order {self.order!r}") from None
        if not (0 <= self.seed < 1 << 64):
            raise ConfigError("seed must fit in an unsigned 64-bit integer")

    def echo(self) -> dict:
        d = asdict(self)
        d["angles"] = list(self.angles)
        d["axis_set"] = None if self.axis_set is None else list(self.axis_set)
        return d


@dataclass
class RunResult:
    exit_code: int
    summary: dict = field(default_factory=dict)
    paths: dict = field(default_factory=dict)


def parse_angles(text: str) -> tuple[float, ...]:
    """Comma-separated radians as plain decimal text."""
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            raise ConfigError(f"empty angle in {text!r}")
        low = tok.lower()
        if "deg" in low or "°" in tok:
            raise ConfigError(f"angles are radians; degrees are not accepted ({tok!r})")
        try:
            val = float(tok)
        except ValueError:
            raise ConfigError(f"angle {tok!r} is not a decimal number of radians") from None
        if not math.isfinite(val):
            raise ConfigError(f"angle {tok!r} is not finite")
        out.append(val)
    return tuple(out)


# ---------------------------------------------------------------------------
# experiment assembly


def _generate(cfg: ExperimentConfig, model: str, a: Axis, b: Axis, batch_id: int):
    fn = generate_batch if model == "qm" else generate_lhv_batch
    return fn(cfg.n, a, b, cfg.seed, batch_id, Order(cfg.order),
              start_index=batch_id * cfg.n, workers=cfg.workers)


def _multi_batch(cfg: ExperimentConfig, settings: list[tuple[str, Axis, Axis]]) -> EventLog:
    seen = []
    for label, a, b in settings:
        if any(a == a2 and b == b2 for a2, b2 in seen):
            raise ConfigError(f"setting pair for {label} repeats another term's setting")
        seen.append((a, b))
    logs = [_generate(cfg, cfg.model, a, b, k).to_events() for k, (_, a, b) in enumerate(settings)]
    return EventLog.concat(logs).sorted()


def _dedupe_axes(axes: Sequence[Axis]) -> list[Axis]:
    out: list[Axis] = []
    for a in axes:
        if not any(a == b for b in out):
            out.append(a)
    return out


def _mcd_log(cfg: ExperimentConfig, actual_p: Axis, actual_pp: Axis, default_set: list[Axis]):
    axis_set = [Axis(a) for a in cfg.axis_set] if cfg.axis_set else _dedupe_axes(default_set)
    mode = "lhv" if cfg.model == "mcd_lhv" else "qm_collapse"
    table = generate_mcd_table(cfg.n, actual_p, actual_pp, axis_set, mode, cfg.seed,
                               order=Order(cfg.order), workers=cfg.workers)
    return table, table.to_events()


def reference_correlation(model: str, cx, cy, actual: Optional[tuple[Axis, Axis]] = None) -> float:
    """Model expectation for the correlation of two ledger columns."""
    ax, ay = cx.axis, cy.axis
    if model in ("qm", "lhv_sign"):
        if cx.side == cy.side:
            return axis_dot(ax, ay)
        return tml(ax.angle, ay.angle) if model == "qm" else lhv_correlation(ax.angle - ay.angle)
    if model == "mcd_lhv":
        c = lhv_correlation(ax.angle - ay.angle)
        return c if cx.side != cy.side else -c
    # qm_collapse cells are Malus draws from each side's (actual axis, outcome)
    ap, app = actual
    own = {0: ap, 1: app}
    factor = axis_dot(own[cx.side], ax) * axis_dot(own[cy.side], ay)
    if cx.side == cy.side:
        return factor
    return factor * -axis_dot(ap, app)


@dataclass
class Experiment:
    log: EventLog
    model: str
    terms: dict[str, tuple[str, str]]
    abi: list[tuple[str, dict[str, str]]] = field(default_factory=list)
    substitutions: list[tuple[str, str]] = field(default_factory=list)
    row_audit: bool = False
    actual: Optional[tuple[Axis, Axis]] = None
    extra: dict = field(default_factory=dict)


def _col(log: EventLog, side: Side, axis: Axis) -> str:
    return log.column(side, axis).column_id


def build_singlet(cfg: ExperimentConfig) -> Experiment:
    if len(cfg.angles) != 2:
        raise ConfigError("singlet-run needs --angles a,a'")
    a, b = Axis(cfg.angles[0]), Axis(cfg.angles[1])
    log = _generate(cfg, cfg.model, a, b, 0).to_events()
    return Experiment(log, cfg.model, {"pp'": (_col(log, Side.P, a), _col(log, Side.PP, b))})


def build_chsh(cfg: ExperimentConfig) -> Experiment:
    angles = cfg.angles or CHSH_PRESET
    if len(angles) != 4:
        raise ConfigError("chsh needs --angles x,w,y,z (p along x, w; p' along y, z)")
    x, w, y, z = (Axis(a) for a in angles)
    labels = {"xy": (x, y), "xz": (x, z), "wy": (w, y), "wz": (w, z)}
    if cfg.model.startswith("mcd_"):
        table, log = _mcd_log(cfg, x, y, [x, w, y, z])
        actual = (x, y)
        row_audit = True
    else:
        log = _multi_batch(cfg, [(k, a, b) for k, (a, b) in labels.items()])
        actual, row_audit = None, False
    terms = {k: (_col(log, Side.P, a), _col(log, Side.PP, b)) for k, (a, b) in labels.items()}
    return Experiment(log, cfg.model, terms, [("V4", {k: k for k in labels})],
                      row_audit=row_audit, actual=actual)


def build_v3(cfg: ExperimentConfig) -> Experiment:
    angles = cfg.angles or V3_PRESET
    if len(angles) != 3:
        raise ConfigError("v3 needs --angles x,y,z (u = s(p,x), v = s(p,y), u' = s(p',z))")
    x, y, z = (Axis(a) for a in angles)
    yr = y.reverse()
    if cfg.model.startswith("mcd_"):
        table, log = _mcd_log(cfg, x, z, [x, y, z, yr])
        terms = {
            "xy": (_col(log, Side.P, x), _col(log, Side.P, y)),
            "xz": (_col(log, Side.P, x), _col(log, Side.PP, z)),
            "yz": (_col(log, Side.P, y), _col(log, Side.PP, z)),
        }
        actual, row_audit = (x, z), True
        subst_ok = any(a == yr for a in table.axis_set)
    else:
        # <u, v> is read from p along x and p' along reverse(y)
        log = _multi_batch(cfg, [("xy", x, yr), ("xz", x, z), ("yz", y, z)])
        terms = {
            "xy": (_col(log, Side.P, x), _col(log, Side.PP, yr)),
            "xz": (_col(log, Side.P, x), _col(log, Side.PP, z)),
            "yz": (_col(log, Side.P, y), _col(log, Side.PP, z)),
        }
        actual, row_audit, subst_ok = None, False, True
    subs = [(_col(log, Side.P, x), _col(log, Side.PP, yr))] if subst_ok else []
    return Experiment(log, cfg.model, terms, [("V3", {k: k for k in terms})], subs,
                      row_audit=row_audit, actual=actual)


def build_mcd_table(cfg: ExperimentConfig) -> Experiment:
    if len(cfg.angles) != 2:
        raise ConfigError("mcd-table needs --angles a,a' (the actually measured axes)")
    a, b = Axis(cfg.angles[0]), Axis(cfg.angles[1])
    table, log = _mcd_log(cfg, a, b, [a, b])
    terms = {"pp'": (_col(log, Side.P, a), _col(log, Side.PP, b))}
    subs = [(_col(log, Side.P, a), _col(log, Side.PP, c))
            for c in table.axis_set if c != b]
    conserved = int(np.sum(np.all(table.values_p * table.values_pp == -1, axis=1)))
    return Experiment(log, cfg.model, terms, [], subs, row_audit=True, actual=(a, b),
                      extra={"rows": len(table), "rows_conserving_all_axes": conserved,
                             "axis_set": [ax.angle for ax in table.axis_set]})


BUILDERS = {
    "singlet-run": build_singlet,
    "chsh": build_chsh,
    "v3": build_v3,
    "mcd-table": build_mcd_table,
}


def evaluate(exp: Experiment, retain_history: bool = False, band: float = 0.01):
    """Estimates, inequality reports and audits for an assembled experiment."""
    ledger = ProvenanceLedger(exp.log, exp.model)
    estimates: dict[str, CorrelationEstimate] = {}
    for label, (cx, cy) in exp.terms.items():
        estimates[label] = correlate_columns(ledger.column(cx), ledger.column(cy), retain_history)
    reports: list[AbiReport] = []
    for kind, mapping in exp.abi:
        t = {sym: estimates[label] for sym, label in mapping.items()}
        if kind == "V4":
            reports.append(eval_v4(t["xy"], t["xz"], t["wy"], t["wz"], ledger))
        else:
            reports.append(eval_v3(t["xy"], t["xz"], t["yz"], ledger))
    subs = [(lhs, rhs, locality_substitution_audit(lhs, rhs, ledger)) for lhs, rhs in exp.substitutions]
    rows = audit_rows(ledger) if exp.row_audit else None
    return ledger, estimates, reports, subs, rows


def _term_specs(exp: Experiment) -> list[dict]:
    return [{"label": k, "columns": list(v)} for k, v in exp.terms.items()]


def _abi_specs(exp: Experiment) -> list[dict]:
    return [{"kind": kind, "terms": mapping} for kind, mapping in exp.abi]


def _write_traces(path: Path, estimates: dict[str, CorrelationEstimate]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("term,n,partial_mean\n")
        for label, est in estimates.items():
            window = max(1, est.n // 500)
            for k, m in convergence_trace(est, window).points:
                fh.write(f"{label},{k},{m!r}\n")


def _collect_offending(verdicts: list[tuple[str, AuditVerdict]], out: Path) -> Optional[str]:
    mixed = [(name, v) for name, v in verdicts if v.classification is Verdict.MIXED_PREPARATION]
    if not mixed:
        return None
    name, v = mixed[0]
    path = out / "offending.csv"
    v.write_offending_csv(path)
    return str(path)


def run_experiment(cfg: ExperimentConfig) -> RunResult:
    cfg.validate()
    started = time.perf_counter()
    out = Path(cfg.out_dir)
    if cfg.command == "chain-run":
        return _run_chain(cfg, started, out)
    exp = BUILDERS[cfg.command](cfg)
    ledger, estimates, reports, subs, rows = evaluate(exp, cfg.retain_history, cfg.band)

    correlations = []
    for label, est in estimates.items():
        cx, cy = ledger.column(est.column_ids[0]), ledger.column(est.column_ids[1])
        entry = {"label": label, **est.to_dict(),
                 "reference": reference_correlation(exp.model, cx, cy, exp.actual)}
        if cfg.retain_history:
            entry["stabilization"] = convergence_trace(est, max(1, est.n // 500), cfg.band).to_dict()
        correlations.append(entry)

    verdicts = [(f"abi:{r.kind}", r.audit) for r in reports]
    verdicts += [(f"substitution:{lhs}|{rhs}", v) for lhs, rhs, v in subs]
    if rows is not None:
        verdicts.append(("rows", rows))

    summary = {
        "tool": "bellsim",
        "version": __version__,
        "command": cfg.command,
        "config": cfg.echo(),
        "seed": cfg.seed,
        "model": exp.model,
        "events": len(exp.log),
        "terms": _term_specs(exp),
        "correlations": correlations,
        "abi_reports": [{**r.to_dict(), "term_labels": mapping}
                        for r, (_, mapping) in zip(reports, exp.abi)],
        "substitution_audits": [{"lhs": lhs, "rhs": rhs, "audit": v.to_dict()} for lhs, rhs, v in subs],
        "row_audit": rows.to_dict() if rows is not None else None,
        **exp.extra,
    }
    paths = _write_outputs(cfg, out, exp.log, summary, started, exp, verdicts,
                           estimates if cfg.retain_history else None)
    return RunResult(EXIT_OK, summary, paths)


def _write_outputs(cfg, out: Path, log: EventLog, summary: dict, started: float,
                   exp: Optional[Experiment], verdicts, estimates) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    paths = {"events": str(out / "events.csv"), "summary": str(out / "summary.json"),
             "ledger": str(out / "ledger.json")}
    log.to_csv(paths["events"])
    write_ledger_json(
        paths["ledger"], log.model, "events.csv",
        _term_specs(exp) if exp else summary.get("terms", []),
        _abi_specs(exp) if exp else [],
        [{"lhs": l, "rhs": r} for l, r in exp.substitutions] if exp else [],
    )
    if estimates is not None:
        paths["traces"] = str(out / "traces.csv")
        _write_traces(Path(paths["traces"]), estimates)
    off = _collect_offending(verdicts, out)
    if off:
        paths["offending"] = off
    summary["wall_clock_s"] = round(time.perf_counter() - started, 6)
    Path(paths["summary"]).write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return paths


def _run_chain(cfg: ExperimentConfig, started: float, out: Path) -> RunResult:
    if not cfg.angles:
        raise ConfigError("chain-run needs --angles a0,a1,...")
    axes = [Axis(a) for a in cfg.angles]
    outcomes = sample_chains(cfg.n, axes, rng_stream(cfg.seed, stream_key(PURPOSE_OUTCOMES, 0, 0)))
    k = len(axes)
    idx = np.repeat(np.arange(cfg.n, dtype=np.int64), k)
    log = EventLog(idx, np.zeros(idx.size, np.int8), np.tile([a.angle for a in axes], cfg.n),
                   np.tile(np.arange(1, k + 1), cfg.n), outcomes.reshape(-1), np.zeros(idx.size, bool),
                   model="qm")
    steps = [(i, i + 1) for i in range(k - 1)]
    if k > 2:
        steps.append((0, k - 1))
    correlations, terms = [], []
    for i, j in steps:
        est = correlate(outcomes[:, i], outcomes[:, j], np.arange(cfg.n), (f"step{i}", f"step{j}"),
                        cfg.retain_history)
        ref = 1.0
        for m in range(i, j):
            ref *= axis_dot(axes[m], axes[m + 1])
        entry = {"label": f"{i}->{j}", **est.to_dict(), "reference": ref}
        if cfg.retain_history:
            entry["stabilization"] = convergence_trace(est, max(1, est.n // 500), cfg.band).to_dict()
        correlations.append(entry)
    summary = {
        "tool": "bellsim",
        "version": __version__,
        "command": cfg.command,
        "config": cfg.echo(),
        "seed": cfg.seed,
        "model": "qm",
        "events": len(log),
        "terms": terms,
        "correlations": correlations,
    }
    paths = _write_outputs(cfg, out, log, summary, started, None, [], None)
    return RunResult(EXIT_OK, summary, paths)


# ---------------------------------------------------------------------------
# replay and ingest


def _load_specs(path: Path) -> dict:
    doc = json.loads(path.read_text(encoding="utf-8"))
    abi = []
    for r in doc.get("abi_reports", []):
        abi.append((r["kind"], r.get("terms") if isinstance(r.get("terms"), dict) and
                    all(isinstance(v, str) for v in r["terms"].values()) else r["term_labels"]))
    subs = [(s["lhs"], s["rhs"]) for s in doc.get("substitutions", doc.get("substitution_audits", []))]
    events = doc.get("events")
    return {"model": doc.get("model"), "events": events if isinstance(events, str) else None,
            "terms": {t["label"]: tuple(t["columns"]) for t in doc.get("terms", [])},
            "abi": abi, "substitutions": subs}


def audit_replay(ledger_path: Path) -> dict:
    specs = _load_specs(ledger_path)
    if not specs["events"] or not specs["model"]:
        raise ConfigError(f"{ledger_path} does not name a model and an events file")
    events = ledger_path.parent / specs["events"]
    log, stats = read_events_csv(events, model=specs["model"])
    exp = Experiment(log, specs["model"], specs["terms"], specs["abi"], specs["substitutions"],
                     row_audit=specs["model"].startswith("mcd_"))
    _, estimates, reports, subs, rows = evaluate(exp)
    return {
        "ledger": str(ledger_path),
        "model": exp.model,
        "abi_reports": [r.to_dict() for r in reports],
        "substitution_audits": [{"lhs": l, "rhs": r, "audit": v.to_dict()} for l, r, v in subs],
        "row_audit": rows.to_dict() if rows is not None else None,
    }


def ingest(path: Path, model: str = "qm", specs_path: Optional[Path] = None,
           columns: Optional[dict[str, str]] = None) -> dict:
    if sniff_events_csv(path):
        return _ingest_events(path, model, specs_path)
    return _ingest_wide(path, columns)


def _ingest_events(path: Path, model: str, specs_path: Optional[Path]) -> dict:
    specs = _load_specs(specs_path) if specs_path else None
    if specs and specs["model"]:
        model = specs["model"]
    log, stats = read_events_csv(path, model=model)
    if specs:
        terms, abi, subs = specs["terms"], specs["abi"], specs["substitutions"]
    else:
        cols = log.columns()
        terms = {}
        for a in cols.values():
            for b in cols.values():
                if a.side == 0 and b.side == 1 and np.intersect1d(a.indices, b.indices).size:
                    terms[f"{a.column_id}|{b.column_id}"] = (a.column_id, b.column_id)
        abi, subs = [], []
    exp = Experiment(log, model, terms, abi, subs, row_audit=model.startswith("mcd_"))
    _, estimates, reports, subs_out, rows = evaluate(exp)
    return {
        "input": str(path),
        "format": "events",
        "model": model,
        "rows_read": stats.rows_read,
        "rows_dropped": stats.rows_dropped,
        "pairs_dropped": stats.pairs_dropped,
        "correlations": [{"label": k, **e.to_dict()} for k, e in estimates.items()],
        "abi_reports": [r.to_dict() for r in reports],
        "substitution_audits": [{"lhs": l, "rhs": r, "audit": v.to_dict()} for l, r, v in subs_out],
        "row_audit": rows.to_dict() if rows is not None else None,
    }


def _ingest_wide(path: Path, mapping: Optional[dict[str, str]]) -> dict:
    names, data, stats = read_wide_csv(path)
    if data.shape[0] == 0:
        raise ConfigError("no usable rows after dropping spoiled ones")
    if mapping is None:
        mapping = dict(zip("xyzw", names))
    missing = [v for v in mapping.values() if v not in names]
    if missing:
        raise ConfigError(f"unknown column(s) {missing}")
    col = {sym: data[:, names.index(name)] for sym, name in mapping.items()}
    rows = np.arange(data.shape[0])

    def est(a, b):
        return correlate(col[a], col[b], rows, (mapping[a], mapping[b]))

    reports = []
    note = ["wide table: every column shares one row index"]
    if all(s in col for s in "xyzw"):
        r = eval_v4(est("x", "y"), est("x", "z"), est("w", "y"), est("w", "z"))
        r.audit = _classify([], [t.provenance for t in r.terms.values()], note)
        reports.append(r)
    if all(s in col for s in "xyz"):
        r = eval_v3(est("x", "y"), est("x", "z"), est("y", "z"))
        r.audit = _classify([], [t.provenance for t in r.terms.values()], note)
        reports.append(r)
    return {
        "input": str(path),
        "format": "wide",
        "columns": mapping,
        "rows_read": stats.rows_read,
        "rows_dropped": stats.rows_dropped,
        "abi_reports": [r.to_dict() for r in reports],
    }


# ---------------------------------------------------------------------------
# argument parsing


def _common(p: argparse.ArgumentParser, model_choices: Sequence[str], default_model: str) -> None:
    p.add_argument("--model", choices=model_choices, default=default_model)
    p.add_argument("--n", type=int, default=10_000, help="pairs (or chains) per setting")
    p.add_argument("--seed", type=int, default=None, help=f"falls back to ${SEED_ENV}, then 0")
    p.add_argument("--angles", type=str, default=None, help="comma list of radians")
    p.add_argument("--axis-set", type=str, default=None, help="comma list of radians for MCD tables")
    p.add_argument("--out-dir", default="bellsim-out")
    p.add_argument("--retain-history", action="store_true")
    p.add_argument("--order", choices=[o.value for o in Order], default="p-first")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--band", type=float, default=0.01, help="stabilization band for traces")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bellsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"bellsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, models in COMMAND_MODELS.items():
        default = models[0]
        p = sub.add_parser(name)
        _common(p, models, default)
    p = sub.add_parser("audit-replay", help="re-audit a saved ledger.json")
    p.add_argument("--ledger", required=True)
    p.add_argument("--out-dir", default=None)
    p = sub.add_parser("bound-oracle", help="exhaustive V3/V4 bounds over sign assignments")
    p.add_argument("--out-dir", default=None)
    p = sub.add_parser("ingest", help="estimates + Boole check for an external CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--model", choices=MODELS, default="qm")
    p.add_argument("--terms-from", default=None, help="summary.json or ledger.json naming the terms")
    p.add_argument("--columns", default=None, help="wide tables: x=name,y=name,z=name,w=name")
    p.add_argument("--out-dir", default=None)
    return parser


def _seed(arg: Optional[int]) -> int:
    if arg is not None:
        return arg
    env = os.environ.get(SEED_ENV)
    if env is None or env.strip() == "":
        return 0
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"${SEED_ENV} must be an integer, got {env!r}") from None


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    return ExperimentConfig(
        command=args.command,
        model=args.model,
        angles=parse_angles(args.angles) if args.angles else (),
        n=args.n,
        seed=_seed(args.seed),
        order=args.order,
        axis_set=parse_angles(args.axis_set) if args.axis_set else None,
        out_dir=args.out_dir,
        retain_history=args.retain_history,
        workers=args.workers,
        band=args.band,
    )


def _emit(doc: dict, out_dir: Optional[str], name: str) -> None:
    text = json.dumps(doc, indent=2) + "\n"
    if out_dir:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / name).write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def _parse_mapping(text: Optional[str]) -> Optional[dict[str, str]]:
    if not text:
        return None
    out = {}
    for part in text.split(","):
        sym, _, name = part.partition("=")
        if sym.strip() not in ("x", "y", "z", "w") or not name.strip():
            raise ConfigError(f"bad column mapping {part!r}; use x=name,y=name,...")
        out[sym.strip()] = name.strip()
    return out


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "bound-oracle":
            _emit({"V3": bound_oracle("V3"), "V4": bound_oracle("V4"),
                   "V3_assignments": 8, "V4_assignments": 16}, args.out_dir, "bounds.json")
            return EXIT_OK
        if args.command == "audit-replay":
            _emit(audit_replay(Path(args.ledger)), args.out_dir, "replay.json")
            return EXIT_OK
        if args.command == "ingest":
            doc = ingest(Path(args.input), args.model,
                         Path(args.terms_from) if args.terms_from else None,
                         _parse_mapping(args.columns))
            _emit(doc, args.out_dir, "ingest.json")
            return EXIT_OK
        result = run_experiment(config_from_args(args))
        brief = {k: result.summary.get(k) for k in ("command", "model", "seed")}
        brief["correlations"] = [{"label": c["label"], "value": c["value"], "n": c["n"]}
                                 for c in result.summary["correlations"]]
        brief["abi_reports"] = [{"kind": r["kind"], "lhs": r["lhs"], "satisfied": r["satisfied"],
                                 "verdict": r["audit"]["classification"]}
                                for r in result.summary.get("abi_reports", [])]
        brief["outputs"] = result.paths
        sys.stdout.write(json.dumps(brief, indent=2) + "\n")
        return result.exit_code
    except (ConfigError, UsageError, KeyError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"bellsim: error: {exc}\n")
        return EXIT_CONFIG
    except OSError as exc:
        sys.stderr.write(f"bellsim: I/O error: {exc}\n")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
