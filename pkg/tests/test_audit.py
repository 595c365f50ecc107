from __future__ import annotations

import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bellsim.audit import (
    ProvenanceLedger,
    Verdict,
    audit_abi,
    audit_rows,
    locality_substitution_audit,
    nopl_check,
)
from bellsim.core import Axis, PrepOrigin, PreparationState, Side, UsageError
from bellsim.estimators import correlate, correlate_columns, eval_v4
from bellsim.events import EventLog
from bellsim.hv import generate_lhv_batch, generate_mcd_table
from bellsim.quantum import Order, generate_batch, sample_chains
from bellsim.core import rng_stream

Q = math.pi / 4


def state(angle, start, end, sign=1):
    return PreparationState(Axis(angle), start, end, PrepOrigin.DIRECT_MEASUREMENT, sign)


@st.composite
def histories(draw):
    k = draw(st.integers(1, 6))
    out = []
    for _ in range(k):
        start = draw(st.integers(0, 8))
        length = draw(st.one_of(st.none(), st.integers(1, 5)))
        angle = draw(st.sampled_from([0.0, math.pi / 2, math.pi, 1.0]))
        sign = draw(st.sampled_from([1, -1]))
        out.append(state(angle, start, None if length is None else start + length, sign))
    return sorted(out, key=lambda s: s.valid_from)


def brute_force_ok(history):
    # every tick sees at most one spin direction
    for t in range(0, 20):
        dirs = {round(s.state_axis.angle, 9) % round(2 * math.pi, 9) for s in history if s.active_at(t)}
        if len(dirs) > 1:
            return False
    return True


@settings(max_examples=300)
@given(histories())
def test_nopl_matches_tick_scan(history):
    assert nopl_check(history) == brute_force_ok(history)


def test_nopl_orientation():
    # (a, -1) and (reverse(a), +1) are the same state
    assert nopl_check([state(0.0, 0, None, -1), state(math.pi, 1, None, 1)])
    assert not nopl_check([state(0.0, 0, None, 1), state(math.pi, 1, None, 1)])
    assert nopl_check([state(0.0, 0, 2), state(1.0, 2, None)])
    with pytest.raises(UsageError):
        nopl_check([state(0.0, 3, None), state(0.0, 1, None)])


def chsh_log(model="qm", n=2000):
    settings_ = [(math.pi / 2, Q), (math.pi / 2, 3 * Q), (0.0, Q), (0.0, 3 * Q)]
    gen = generate_batch if model == "qm" else generate_lhv_batch
    logs = [gen(n, Axis(a), Axis(b), 1, k, Order.RANDOM, start_index=k * n).to_events()
            for k, (a, b) in enumerate(settings_)]
    return EventLog.concat(logs).sorted(), settings_


def terms_for(log, settings_):
    out = []
    for a, b in settings_:
        out.append(correlate_columns(log.column(Side.P, Axis(a)), log.column(Side.PP, Axis(b))))
    return out


@pytest.mark.parametrize("model", ["qm", "lhv_sign"])
def test_multi_batch_is_multi_sample(model):
    log, s = chsh_log(model)
    ledger = ProvenanceLedger(log)
    r = eval_v4(*terms_for(log, s), ledger)
    assert r.audit.classification is Verdict.MULTI_SAMPLE
    assert "disjoint" in r.audit.details[-1]


def test_single_qm_batch_has_no_conflict():
    log = generate_batch(3000, Axis(0.0), Axis(1.0), 2, 0, Order.RANDOM).to_events()
    ledger = ProvenanceLedger(log)
    t = correlate_columns(log.column(Side.P, Axis(0.0)), log.column(Side.PP, Axis(1.0)))
    v = audit_abi([t], ledger)
    assert v.classification is Verdict.SINGLE_SAMPLE
    assert audit_rows(ledger).classification is Verdict.SINGLE_SAMPLE


def test_chain_log_is_not_flagged():
    axes = [0.0, 1.0, 2.0, 1.0]
    out = sample_chains(500, axes, rng_stream(0, 0))
    k = len(axes)
    idx = np.repeat(np.arange(500), k)
    log = EventLog(idx, np.zeros(idx.size, np.int8), np.tile(axes, 500), np.tile(np.arange(1, k + 1), 500),
                   out.reshape(-1), np.zeros(idx.size, bool))
    ledger = ProvenanceLedger(log)
    assert audit_rows(ledger).classification is Verdict.SINGLE_SAMPLE
    h = ledger.history(0, Side.P)
    assert [s.valid_from for s in h] == [1, 2, 3, 4]
    assert nopl_check(h)


def test_mcd_lhv_single_sample():
    t = generate_mcd_table(2000, Axis(math.pi / 2), Axis(Q), [math.pi / 2, 0.0, Q, 3 * Q], "lhv", 0)
    ledger = ProvenanceLedger(t.to_events())
    assert ledger.model == "mcd_lhv"
    assert audit_rows(ledger).classification is Verdict.SINGLE_SAMPLE
    v = locality_substitution_audit(f"p@{math.pi / 2!r}", f"p'@{3 * Q!r}", ledger)
    assert v.classification is Verdict.SINGLE_SAMPLE


def test_mcd_collapse_mixed_on_every_row(tmp_path):
    n = 2000
    t = generate_mcd_table(n, Axis(0.0), Axis(Q), [0.0, Q, 1.0], "qm_collapse", 4, order=Order.RANDOM)
    ledger = ProvenanceLedger(t.to_events())
    v = audit_rows(ledger)
    assert v.classification is Verdict.MIXED_PREPARATION
    assert v.offending_indices.size == n
    prep = v.preparations_at(0)
    assert prep and all(not nopl_check(sorted([a, b], key=lambda s: s.valid_from)) for _, a, b in prep)
    path = tmp_path / "off.csv"
    v.write_offending_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0][0] == "pair_index" and len(rows) > n


def test_locality_audit_cases():
    n = 1000
    # one QM batch with p along 0 and p' along 3pi/4; substitute for <s(p,0), s(p,pi/4)>
    log = generate_batch(n, Axis(0.0), Axis(3 * Q), 3, 0).to_events()
    extra = generate_batch(n, Axis(0.0), Axis(Q + math.pi), 3, 1, start_index=n).to_events()
    ledger = ProvenanceLedger(EventLog.concat([log, extra]).sorted())
    lhs, rhs = f"p@{0.0!r}", f"p'@{Q + math.pi!r}"
    assert locality_substitution_audit(lhs, rhs, ledger).classification is Verdict.SINGLE_SAMPLE
    with pytest.raises(UsageError):
        locality_substitution_audit(lhs, lhs, ledger)
    # equal axes need no second preparation
    same = generate_batch(n, Axis(0.0), Axis(math.pi), 3, 2).to_events()
    led2 = ProvenanceLedger(same)
    assert locality_substitution_audit(lhs, f"p'@{math.pi!r}", led2).classification is Verdict.SINGLE_SAMPLE


def test_locality_audit_collapse_table_mixed():
    t = generate_mcd_table(500, Axis(0.0), Axis(2.0), [0.0, 2.0, 1.0], "qm_collapse", 5)
    ledger = ProvenanceLedger(t.to_events())
    v = locality_substitution_audit(f"p@{0.0!r}", f"p'@{1.0!r}", ledger)
    assert v.classification is Verdict.MIXED_PREPARATION


def test_ledger_rejects_untraceable_terms():
    log, s = chsh_log()
    ledger = ProvenanceLedger(log)
    fake = correlate([1, -1], [1, 1], [10**9, 10**9 + 1], (f"p@{math.pi / 2!r}", f"p'@{Q!r}"))
    with pytest.raises(UsageError):
        audit_abi([fake], ledger)
    with pytest.raises(UsageError):
        ledger.column("p@9.0")
    with pytest.raises(UsageError):
        ProvenanceLedger(log, "nonsense")
