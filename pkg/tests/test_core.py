from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bellsim.core import (
    Axis,
    LogicalTime,
    Outcome,
    Particle,
    PrepOrigin,
    PreparationState,
    Side,
    UsageError,
    axis_dot,
    normalize_angle,
    pair_times_valid,
    rng_stream,
    stream_key,
)

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False)


@given(finite)
def test_normalize_range(a):
    v = normalize_angle(a)
    assert 0.0 <= v < 2 * math.pi


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_normalize_rejects_non_finite(bad):
    with pytest.raises(UsageError):
        normalize_angle(bad)


def test_axis_equality_is_modular():
    assert Axis(0.0) == Axis(2 * math.pi)
    assert Axis(-math.pi / 2) == Axis(3 * math.pi / 2)
    assert Axis(0.1) != Axis(0.1 + 1e-6)
    assert len({Axis(0.0), Axis(2 * math.pi), Axis(1.0)}) == 2


@given(finite)
def test_reverse_is_involution(a):
    ax = Axis(a)
    assert ax.reverse().reverse() == ax
    assert ax.reverse() != ax


@given(finite)
def test_dot_exact_for_equal_and_reversed(a):
    ax = Axis(a)
    assert axis_dot(ax, ax) == 1.0
    assert axis_dot(ax, ax.reverse()) == -1.0
    assert axis_dot(ax.reverse(), ax) == -1.0


@given(finite, finite)
def test_dot_matches_cosine(a, b):
    assert math.isclose(axis_dot(Axis(a), Axis(b)), math.cos(a - b), abs_tol=1e-9)


def test_outcome_validation():
    assert Outcome.of(1) is Outcome.UP
    assert Outcome.of(-1.0) is Outcome.DOWN
    for bad in (0, 2, 0.5):
        with pytest.raises(UsageError):
            Outcome.of(bad)


def test_side_codes():
    assert Side.from_code(Side.PP.code) is Side.PP
    assert Side.P.partner is Side.PP
    assert Side.PP.value == "p'"


def test_pair_times():
    assert pair_times_valid(0, 1, 2)
    assert pair_times_valid(0, 2, 1)
    assert pair_times_valid(0, 1, 1)
    assert not pair_times_valid(1, 1, 2)
    assert not pair_times_valid(0, 1, 3)
    with pytest.raises(UsageError):
        LogicalTime(-1)


def test_preparation_state_axis_orientation():
    s = PreparationState(Axis(0.3), 1, None, PrepOrigin.DIRECT_MEASUREMENT, -1)
    assert s.state_axis == Axis(0.3 + math.pi)
    assert s.predicted_correlation(Axis(0.3)) == 1.0
    with pytest.raises(UsageError):
        PreparationState(Axis(0.0), 2, 2)
    with pytest.raises(UsageError):
        PreparationState(Axis(0.0), 0, sign=0)


def test_overlap_is_half_open():
    a = PreparationState(Axis(0.0), 0, 2)
    b = PreparationState(Axis(1.0), 2, None)
    c = PreparationState(Axis(1.0), 1, 3)
    assert not a.overlaps(b)
    assert a.overlaps(c) and c.overlaps(a)
    assert b.active_at(10) and not a.active_at(2)


def test_particle_never_holds_two_states():
    p = Particle()
    p.prepare(Axis(0.0), 1, 1, PrepOrigin.PARTNER_COLLAPSE)
    p.prepare(Axis(1.0), -1, 1, PrepOrigin.DIRECT_MEASUREMENT)  # same tick: replaces
    p.prepare(Axis(2.0), 1, 3, PrepOrigin.DIRECT_MEASUREMENT)
    h = p.history
    assert [s.valid_from for s in h] == [0, 1, 3]
    assert h[1].prepared_axis == Axis(1.0) and h[1].valid_until == 3
    assert not any(x.overlaps(y) for i, x in enumerate(h) for y in h[i + 1:])
    with pytest.raises(UsageError):
        p.prepare(Axis(0.0), 1, 2, PrepOrigin.DIRECT_MEASUREMENT)


def test_streams_replay_and_differ():
    a = rng_stream(5, stream_key(1, 0, 0)).random(8)
    b = rng_stream(5, stream_key(1, 0, 0)).random(8)
    c = rng_stream(5, stream_key(1, 0, 1)).random(8)
    d = rng_stream(6, stream_key(1, 0, 0)).random(8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_stream_key_packing():
    assert stream_key(1, 2, 3) == (1 << 48) | (2 << 24) | 3
    keys = {stream_key(p, b, c) for p in range(3) for b in range(3) for c in range(3)}
    assert len(keys) == 27
    with pytest.raises(UsageError):
        stream_key(0, 1 << 24)
