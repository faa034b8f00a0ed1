from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from juliacert.numerics import Dyadic, Interval
from juliacert.oracle import (
    CommitViolation,
    CostMeter,
    DeferredOracle,
    OracleError,
    QueryRecord,
    answer_valid_for,
    band,
    commit_bit,
    interval_depth,
    oracle_from_dyadic,
    oracle_from_enclosure,
    query,
)
from juliacert.parabolic import find_parabolic_root


def test_query_exact_quarter():
    meter = CostMeter()
    v = query(oracle_from_dyadic(Dyadic(1, -2)), meter, 3)
    assert v.in_dn(3) and abs(v.to_fraction() - Fraction(1, 4)) < Fraction(1, 4)
    assert meter.ticks == 3


def test_query_minus_seven_quarters_coarse():
    meter = CostMeter()
    v = query(oracle_from_dyadic(Dyadic.parse("-7/4")), meter, 1)
    assert v == Fraction(-3, 2)
    assert abs(v.to_fraction() + Fraction(7, 4)) < 1
    assert meter.ticks == 1


def test_dyadic_tape_examples():
    zero = oracle_from_dyadic(0)
    assert all(zero.provide(m) == 0 for m in range(1, 40))
    assert oracle_from_dyadic(Dyadic.parse("-7/4")).provide(10) == Fraction(-7, 4)


def test_precision_must_be_positive():
    with pytest.raises(ValueError):
        query(oracle_from_dyadic(0), CostMeter(), 0)


@given(st.lists(st.integers(1, 256), max_size=40), st.integers(-(1 << 40), 1 << 40))
def test_cost_law(ms, v):
    meter = CostMeter()
    tape = oracle_from_dyadic(Dyadic(v, -38))
    for m in ms:
        query(tape, meter, m)
    assert meter.ticks == sum(ms)
    assert meter.max_precision_queried == max(ms, default=0)
    assert [r.m for r in meter.transcript] == ms


@given(st.integers(-(1 << 60), 1 << 60), st.integers(-70, 0), st.integers(1, 256))
def test_guarantee_law(mant, e, m):
    c = Dyadic(mant, e)
    v = oracle_from_dyadic(c).provide(m)
    assert v.in_dn(m)
    assert abs(v.to_fraction() - c.to_fraction()) < Fraction(1, 1 << (m - 1))


@given(st.integers(-(1 << 60), 1 << 60), st.integers(1, 60), st.integers(1, 60))
def test_consistency_between_precisions(mant, m, m2):
    tape = oracle_from_dyadic(Dyadic(mant, -62))
    a, b = tape.provide(m).to_fraction(), tape.provide(m2).to_fraction()
    assert abs(a - b) < Fraction(1, 1 << (m - 1)) + Fraction(1, 1 << (m2 - 1))


def test_root_tape_against_fine_refinement():
    root = find_parabolic_root(3, (-1.8, -1.7))
    v = root.oracle().provide(40)
    fine = root.oracle().provide(200)
    assert v.in_dn(40)
    assert abs(v.to_fraction() - fine.to_fraction()) < Fraction(1, 1 << 39)


def test_enclosure_tape_checks_width():
    bad = oracle_from_enclosure(lambda bits: Interval(0, 1), {"kind": "test"})
    with pytest.raises(OracleError):
        bad.provide(5)


def test_band_is_open():
    lo, hi = band(2, Dyadic.parse("-7/4"))
    assert (lo, hi) == (Fraction(-9, 4), Fraction(-5, 4))
    assert not answer_valid_for(2, Dyadic.parse("-7/4"), Interval(lo, -1.5))


def test_commit_left_half():
    d = DeferredOracle(Interval(-2, -1))
    commit_bit(d, "left")
    assert d.interval == Interval(-2, Dyadic.parse("-3/2"))


def test_commit_respects_coarse_band():
    d = DeferredOracle(Interval(-2, -1))
    a = d.provide(2)
    assert a == Fraction(-3, 2)
    d2 = DeferredOracle(Interval(Dyadic.parse("-15/8"), Dyadic.parse("-13/8")))
    served = d2.provide(2)
    assert served == Fraction(-7, 4)
    choice = Interval(Dyadic.from_float(-1.80).round_dn(20, "ceil"), Dyadic.from_float(-1.70).round_dn(20, "floor"))
    # brute force over the endpoints: both lie strictly inside (-9/4, -5/4)
    assert all(Fraction(-9, 4) < x.to_fraction() < Fraction(-5, 4) for x in (choice.lo, choice.hi))
    d2.commit(choice)
    assert d2.interval == choice


def test_commit_outside_fine_band_rejected():
    d = DeferredOracle(Interval(Dyadic.parse("-7/4") - Dyadic(1, -4), Dyadic.parse("-7/4") + Dyadic(1, -4)))
    assert d.provide(10) == Fraction(-7, 4)
    far = Dyadic.parse("-7/4") + Dyadic(1, -5)
    with pytest.raises(CommitViolation) as err:
        d.commit(Interval(far, far + Dyadic(1, -10)))
    assert (err.value.m, err.value.answer) == (10, Fraction(-7, 4))


def test_commit_must_shrink_and_stay_inside():
    d = DeferredOracle(Interval(0, 1))
    with pytest.raises(OracleError):
        d.commit(Interval(0, 1))
    with pytest.raises(OracleError):
        d.commit(Interval(Dyadic(1, -1), 2))


def test_strict_oracle_refuses_deep_queries():
    d = DeferredOracle(Interval(0, 1), allow_lazy=False)
    with pytest.raises(OracleError):
        d.provide(8)


@given(st.integers(1, 40), st.integers(0, 1 << 20))
def test_lazy_answers_become_constraints(m, k):
    d = DeferredOracle(Interval(0, 1))
    a = d.provide(m)
    lo = Dyadic(k, -20)
    sub = Interval(lo, lo + Dyadic(1, -24))
    if answer_valid_for(m, a, sub) and Interval(0, 1).contains(sub):
        d.commit(sub)
        assert d.interval == sub
    else:
        with pytest.raises(OracleError):
            d.commit(sub)


def test_interval_depth():
    assert interval_depth(Interval(0, Dyadic(1, -5))) == 5
    assert interval_depth(Interval(0, Dyadic(3, -5))) == 3


def test_record_round_trip():
    r = QueryRecord(7, Dyadic(-5, -3), 12)
    assert QueryRecord.from_json(r.to_json()) == r
