"""Evaluator and brute-force decision procedure tests."""

from __future__ import annotations

import random
from dataclasses import dataclass

import pytest

from viewfence import sqlast
from viewfence.basic import BasicQuery
from viewfence.bruteforce import (
    COMPLIANT,
    NONCOMPLIANT,
    DomainSpec,
    make_domain,
    oracle_decide,
    trace_feasible,
)
from viewfence.frontend import NotBasic, classify_basic, resolve, rewrite_to_basic
from viewfence.oracle import check_constraints, evaluate, make_database
from viewfence.policy import instantiate_view


@dataclass(frozen=True)
class Obs:
    query: BasicQuery
    row: tuple
    origin: int = 0
    limit_dropped: bool = False


def q(sql, schema, params=()):
    resolved = resolve(sqlast.parse(sql, list(params)), schema)
    out = classify_basic(resolved, schema)
    if isinstance(out, NotBasic):
        return rewrite_to_basic(resolved, schema).query
    return out


CAL_DOM = DomainSpec(
    pools={
        "int": (1, 2, 5, 42),
        "string": ("a", "b"),
        "timestamp": (10, 20),
        "bool": (False, True),
    },
    max_rows=2,
)


# ---------------------------------------------------------------------------
# evaluate


def test_v4_returns_all_attendees_of_attended_event(calendar):
    db = make_database(
        {
            "Users": [(2, "a"), (7, "b")],
            "Events": [(5, "a", 1)],
            "Attendances": [(2, 5, 10), (7, 5, 20)],
        },
        calendar.schema,
    )
    v4 = next(v for v in calendar.views if v.name == "V4")
    ctx = calendar.make_context({"MyUId": 2, "NOW": 10})
    got = evaluate(instantiate_view(v4, ctx), db, calendar.schema)
    assert got == frozenset({(2, 5, 10), (7, 5, 20)})


def test_empty_database(calendar):
    db = make_database({}, calendar.schema)
    for v in calendar.views:
        ctx = calendar.make_context({"MyUId": 1, "NOW": 10})
        assert evaluate(instantiate_view(v, ctx), db, calendar.schema) == frozenset()


def test_two_valued_null_semantics(calendar):
    db = make_database(
        {"Attendances": [(1, 5, None), (1, 42, 10)]}, calendar.schema
    )
    # x = y is false when either side is NULL
    sel = q("SELECT UId, EId FROM Attendances WHERE ConfirmedAt = 10", calendar.schema)
    assert evaluate(sel, db, calendar.schema) == frozenset({(1, 42)})
    # comparisons are false when either side is NULL
    lt = q("SELECT UId, EId FROM Attendances WHERE ConfirmedAt < 20", calendar.schema)
    assert evaluate(lt, db, calendar.schema) == frozenset({(1, 42)})
    # IS NULL / IS NOT NULL are classical
    nn = q(
        "SELECT UId, EId FROM Attendances WHERE ConfirmedAt IS NULL", calendar.schema
    )
    assert evaluate(nn, db, calendar.schema) == frozenset({(1, 5)})
    ninn = q(
        "SELECT UId, EId FROM Attendances WHERE ConfirmedAt IS NOT NULL",
        calendar.schema,
    )
    assert evaluate(ninn, db, calendar.schema) == frozenset({(1, 42)})
    # NOT IN passes NULLs under the two-valued reading
    notin = q(
        "SELECT UId, EId FROM Attendances WHERE ConfirmedAt NOT IN (10)",
        calendar.schema,
    )
    assert evaluate(notin, db, calendar.schema) == frozenset({(1, 5)})


# ---------------------------------------------------------------------------
# check_constraints


def test_duplicate_key_fails(calendar):
    db = make_database(
        {"Attendances": [(1, 5, 10), (1, 5, 20)]}, calendar.schema
    )
    assert not check_constraints(db, calendar)


def test_dangling_fk_fails():
    from tests.conftest import CALENDAR_POLICY
    from viewfence.policy import loads_policy

    data = dict(
        CALENDAR_POLICY,
        constraints=[
            {
                "kind": "foreign_key",
                "src_table": "Attendances",
                "src_columns": ["EId"],
                "dst_table": "Events",
                "dst_columns": ["EId"],
            }
        ],
    )
    bundle = loads_policy(data)
    bad = make_database({"Attendances": [(1, 5, 10)]}, bundle.schema)
    good = make_database(
        {"Attendances": [(1, 5, 10)], "Events": [(5, "a", 1)]}, bundle.schema
    )
    assert not check_constraints(bad, bundle)
    assert check_constraints(good, bundle)


# ---------------------------------------------------------------------------
# oracle_decide


def calendar_trace(calendar):
    q1 = q("SELECT * FROM Users WHERE UId = 1", calendar.schema)
    q2 = q("SELECT * FROM Attendances WHERE UId = 1 AND EId = 42", calendar.schema)
    return [
        Obs(q1, (1, "a"), 0),
        Obs(q2, (1, 42, 10), 1),
    ]


def test_calendar_query3_compliant(calendar):
    ctx = calendar.make_context({"MyUId": 1, "NOW": 10})
    q3 = q("SELECT * FROM Events WHERE EId = ?", calendar.schema, [42])
    trace = calendar_trace(calendar)
    dom = DomainSpec(
        pools={"int": (1, 42, 5), "string": ("a", "b"), "timestamp": (10,), "bool": (False, True)},
        max_rows=2,
    )
    for mode in ("compliance", "strong"):
        dec = oracle_decide(mode, q3, trace, calendar, ctx, dom, max_pair_checks=100_000_000)
        assert dec.status == COMPLIANT, (mode, dec.note)


def test_standalone_event_title_noncompliant(calendar):
    ctx = calendar.make_context({"MyUId": 2, "NOW": 10})
    sel = q("SELECT Title FROM Events WHERE EId = 5 LIMIT 1", calendar.schema)
    dec = oracle_decide("compliance", sel, [], calendar, ctx, CAL_DOM)
    assert dec.status == NONCOMPLIANT
    d1, d2 = dec.witness
    assert check_constraints(d1, calendar) and check_constraints(d2, calendar)
    # the witness pair agrees on every view but differs on the query
    for v in calendar.views:
        vq = instantiate_view(v, ctx)
        assert evaluate(vq, d1, calendar.schema) == evaluate(vq, d2, calendar.schema)
    assert evaluate(sel, d1, calendar.schema) != evaluate(sel, d2, calendar.schema)


def test_view_identical_query_compliant(calendar):
    ctx = calendar.make_context({"MyUId": 2, "NOW": 10})
    sel = q("SELECT UId, Name FROM Users", calendar.schema)
    for mode in ("compliance", "strong"):
        dec = oracle_decide(mode, sel, [], calendar, ctx, CAL_DOM)
        assert dec.status == COMPLIANT


def test_coattendee_names_join_compliant(calendar):
    # Answerable by combining V4 (attendee ids) with V1 (names).
    ctx = calendar.make_context({"MyUId": 2, "NOW": 10})
    sel = q(
        "SELECT DISTINCT u.Name FROM Users u "
        "JOIN Attendances a_other ON a_other.UId = u.UId "
        "JOIN Attendances a_me ON a_me.EId = a_other.EId "
        "WHERE a_me.UId = 2",
        calendar.schema,
    )
    dom = DomainSpec(
        pools={"int": (1, 2), "string": ("a", "b"), "timestamp": (10,), "bool": (False, True)},
        max_rows=2,
    )
    dec = oracle_decide("strong", sel, [], calendar, ctx, dom, max_pair_checks=200_000_000)
    assert dec.status == COMPLIANT, dec.note


# ---------------------------------------------------------------------------
# trace_feasible


def test_trace_feasible_calendar(calendar):
    assert trace_feasible(calendar_trace(calendar), calendar, CAL_DOM)


def test_trace_feasible_empty(calendar):
    assert trace_feasible([], calendar, CAL_DOM)


def test_trace_infeasible_conflicting_rows(calendar):
    sel = q("SELECT * FROM Users WHERE UId = 1", calendar.schema)
    trace = [Obs(sel, (1, "a"), 0), Obs(sel, (1, "b"), 1)]
    assert not trace_feasible(trace, calendar, CAL_DOM)


# ---------------------------------------------------------------------------
# properties: strong implies plain, trace monotonicity


def test_strong_implies_plain_and_monotone(calendar):
    rng = random.Random(99)
    ctx = calendar.make_context({"MyUId": 1, "NOW": 10})
    dom = DomainSpec(
        pools={"int": (1, 2, 42), "string": ("a",), "timestamp": (10,), "bool": (False, True)},
        max_rows=2,
    )
    queries = [
        "SELECT * FROM Events WHERE EId = 42",
        "SELECT * FROM Attendances WHERE UId = 1",
        "SELECT UId, Name FROM Users",
        "SELECT Title FROM Events WHERE EId = 2 LIMIT 1",
        "SELECT * FROM Events WHERE EId IN (1, 2)",
    ]
    q2 = q("SELECT * FROM Attendances WHERE UId = 1 AND EId = 42", calendar.schema)
    base = [Obs(q2, (1, 42, 10), 0)]
    extra = base + [Obs(q("SELECT * FROM Users WHERE UId = 2", calendar.schema), (2, "a"), 1)]
    for sql in queries:
        sel = q(sql, calendar.schema)
        strong = oracle_decide("strong", sel, base, calendar, ctx, dom)
        plain = oracle_decide("compliance", sel, base, calendar, ctx, dom)
        if strong.status == COMPLIANT:
            assert plain.status == COMPLIANT, sql
        # monotonicity: a superset trace keeps strong compliance
        if strong.status == COMPLIANT:
            bigger = oracle_decide("strong", sel, extra, calendar, ctx, dom)
            assert bigger.status == COMPLIANT, sql
