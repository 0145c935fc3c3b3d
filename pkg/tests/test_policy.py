"""Policy bundle loading, view instantiation, constraint renderings."""

from __future__ import annotations

import itertools
import random

import pytest

from tests.conftest import CALENDAR_POLICY
from viewfence.basic import CERT_KEY_WHERE, Const, render_query
from viewfence.errors import NonBasicView, ParseError, ResolutionError, UnboundParameter
from viewfence.frontend import ForeignKey
from viewfence.oracle import evaluate, make_database
from viewfence.policy import (
    ForeignKeyConstraint,
    PrimaryKeyUnique,
    containment_rendering,
    dump_policy,
    instantiate_view,
    loads_policy,
)


def test_calendar_bundle_loads(calendar):
    assert len(calendar.schema.tables) == 3
    assert len(calendar.views) == 4
    # PK/unique constraints are generated from the table declarations.
    pk_tables = {c.table for c in calendar.constraints if isinstance(c, PrimaryKeyUnique)}
    assert pk_tables == {"Users", "Events", "Attendances"}


def test_empty_views_bundle():
    data = {
        "tables": [
            {"name": "T", "columns": [{"name": "id", "type": "int"}], "primary_key": ["id"]}
        ],
        "views": [],
    }
    bundle = loads_policy(data)
    assert bundle.views == ()


def test_subquery_view_rewritten_to_join(calendar):
    v3 = next(v for v in calendar.views if v.name == "V3")
    assert v3.query.certificate == CERT_KEY_WHERE
    assert v3.query.blocks[0].tables == ("Events", "Attendances")


def test_instantiate_view_v2(calendar):
    v2 = next(v for v in calendar.views if v.name == "V2")
    ctx = calendar.make_context({"MyUId": 2, "NOW": 100})
    q = instantiate_view(v2, ctx)
    consts = [
        op
        for b in q.blocks
        for op in _operands(b.predicate)
        if isinstance(op, Const)
    ]
    assert consts == [Const("int", 2)]


def _operands(pred):
    from viewfence.basic import iter_pred_operands

    return list(iter_pred_operands(pred))


def test_instantiate_parameterless_view(calendar):
    v1 = next(v for v in calendar.views if v.name == "V1")
    ctx = calendar.make_context({"MyUId": 7, "NOW": 0})
    assert instantiate_view(v1, ctx) == v1.query


def test_instantiate_same_context_structurally_identical(calendar):
    for v in calendar.views:
        c1 = calendar.make_context({"MyUId": 3, "NOW": 5})
        c2 = calendar.make_context({"MyUId": 3, "NOW": 5})
        assert instantiate_view(v, c1) == instantiate_view(v, c2)


def test_v3_instantiation_matches_subquery_semantics(calendar):
    """Join form of V3 evaluates like the direct IN-subquery semantics."""
    v3 = next(v for v in calendar.views if v.name == "V3")
    rng = random.Random(3)
    for _ in range(40):
        db = _random_calendar_db(rng, calendar.schema)
        ctx = calendar.make_context({"MyUId": rng.choice([1, 2]), "NOW": 50})
        got = evaluate(instantiate_view(v3, ctx), db, calendar.schema)
        me = ctx.params["MyUId"]
        attended = {a[1] for a in db.rows("Attendances") if a[0] == me}
        expect = {e for e in db.rows("Events") if e[0] in attended}
        assert got == frozenset(expect)


def _random_calendar_db(rng, schema):
    ids = [1, 2, 42]
    rows = {"Users": set(), "Events": set(), "Attendances": set()}
    for uid in rng.sample(ids, rng.randint(0, 2)):
        rows["Users"].add((uid, rng.choice(["x", "y"])))
    for eid in rng.sample(ids, rng.randint(0, 2)):
        rows["Events"].add((eid, rng.choice(["x", "y"]), rng.choice([1, 2])))
    seen = set()
    for _ in range(rng.randint(0, 3)):
        key = (rng.choice(ids), rng.choice(ids))
        if key in seen:
            continue
        seen.add(key)
        rows["Attendances"].add((*key, rng.choice([10, None])))
    return make_database({k: list(v) for k, v in rows.items()}, schema)


def test_context_missing_parameter(calendar):
    with pytest.raises(UnboundParameter):
        calendar.make_context({"NOW": 1})
    with pytest.raises(UnboundParameter):
        calendar.make_context({"MyUId": 1})


def test_unbound_view_parameter(calendar):
    from viewfence.policy import RequestContext

    v2 = next(v for v in calendar.views if v.name == "V2")
    with pytest.raises(UnboundParameter):
        instantiate_view(v2, RequestContext({"NOW": 1}))


def test_policy_round_trip(calendar):
    dumped = dump_policy(calendar)
    again = loads_policy(dumped)
    assert again == calendar
    assert dump_policy(again) == dumped


def test_load_is_deterministic():
    assert loads_policy(CALENDAR_POLICY) == loads_policy(CALENDAR_POLICY)


def test_unknown_table_in_view():
    data = dict(CALENDAR_POLICY, views=[{"name": "V", "sql": "SELECT * FROM Ghost"}])
    with pytest.raises(ResolutionError):
        loads_policy(data)


def test_approximate_view_rejected():
    data = dict(CALENDAR_POLICY, views=[{"name": "V", "sql": "SELECT SUM(Duration) FROM Events"}])
    with pytest.raises(NonBasicView):
        loads_policy(data)


def test_fk_rendering_matches_referential_check():
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
        views=[],
    )
    bundle = loads_policy(data)
    fk = next(c for c in bundle.constraints if isinstance(c, ForeignKeyConstraint))
    lhs, rhs = containment_rendering(fk, bundle.schema)
    rng = random.Random(17)
    for _ in range(100):
        db = _random_calendar_db(rng, bundle.schema)
        direct = all(
            any(e[0] == a[1] for e in db.rows("Events")) for a in db.rows("Attendances")
        )
        rendered = evaluate(lhs, db, bundle.schema) <= evaluate(rhs, db, bundle.schema)
        assert rendered == direct


def test_pk_rendering_detects_duplicates(calendar):
    pk = next(
        c
        for c in calendar.constraints
        if isinstance(c, PrimaryKeyUnique) and c.table == "Users"
    )
    lhs, rhs = containment_rendering(pk, calendar.schema)
    good = make_database({"Users": [(1, "a"), (2, "a")]}, calendar.schema)
    bad = make_database({"Users": [(1, "a"), (1, "b")]}, calendar.schema)
    assert evaluate(lhs, good, calendar.schema) <= evaluate(rhs, good, calendar.schema)
    assert not (
        evaluate(lhs, bad, calendar.schema) <= evaluate(rhs, bad, calendar.schema)
    )
