"""Parser, classification, and rewrite tests for the SQL frontend."""

from __future__ import annotations

import itertools
import random

import pytest

from viewfence import sqlast
from viewfence.basic import (
    CERT_DISTINCT,
    CERT_KEY_WHERE,
    CERT_LIMIT1,
    CERT_PROJECTS_KEYS,
    CERT_UNION,
    BasicQuery,
    Cmp,
    Col,
    Const,
    InList,
)
from viewfence.errors import NotSplittable, SqlSyntaxError, UnsupportedFeature
from viewfence.frontend import (
    ForeignKey,
    NotBasic,
    classify_basic,
    resolve,
    rewrite_to_basic,
    split_in,
)
from viewfence.oracle import evaluate, make_database
from viewfence.schema import ColumnDef, Schema, TableDef

SCHEMA = Schema(
    (
        TableDef(
            "Users",
            (ColumnDef("UId", "int", False), ColumnDef("Name", "string", True)),
            ("UId",),
        ),
        TableDef(
            "Events",
            (
                ColumnDef("EId", "int", False),
                ColumnDef("Title", "string", True),
                ColumnDef("Duration", "int", True),
            ),
            ("EId",),
        ),
        TableDef(
            "Attendances",
            (
                ColumnDef("UId", "int", False),
                ColumnDef("EId", "int", False),
                ColumnDef("ConfirmedAt", "timestamp", True),
            ),
            ("UId", "EId"),
        ),
    )
)


def analyze(sql, params=(), schema=SCHEMA, fks=()):
    resolved = resolve(sqlast.parse(sql, list(params)), schema)
    out = classify_basic(resolved, schema)
    if isinstance(out, NotBasic):
        return rewrite_to_basic(resolved, schema, tuple(fks))
    from viewfence.frontend import RewriteResult

    return RewriteResult(out, True, False)


# ---------------------------------------------------------------------------
# parse


def test_parse_substitutes_positional_params():
    ast = sqlast.parse("SELECT * FROM Events WHERE EId = ?", [42])
    stmt = ast.selects[0]
    assert isinstance(stmt.where, sqlast.BinOp)
    assert stmt.where.rhs == sqlast.Lit(42)


def test_parse_no_params():
    ast = sqlast.parse("SELECT UId FROM Users")
    assert len(ast.selects) == 1
    assert ast.selects[0].items == (sqlast.ColItem(sqlast.ColRef(None, "UId")),)


def test_parse_group_by_rejected():
    with pytest.raises(UnsupportedFeature):
        sqlast.parse("SELECT * FROM T GROUP BY a")


def test_parse_exists_rejected():
    with pytest.raises(UnsupportedFeature):
        sqlast.parse("SELECT * FROM T WHERE EXISTS (SELECT 1 FROM U)")


def test_parse_param_count_mismatch():
    with pytest.raises(SqlSyntaxError):
        sqlast.parse("SELECT * FROM T WHERE a = ?", [1, 2])
    with pytest.raises(SqlSyntaxError):
        sqlast.parse("SELECT * FROM T WHERE a = ? AND b = ?", [1])


def test_parse_string_escape():
    ast = sqlast.parse("SELECT * FROM T WHERE a = 'it''s'")
    assert ast.selects[0].where.rhs == sqlast.Lit("it's")


# ---------------------------------------------------------------------------
# classify_basic


def test_projects_keys_certificate():
    rr = analyze("SELECT UId, Name FROM Users")
    assert rr.query.certificate == CERT_PROJECTS_KEYS
    assert rr.exact


def test_key_constrained_where_certificate():
    sql = (
        "SELECT e.EId FROM Events e, Attendances a "
        "WHERE e.EId = a.EId AND a.UId = 2"
    )
    rr = analyze(sql)
    assert rr.query.certificate == CERT_KEY_WHERE


def test_name_projection_not_basic():
    resolved = resolve(sqlast.parse("SELECT Name FROM Users"), SCHEMA)
    out = classify_basic(resolved, SCHEMA)
    assert isinstance(out, NotBasic)


def test_distinct_certificate():
    rr = analyze("SELECT DISTINCT Name FROM Users")
    assert rr.query.certificate == CERT_DISTINCT


def test_limit1_certificate():
    rr = analyze("SELECT Name FROM Users LIMIT 1")
    assert rr.query.certificate == CERT_LIMIT1
    assert not rr.limit_dropped


def test_union_certificate():
    rr = analyze("SELECT UId FROM Users UNION SELECT EId FROM Events")
    assert rr.query.certificate == CERT_UNION


# ---------------------------------------------------------------------------
# rewrites, checked against the oracle evaluator


def random_database(rng, schema=SCHEMA, max_rows=2):
    ints = [1, 2, 3]
    strings = ["a", "b"]
    stamps = [10, 20]
    rows = {}
    for t in schema.tables:
        pool = []
        for c in t.columns:
            vals = {"int": ints, "string": strings, "timestamp": stamps}[c.kind]
            pool.append(list(vals) + ([None] if c.nullable else []))
        cand = list(itertools.product(*pool))
        chosen = []
        seen_keys = set()
        for row in rng.sample(cand, min(len(cand), rng.randint(0, max_rows))):
            key = tuple(row[t.column_index(c)] for c in t.primary_key)
            if key in seen_keys:
                continue
            seen_keys.add(key)
            chosen.append(row)
        rows[t.name] = chosen
    return make_database(rows, schema)


def test_inner_join_flattening_exact():
    sql = (
        "SELECT e.EId, e.Title FROM Events e "
        "INNER JOIN Attendances a ON e.EId = a.EId WHERE a.UId = 2"
    )
    rr = analyze(sql)
    assert rr.exact
    flat = analyze(
        "SELECT e.EId, e.Title FROM Events e, Attendances a "
        "WHERE e.EId = a.EId AND a.UId = 2"
    )
    assert rr.query == flat.query
    rng = random.Random(7)
    for _ in range(50):
        db = random_database(rng)
        assert evaluate(rr.query, db, SCHEMA) == evaluate(flat.query, db, SCHEMA)


def test_order_by_appends_column():
    rr = analyze("SELECT EId FROM Events ORDER BY Duration")
    assert rr.exact
    cols = [c.column for c in rr.query.blocks[0].projection]
    assert cols == ["EId", "Duration"]


def test_limit_dropped_flag():
    rr = analyze("SELECT EId FROM Events LIMIT 5")
    assert rr.limit_dropped and not rr.exact
    assert rr.query.certificate == CERT_PROJECTS_KEYS


def test_sum_rewrite_and_derivability():
    rr = analyze("SELECT SUM(Duration) FROM Events")
    assert not rr.exact
    cols = [c.column for c in rr.query.blocks[0].projection]
    assert cols == ["EId", "Duration"]
    rng = random.Random(11)
    for _ in range(50):
        db = random_database(rng)
        rewritten = evaluate(rr.query, db, SCHEMA)
        expect = sum(v for _, v in ((r[0], r[1]) for r in rewritten) if v is not None)
        direct = sum(
            row[2] for row in db.rows("Events") if row[2] is not None
        )
        assert expect == direct


def test_left_join_on_fk_becomes_inner():
    fks = (ForeignKey("Attendances", ("EId",), "Events", ("EId",)),)
    sql = (
        "SELECT a.UId, a.EId FROM Attendances a "
        "LEFT JOIN Events e ON a.EId = e.EId WHERE e.Duration = 1"
    )
    rr = analyze(sql, fks=fks)
    assert rr.exact
    inner = analyze(
        "SELECT a.UId, a.EId FROM Attendances a, Events e "
        "WHERE a.EId = e.EId AND e.Duration = 1"
    )
    assert rr.query == inner.query


def test_left_join_without_fk_rejected():
    sql = "SELECT a.UId FROM Attendances a LEFT JOIN Events e ON a.EId = e.EId"
    with pytest.raises(UnsupportedFeature):
        analyze(sql)


def test_distinct_left_join_union_rewrite():
    sql = (
        "SELECT DISTINCT e.EId, e.Title FROM Events e "
        "LEFT JOIN Attendances a ON e.EId = a.EId "
        "WHERE e.Duration = 1 OR a.UId = 2"
    )
    rr = analyze(sql)
    assert rr.exact
    assert rr.query.certificate == CERT_UNION
    assert len(rr.query.blocks) == 2
    # Oracle equivalence against direct evaluation of the left join.
    rng = random.Random(13)
    for _ in range(80):
        db = random_database(rng)
        got = evaluate(rr.query, db, SCHEMA)
        expect = set()
        for e in db.rows("Events"):
            matches = [a for a in db.rows("Attendances") if a[1] == e[0]]
            if matches:
                for a in matches:
                    if (e[2] is not None and e[2] == 1) or a[0] == 2:
                        expect.add((e[0], e[1]))
            else:
                if e[2] is not None and e[2] == 1:
                    expect.add((e[0], e[1]))
        assert got == frozenset(expect)


def test_distinct_left_join_with_negation_refused():
    sql = (
        "SELECT DISTINCT e.EId FROM Events e "
        "LEFT JOIN Attendances a ON e.EId = a.EId WHERE a.ConfirmedAt IS NOT NULL"
    )
    with pytest.raises(UnsupportedFeature):
        analyze(sql)


# ---------------------------------------------------------------------------
# split_in


def test_split_in_basic():
    rr = analyze("SELECT * FROM Events WHERE EId IN (3, 5)")
    parts = split_in(rr.query)
    assert len(parts) == 2
    for part, v in zip(parts, (3, 5)):
        atom = part.blocks[0].predicate
        found = [
            p
            for p in (atom.parts if hasattr(atom, "parts") else [atom])
            if isinstance(p, Cmp) and isinstance(p.rhs, Const) and p.rhs.value == v
        ]
        assert found


def test_split_in_single_element():
    rr = analyze("SELECT * FROM Events WHERE EId IN (7)")
    parts = split_in(rr.query)
    eq = analyze("SELECT * FROM Events WHERE EId = 7")
    assert parts == [eq.query]


def test_split_in_refuses_not():
    rr = analyze("SELECT * FROM Events WHERE EId IN (3, 5) AND Duration NOT IN (1)")
    with pytest.raises(NotSplittable):
        split_in(rr.query)


def test_split_in_no_in():
    rr = analyze("SELECT * FROM Events WHERE EId = 3")
    with pytest.raises(NotSplittable):
        split_in(rr.query)


def test_split_in_union_equivalence_oracle():
    rr = analyze("SELECT * FROM Events WHERE EId IN (1, 2, 3) AND Duration = 1")
    parts = split_in(rr.query)
    rng = random.Random(5)
    for _ in range(50):
        db = random_database(rng)
        whole = evaluate(rr.query, db, SCHEMA)
        union = frozenset().union(*(evaluate(p, db, SCHEMA) for p in parts))
        assert whole == union
    for p in parts:
        for atom in _atoms(p):
            assert not isinstance(atom, InList)


def _atoms(q: BasicQuery):
    from viewfence.basic import And, Or

    def walk(pred):
        if isinstance(pred, (And, Or)):
            for x in pred.parts:
                yield from walk(x)
        else:
            yield pred

    for b in q.blocks:
        yield from walk(b.predicate)


# ---------------------------------------------------------------------------
# classification never certifies a duplicate-producing query


def test_certified_queries_never_duplicate():
    rng = random.Random(23)
    sqls = [
        "SELECT UId, Name FROM Users",
        "SELECT DISTINCT Name FROM Users",
        "SELECT e.EId FROM Events e, Attendances a WHERE e.EId = a.EId AND a.UId = 2",
        "SELECT u.UId, e.EId FROM Users u, Events e",
        "SELECT UId FROM Users UNION SELECT EId FROM Events",
        "SELECT a.UId, a.EId, a.ConfirmedAt FROM Attendances a WHERE a.EId = 1",
    ]
    structural = (CERT_PROJECTS_KEYS, CERT_KEY_WHERE)
    for sql in sqls:
        rr = analyze(sql)
        if rr.query.certificate not in structural:
            continue  # DISTINCT / LIMIT 1 / UNION dedupe mechanically
        for _ in range(40):
            db = random_database(rng, max_rows=3)
            rows = _evaluate_bag(rr.query, db)
            assert len(rows) == len(set(rows)), sql


def _evaluate_bag(q: BasicQuery, db):
    """Bag-semantics evaluation used to refute duplicate-freeness claims."""
    from viewfence.oracle import _column_index, eval_pred

    block = q.blocks[0]
    colidx = _column_index(SCHEMA, q.tables_used())
    out = []
    for rows in itertools.product(*[sorted(db.rows(t)) for t in block.tables]):
        if eval_pred(block.predicate, rows, colidx, block.tables):
            out.append(
                tuple(
                    rows[c.item][colidx[block.tables[c.item]][c.column]]
                    for c in block.projection
                )
            )
    return out
