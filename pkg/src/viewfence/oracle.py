"""Concrete evaluation of basic queries on small databases.

This is the reference implementation of the two-valued SQL semantics used
throughout: a comparison holds only when both operands are non-NULL, and
NOT IN / IS NOT NULL are classical negations of their positive forms. The
brute-force decision procedures (bruteforce.py) and the SMT encoder are both
tested against this evaluator.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .basic import And, BasicQuery, Cmp, Col, Const, InList, NullTest, Operand, Or, Pred
from .errors import ResolutionError
from .policy import Constraint, PolicyBundle, PrimaryKeyUnique, containment_rendering
from .schema import Schema

Row = tuple[object, ...]


@dataclass
class Database:
    """Per-table sets of rows; None marks NULL."""

    tables: dict[str, frozenset[Row]]

    def rows(self, name: str) -> frozenset[Row]:
        return self.tables.get(name, frozenset())


def make_database(rows: dict[str, list[tuple]], schema: Schema | None = None) -> Database:
    tables = {name: frozenset(tuple(r) for r in rs) for name, rs in rows.items()}
    db = Database(tables)
    if schema is not None:
        validate_database(db, schema)
    return db


def validate_database(db: Database, schema: Schema) -> None:
    from .schema import kinds_compatible, value_kind

    for name, rows in db.tables.items():
        tdef = schema.table(name)
        for row in rows:
            if len(row) != len(tdef.columns):
                raise ResolutionError(f"row arity mismatch in table {name}: {row}")
            for value, cdef in zip(row, tdef.columns):
                if value is None:
                    if not cdef.nullable:
                        raise ResolutionError(f"NULL in non-nullable {name}.{cdef.name}")
                elif not kinds_compatible(value_kind(value), cdef.kind):
                    raise ResolutionError(f"value {value!r} invalid for {name}.{cdef.name}")


def _operand_value(op: Operand, rows: tuple[Row, ...], db_schema: dict[str, dict[str, int]], tables: tuple[str, ...]) -> object:
    if isinstance(op, Col):
        return rows[op.item][db_schema[tables[op.item]][op.column]]
    if isinstance(op, Const):
        return op.value
    raise ResolutionError(f"cannot evaluate open operand {op}")


def eval_pred(pred: Pred, rows: tuple[Row, ...], colidx: dict[str, dict[str, int]], tables: tuple[str, ...]) -> bool:
    if isinstance(pred, Cmp):
        a = _operand_value(pred.lhs, rows, colidx, tables)
        b = _operand_value(pred.rhs, rows, colidx, tables)
        if a is None or b is None:
            return False
        if pred.op == "eq":
            return a == b
        if pred.op == "lt":
            return a < b
        if pred.op == "le":
            return a <= b
        raise ValueError(pred.op)
    if isinstance(pred, InList):
        a = _operand_value(pred.lhs, rows, colidx, tables)
        hit = a is not None and any(
            (v := _operand_value(val, rows, colidx, tables)) is not None and a == v
            for val in pred.values
        )
        return not hit if pred.negated else hit
    if isinstance(pred, NullTest):
        a = _operand_value(pred.operand, rows, colidx, tables)
        return (a is not None) if pred.negated else (a is None)
    if isinstance(pred, And):
        return all(eval_pred(p, rows, colidx, tables) for p in pred.parts)
    if isinstance(pred, Or):
        return any(eval_pred(p, rows, colidx, tables) for p in pred.parts)
    raise TypeError(pred)


def _column_index(schema: Schema, tables: set[str]) -> dict[str, dict[str, int]]:
    return {
        t: {c.name: i for i, c in enumerate(schema.table(t).columns)} for t in tables
    }


def evaluate(q: BasicQuery, db: Database, schema: Schema) -> frozenset[Row]:
    """Set-semantics result of a closed basic query."""
    colidx = _column_index(schema, q.tables_used())
    out: set[Row] = set()
    for block in q.blocks:
        row_sources = [sorted(db.rows(t)) for t in block.tables]
        for rows in itertools.product(*row_sources):
            if not eval_pred(block.predicate, rows, colidx, block.tables):
                continue
            out.add(
                tuple(
                    _operand_value(p, rows, colidx, block.tables) for p in block.projection
                )
            )
    return frozenset(out)


def check_key_uniqueness(db: Database, schema: Schema) -> bool:
    for tdef in schema.tables:
        rows = db.rows(tdef.name)
        for key in tdef.keys:
            idx = [tdef.column_index(c) for c in key]
            seen = set()
            for row in rows:
                kv = tuple(row[i] for i in idx)
                if any(v is None for v in kv):
                    continue
                if kv in seen:
                    return False
                seen.add(kv)
    return True


def check_constraints(db: Database, policy: PolicyBundle) -> bool:
    """True iff every constraint's containment rendering holds, plus keys."""
    if not check_key_uniqueness(db, policy.schema):
        return False
    for c in policy.constraints:
        if isinstance(c, PrimaryKeyUnique):
            continue  # covered by the direct key check above
        lhs, rhs = containment_rendering(c, policy.schema)
        if not evaluate(lhs, db, policy.schema) <= evaluate(rhs, db, policy.schema):
            return False
    return True
