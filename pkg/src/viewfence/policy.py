"""Policy bundle: schema, constraints, views, and request contexts.

The bundle is loaded from a JSON file (tables / constraints / views /
context). Views are SQL strings with ?Name placeholders for context
parameters; IN-subqueries in views are rewritten into joins so every view
becomes an exact basic query. Every constraint has a canonical containment
rendering lhs ⊆ rhs used by the oracle and the encoder.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

from . import sqlast
from .basic import (
    BasicQuery,
    Cmp,
    Col,
    Const,
    NullTest,
    Operand,
    Or,
    SelectBlock,
    TRUE,
    Var,
    conj,
    disj,
    is_closed,
    map_query_operands,
)
from .errors import NonBasicView, ParseError, ResolutionError, UnboundParameter, UnsupportedFeature
from .frontend import (
    ForeignKey,
    NotBasic,
    classify_basic,
    resolve,
    rewrite_to_basic,
)
from .schema import COLUMN_KINDS, ColumnDef, Schema, TableDef, kinds_compatible, value_kind

FORMAT_VERSION = 1


@dataclass(frozen=True)
class PrimaryKeyUnique:
    table: str
    columns: tuple[str, ...]


@dataclass(frozen=True)
class ForeignKeyConstraint:
    fk: ForeignKey


@dataclass(frozen=True)
class Containment:
    lhs: BasicQuery
    rhs: BasicQuery
    lhs_sql: str = ""
    rhs_sql: str = ""


Constraint = PrimaryKeyUnique | ForeignKeyConstraint | Containment


@dataclass(frozen=True)
class View:
    name: str
    sql: str
    query: BasicQuery  # may contain Var(ctx=True) leaves


@dataclass(frozen=True)
class RequestContext:
    params: dict[str, object]

    def value(self, name: str) -> object:
        if name not in self.params:
            raise UnboundParameter(f"context parameter {name} is not bound")
        return self.params[name]


@dataclass(frozen=True)
class PolicyBundle:
    schema: Schema
    foreign_keys: tuple[ForeignKey, ...]
    constraints: tuple[Constraint, ...]
    views: tuple[View, ...]
    context_decl: dict[str, str]

    def make_context(self, params: dict[str, object]) -> RequestContext:
        for name, kind in self.context_decl.items():
            if name == "NOW" and name not in params:
                raise UnboundParameter("context parameter NOW is not bound")
            if name not in params:
                raise UnboundParameter(f"context parameter {name} is not bound")
            v = params[name]
            if v is not None and not kinds_compatible(value_kind(v), kind):
                raise ParseError(f"context parameter {name} expects {kind}, got {v!r}")
        extra = set(params) - set(self.context_decl)
        if extra:
            raise ParseError(f"unknown context parameters: {sorted(extra)}")
        return RequestContext(dict(params))


def instantiate_view(view: View, ctx: RequestContext) -> BasicQuery:
    """V^ctx: replace context parameters with the context's constants."""

    def subst(op: Operand) -> Operand:
        if isinstance(op, Var) and op.ctx:
            return Const(op.kind, ctx.value(op.name))
        return op

    out = map_query_operands(view.query, subst)
    assert is_closed(out)
    return out


# ---------------------------------------------------------------------------
# Containment renderings


def containment_rendering(c: Constraint, schema: Schema) -> tuple[BasicQuery, BasicQuery]:
    """Render any constraint as lhs ⊆ rhs over basic queries."""
    if isinstance(c, Containment):
        return c.lhs, c.rhs
    if isinstance(c, ForeignKeyConstraint):
        fk = c.fk
        src = schema.table(fk.src_table)
        dst = schema.table(fk.dst_table)
        src_cols = tuple(Col(0, n, src.column(n).kind) for n in fk.src_cols)
        dst_cols = tuple(Col(0, n, dst.column(n).kind) for n in fk.dst_cols)
        lhs_pred = conj([NullTest(col, negated=True) for col in src_cols])
        lhs = BasicQuery((SelectBlock((fk.src_table,), src_cols, lhs_pred),), "Distinct")
        rhs = BasicQuery((SelectBlock((fk.dst_table,), dst_cols, TRUE),), "Distinct")
        return lhs, rhs
    if isinstance(c, PrimaryKeyUnique):
        tdef = schema.table(c.table)
        all_cols = [
            Col(item, col.name, col.kind) for item in (0, 1) for col in tdef.columns
        ]
        key_eq = conj(
            [
                Cmp("eq", Col(0, n, tdef.column(n).kind), Col(1, n, tdef.column(n).kind))
                for n in c.columns
            ]
        )
        agree = []
        for col in tdef.columns:
            if col.name in c.columns:
                continue
            a, b = Col(0, col.name, col.kind), Col(1, col.name, col.kind)
            eq = Cmp("eq", a, b)
            if col.nullable:
                agree.append(disj([eq, conj([NullTest(a, False), NullTest(b, False)])]))
            else:
                agree.append(eq)
        lhs = BasicQuery(
            (SelectBlock((c.table, c.table), tuple(all_cols), key_eq),), "Distinct"
        )
        rhs = BasicQuery(
            (SelectBlock((c.table, c.table), tuple(all_cols), conj([key_eq, *agree])),),
            "Distinct",
        )
        return lhs, rhs
    raise TypeError(c)


# ---------------------------------------------------------------------------
# IN-subquery elimination (views only)


def _eliminate_in_subqueries(stmt: sqlast.SelectStmt, schema: Schema) -> sqlast.SelectStmt:
    if stmt.where is None:
        return stmt
    parts = (
        list(stmt.where.parts) if isinstance(stmt.where, sqlast.AndCond) else [stmt.where]
    )
    # Pin a bare * to the original FROM items so the appended subquery
    # tables do not leak into the projection.
    items = []
    for it in stmt.items:
        if isinstance(it, sqlast.StarItem) and it.qualifier is None:
            items.extend(sqlast.StarItem(fi.alias) for fi in stmt.from_items)
        else:
            items.append(it)
    stmt = replace(stmt, items=tuple(items))
    from_items = list(stmt.from_items)
    outer_scope = {fi.alias: fi.table for fi in stmt.from_items}
    counter = 0
    changed = True
    while changed:
        changed = False
        for i, part in enumerate(parts):
            if not isinstance(part, sqlast.InCond) or part.subquery is None:
                continue
            if part.negated:
                raise NonBasicView("NOT IN with a subquery cannot be rewritten")
            sub = part.subquery
            if (
                sub.distinct
                or sub.order_by
                or sub.limit is not None
                or len(sub.items) != 1
                or not isinstance(sub.items[0], sqlast.ColItem)
            ):
                raise NonBasicView("IN-subquery is too complex to rewrite into a join")
            rename: dict[str, str] = {}
            for fi in sub.from_items:
                fresh = f"sq{counter}_{fi.alias}"
                counter += 1
                rename[fi.alias] = fresh
                from_items.append(sqlast.FromItem(fi.table, fresh, "comma", None))
                if fi.join in ("inner", "left"):
                    raise NonBasicView("joins inside IN-subquery are not supported")
            sub_tables = [fi.table for fi in sub.from_items]
            proj = _requalify_ref(sub.items[0].ref, rename, sub_tables, schema)
            operand = part.operand
            if isinstance(operand, sqlast.ColRef) and operand.qualifier is None:
                hits = [
                    alias
                    for alias, table in outer_scope.items()
                    if any(c.name == operand.name for c in schema.table(table).columns)
                ]
                if len(hits) != 1:
                    raise ResolutionError(f"cannot qualify column {operand.name}")
                operand = sqlast.ColRef(hits[0], operand.name)
            eq = sqlast.BinOp("eq", operand, proj)
            new_parts: list[sqlast.Cond] = [eq]
            if sub.where is not None:
                new_parts.append(_requalify_cond(sub.where, rename, sub_tables, schema))
            parts[i : i + 1] = new_parts
            changed = True
            break
    where = parts[0] if len(parts) == 1 else sqlast.AndCond(tuple(parts))
    return replace(stmt, where=where, from_items=tuple(from_items))


def _requalify_ref(
    ref: sqlast.ColRef, rename: dict[str, str], sub_tables: list[str], schema: Schema
) -> sqlast.ColRef:
    if ref.qualifier is not None:
        if ref.qualifier not in rename:
            raise ResolutionError(f"unknown alias {ref.qualifier} in IN-subquery")
        return sqlast.ColRef(rename[ref.qualifier], ref.name)
    hits = [
        alias
        for alias, table in zip(rename.values(), sub_tables)
        if schema.has_table(table) and any(c.name == ref.name for c in schema.table(table).columns)
    ]
    if len(hits) != 1:
        raise ResolutionError(f"cannot requalify column {ref.name} in IN-subquery")
    return sqlast.ColRef(hits[0], ref.name)


def _requalify_cond(
    cond: sqlast.Cond, rename: dict[str, str], sub_tables: list[str], schema: Schema
) -> sqlast.Cond:
    def fix_operand(op: sqlast.Operand) -> sqlast.Operand:
        if isinstance(op, sqlast.ColRef):
            return _requalify_ref(op, rename, sub_tables, schema)
        return op

    if isinstance(cond, sqlast.BinOp):
        return sqlast.BinOp(cond.op, fix_operand(cond.lhs), fix_operand(cond.rhs))
    if isinstance(cond, sqlast.InCond):
        if cond.subquery is not None:
            raise NonBasicView("nested IN-subqueries are not supported")
        assert cond.values is not None
        return sqlast.InCond(fix_operand(cond.operand), cond.values, None, cond.negated)
    if isinstance(cond, sqlast.NullCond):
        return sqlast.NullCond(fix_operand(cond.operand), cond.negated)
    if isinstance(cond, sqlast.AndCond):
        return sqlast.AndCond(tuple(_requalify_cond(p, rename, sub_tables, schema) for p in cond.parts))
    if isinstance(cond, sqlast.OrCond):
        return sqlast.OrCond(tuple(_requalify_cond(p, rename, sub_tables, schema) for p in cond.parts))
    raise TypeError(cond)


def view_to_basic(
    sql: str, schema: Schema, fks: tuple[ForeignKey, ...], ctx_decl: dict[str, str]
) -> BasicQuery:
    ast = sqlast.parse(sql)
    ast = sqlast.QueryAst(tuple(_eliminate_in_subqueries(s, schema) for s in ast.selects))
    resolved = resolve(ast, schema, ctx_decl)
    out = classify_basic(resolved, schema)
    if isinstance(out, NotBasic):
        try:
            rr = rewrite_to_basic(resolved, schema, fks)
        except UnsupportedFeature as e:
            raise NonBasicView(f"view cannot be expressed as a basic query: {e}") from e
        if not rr.exact:
            raise NonBasicView("view rewrite is approximate; views must be exact")
        out = rr.query
    return out


# ---------------------------------------------------------------------------
# JSON loading / dumping


def loads_policy(data: dict) -> PolicyBundle:
    if not isinstance(data, dict):
        raise ParseError("policy document must be a JSON object")
    for key in ("tables", "views"):
        if key not in data:
            raise ParseError(f"policy document missing {key!r}")

    tables = []
    for t in data["tables"]:
        pk = tuple(t.get("primary_key", ()))
        if not pk:
            raise ParseError(f"table {t.get('name')}: primary_key is required")
        cols = []
        for c in t["columns"]:
            kind = c.get("type", "int")
            if kind not in COLUMN_KINDS:
                raise ParseError(f"unknown column type {kind!r}")
            nullable = bool(c.get("nullable", True))
            if c["name"] in pk:
                nullable = False
            cols.append(ColumnDef(c["name"], kind, nullable))
        tables.append(
            TableDef(
                t["name"],
                tuple(cols),
                pk,
                tuple(tuple(k) for k in t.get("unique_keys", ())),
            )
        )
    schema = Schema(tuple(tables))

    context_decl: dict[str, str] = {}
    for p in data.get("context", ()):
        kind = p.get("type", "int")
        if kind not in COLUMN_KINDS:
            raise ParseError(f"unknown context parameter type {kind!r}")
        context_decl[p["name"]] = kind
    context_decl.setdefault("NOW", "timestamp")

    fks: list[ForeignKey] = []
    containments: list[Containment] = []
    for c in data.get("constraints", ()):
        kind = c.get("kind")
        if kind == "foreign_key":
            fk = ForeignKey(
                c["src_table"],
                tuple(c["src_columns"]),
                c["dst_table"],
                tuple(c["dst_columns"]),
            )
            for col in fk.src_cols:
                schema.table(fk.src_table).column(col)
            for col in fk.dst_cols:
                schema.table(fk.dst_table).column(col)
            if len(fk.src_cols) != len(fk.dst_cols):
                raise ParseError("foreign key column lists must have equal length")
            fks.append(fk)
        elif kind == "containment":
            lhs = view_to_basic(c["lhs"], schema, (), context_decl)
            rhs = view_to_basic(c["rhs"], schema, (), context_decl)
            if len(lhs.blocks[0].projection) != len(rhs.blocks[0].projection):
                raise ParseError("containment sides must have equal arity")
            containments.append(Containment(lhs, rhs, c["lhs"], c["rhs"]))
        else:
            raise ParseError(f"unknown constraint kind {kind!r}")

    constraints: list[Constraint] = []
    for t in schema.tables:
        for key in t.keys:
            constraints.append(PrimaryKeyUnique(t.name, key))
    constraints.extend(ForeignKeyConstraint(fk) for fk in fks)
    constraints.extend(containments)

    views = []
    for v in data["views"]:
        query = view_to_basic(v["sql"], schema, tuple(fks), context_decl)
        views.append(View(v["name"], v["sql"], query))

    return PolicyBundle(schema, tuple(fks), tuple(constraints), tuple(views), context_decl)


def load_policy(path: str) -> PolicyBundle:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ParseError(f"cannot load policy {path}: {e}") from e
    return loads_policy(data)


def dump_policy(bundle: PolicyBundle) -> dict:
    tables = []
    for t in bundle.schema.tables:
        tables.append(
            {
                "name": t.name,
                "columns": [
                    {"name": c.name, "type": c.kind, "nullable": c.nullable}
                    for c in t.columns
                ],
                "primary_key": list(t.primary_key),
                "unique_keys": [list(k) for k in t.unique_keys],
            }
        )
    constraints = []
    for c in bundle.constraints:
        if isinstance(c, ForeignKeyConstraint):
            constraints.append(
                {
                    "kind": "foreign_key",
                    "src_table": c.fk.src_table,
                    "src_columns": list(c.fk.src_cols),
                    "dst_table": c.fk.dst_table,
                    "dst_columns": list(c.fk.dst_cols),
                }
            )
        elif isinstance(c, Containment):
            constraints.append({"kind": "containment", "lhs": c.lhs_sql, "rhs": c.rhs_sql})
    context = [
        {"name": n, "type": k} for n, k in bundle.context_decl.items() if n != "NOW"
    ]
    return {
        "format_version": FORMAT_VERSION,
        "tables": tables,
        "constraints": constraints,
        "views": [{"name": v.name, "sql": v.sql} for v in bundle.views],
        "context": context,
    }
