"""SQL frontend: name/type resolution, basic-query classification, rewrites.

The pipeline is parse -> resolve -> classify_basic, falling back to
rewrite_to_basic when no duplicate-freeness certificate applies directly.
Approximate rewrites (SUM, LIMIT) are flagged via RewriteResult.exact.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from . import sqlast
from .basic import (
    CERT_DISTINCT,
    CERT_KEY_WHERE,
    CERT_LIMIT1,
    CERT_PROJECTS_KEYS,
    CERT_UNION,
    TRUE,
    And,
    BasicQuery,
    Cmp,
    Col,
    Const,
    InList,
    NullTest,
    Operand,
    Or,
    Pred,
    SelectBlock,
    Var,
    block_is_duplicate_free_by_keys,
    conj,
    conjuncts,
    disj,
)
from .errors import NotSplittable, ResolutionError, UnsupportedFeature
from .schema import ORDERED_KINDS, Schema, kinds_compatible, value_kind


@dataclass(frozen=True)
class ForeignKey:
    src_table: str
    src_cols: tuple[str, ...]
    dst_table: str
    dst_cols: tuple[str, ...]


@dataclass(frozen=True)
class ResolvedItem:
    table: str
    join: str  # base | comma | inner | left
    on: Pred | None


@dataclass(frozen=True)
class ResolvedSelect:
    distinct: bool
    proj: tuple[Col, ...]
    sum_col: Col | None  # SELECT SUM(col): proj is empty, sum_col set
    items: tuple[ResolvedItem, ...]
    where: Pred
    order_by: tuple[Col, ...]
    limit: int | None


@dataclass(frozen=True)
class NotBasic:
    reason: str


@dataclass(frozen=True)
class RewriteResult:
    query: BasicQuery
    exact: bool
    limit_dropped: bool


# ---------------------------------------------------------------------------
# Resolution


class _Resolver:
    def __init__(self, schema: Schema, ctx_decl: dict[str, str] | None):
        self.schema = schema
        self.ctx_decl = ctx_decl  # None = context parameters not allowed

    def resolve_query(self, ast: sqlast.QueryAst) -> list[ResolvedSelect]:
        out = [self.resolve_select(s) for s in ast.selects]
        if len(out) > 1:
            arity = len(out[0].proj)
            kinds = tuple(c.kind for c in out[0].proj)
            for s in out[1:]:
                if s.sum_col is not None or len(s.proj) != arity:
                    raise ResolutionError("UNION branches must have matching projections")
                if tuple(c.kind for c in s.proj) != kinds:
                    raise ResolutionError("UNION branches must have matching column types")
        return out

    def resolve_select(self, stmt: sqlast.SelectStmt) -> ResolvedSelect:
        aliases: dict[str, int] = {}
        items: list[ResolvedItem] = []
        for item in stmt.from_items:
            if not self.schema.has_table(item.table):
                raise ResolutionError(f"unknown table {item.table}")
            if item.alias in aliases:
                raise ResolutionError(f"duplicate alias {item.alias}")
            aliases[item.alias] = len(items)
            items.append(ResolvedItem(item.table, item.join, None))
        env = _Env(self.schema, aliases, [it.table for it in items], self.ctx_decl)
        # ON conditions are resolved once all aliases are known.
        for i, item in enumerate(stmt.from_items):
            if item.on is not None:
                items[i] = replace(items[i], on=self.resolve_cond(item.on, env))

        proj: list[Col] = []
        sum_col: Col | None = None
        for it in stmt.items:
            if isinstance(it, sqlast.StarItem):
                proj.extend(env.expand_star(it.qualifier))
            elif isinstance(it, sqlast.ColItem):
                proj.append(env.col(it.ref))
            else:  # SumItem
                if sum_col is not None or len(stmt.items) != 1:
                    raise UnsupportedFeature("SUM must be the only select item")
                sum_col = env.col(it.ref)
        if sum_col is not None and len(stmt.from_items) != 1:
            raise UnsupportedFeature("SUM is supported over a single table only")
        if sum_col is not None and sum_col.kind != "int":
            raise ResolutionError("SUM requires an int column")

        where = self.resolve_cond(stmt.where, env) if stmt.where is not None else TRUE
        order_by = tuple(env.col(ref) for ref in stmt.order_by)
        return ResolvedSelect(
            stmt.distinct, tuple(proj), sum_col, tuple(items), where, order_by, stmt.limit
        )

    def resolve_cond(self, cond: sqlast.Cond, env: "_Env") -> Pred:
        if isinstance(cond, sqlast.AndCond):
            return conj([self.resolve_cond(p, env) for p in cond.parts])
        if isinstance(cond, sqlast.OrCond):
            return disj([self.resolve_cond(p, env) for p in cond.parts])
        if isinstance(cond, sqlast.BinOp):
            return self.resolve_cmp(cond, env)
        if isinstance(cond, sqlast.InCond):
            if cond.subquery is not None:
                raise UnsupportedFeature("subquery inside IN is not supported")
            lhs = env.operand(cond.operand)
            if not isinstance(lhs, Col):
                raise ResolutionError("IN requires a column on the left")
            values = tuple(env.coerce(v, lhs.kind) for v in cond.values)
            return InList(lhs, values, cond.negated)
        if isinstance(cond, sqlast.NullCond):
            op = env.operand(cond.operand)
            if not isinstance(op, Col):
                raise ResolutionError("IS NULL requires a column")
            return NullTest(op, cond.negated)
        raise TypeError(cond)

    def resolve_cmp(self, cond: sqlast.BinOp, env: "_Env") -> Pred:
        op = cond.op
        lhs_raw, rhs_raw = cond.lhs, cond.rhs
        if op == "gt":
            op, lhs_raw, rhs_raw = "lt", rhs_raw, lhs_raw
        elif op == "ge":
            op, lhs_raw, rhs_raw = "le", rhs_raw, lhs_raw
        lhs = env.operand(lhs_raw)
        rhs = env.operand(rhs_raw)
        if isinstance(lhs, Col) and isinstance(rhs, Col):
            if lhs.kind != rhs.kind:
                raise ResolutionError(
                    f"cannot compare {lhs.kind} column with {rhs.kind} column"
                )
        elif isinstance(lhs, Col):
            rhs = env.coerce(rhs_raw, lhs.kind)
        elif isinstance(rhs, Col):
            lhs = env.coerce(lhs_raw, rhs.kind)
        else:
            raise ResolutionError("comparison requires at least one column")
        if op in ("lt", "le"):
            kind = lhs.kind if isinstance(lhs, Col) else rhs.kind
            if kind not in ORDERED_KINDS:
                raise ResolutionError(f"ordering comparison not supported on {kind} columns")
        return Cmp(op, lhs, rhs)


class _Env:
    def __init__(
        self,
        schema: Schema,
        aliases: dict[str, int],
        tables: list[str],
        ctx_decl: dict[str, str] | None,
    ):
        self.schema = schema
        self.aliases = aliases
        self.tables = tables
        self.ctx_decl = ctx_decl

    def expand_star(self, qualifier: str | None) -> list[Col]:
        cols: list[Col] = []
        if qualifier is None:
            indices = range(len(self.tables))
        else:
            if qualifier not in self.aliases:
                raise ResolutionError(f"unknown alias {qualifier}")
            indices = [self.aliases[qualifier]]
        for i in indices:
            for c in self.schema.table(self.tables[i]).columns:
                cols.append(Col(i, c.name, c.kind))
        return cols

    def col(self, ref: sqlast.ColRef) -> Col:
        if ref.qualifier is not None:
            if ref.qualifier not in self.aliases:
                raise ResolutionError(f"unknown alias {ref.qualifier}")
            i = self.aliases[ref.qualifier]
            cdef = self.schema.table(self.tables[i]).column(ref.name)
            return Col(i, ref.name, cdef.kind)
        hits = []
        for i, t in enumerate(self.tables):
            tdef = self.schema.table(t)
            if any(c.name == ref.name for c in tdef.columns):
                hits.append((i, tdef.column(ref.name)))
        if not hits:
            raise ResolutionError(f"unknown column {ref.name}")
        if len(hits) > 1:
            raise ResolutionError(f"ambiguous column {ref.name}")
        i, cdef = hits[0]
        return Col(i, ref.name, cdef.kind)

    def operand(self, raw: sqlast.Operand) -> Operand:
        if isinstance(raw, sqlast.ColRef):
            return self.col(raw)
        if isinstance(raw, sqlast.Lit):
            return Const(value_kind(raw.value), raw.value)
        if isinstance(raw, sqlast.CtxRef):
            if self.ctx_decl is None:
                raise ResolutionError(f"context parameter ?{raw.name} not allowed here")
            if raw.name not in self.ctx_decl:
                raise ResolutionError(f"undeclared context parameter ?{raw.name}")
            return Var(raw.name, self.ctx_decl[raw.name], ctx=True)
        raise TypeError(raw)

    def coerce(self, raw: sqlast.Operand, kind: str) -> Operand:
        op = self.operand(raw)
        if isinstance(op, Const):
            if op.is_null:
                return Const(kind, None)
            if not kinds_compatible(op.kind, kind):
                raise ResolutionError(f"constant {op.value!r} incompatible with {kind} column")
            return Const(kind, op.value)
        if isinstance(op, Var):
            if op.kind != kind:
                raise ResolutionError(
                    f"context parameter ?{op.name} has type {op.kind}, column needs {kind}"
                )
            return op
        return op


def resolve(
    ast: sqlast.QueryAst, schema: Schema, ctx_decl: dict[str, str] | None = None
) -> list[ResolvedSelect]:
    return _Resolver(schema, ctx_decl).resolve_query(ast)


# ---------------------------------------------------------------------------
# Classification


def classify_basic(resolved: list[ResolvedSelect], schema: Schema) -> BasicQuery | NotBasic:
    for s in resolved:
        if s.sum_col is not None:
            return NotBasic("aggregate projection")
        if any(it.join in ("inner", "left") for it in s.items):
            return NotBasic("explicit join")
        if s.order_by:
            return NotBasic("ORDER BY clause")
        if s.limit is not None and s.limit != 1:
            return NotBasic("LIMIT clause")
    if len(resolved) > 1:
        if any(s.limit is not None for s in resolved):
            return NotBasic("LIMIT inside UNION")
        return BasicQuery(tuple(_to_block(s) for s in resolved), CERT_UNION)
    s = resolved[0]
    block = _to_block(s)
    if s.distinct:
        return BasicQuery((block,), CERT_DISTINCT)
    if s.limit == 1:
        return BasicQuery((block,), CERT_LIMIT1)
    if block_is_duplicate_free_by_keys(block, schema, projected_only=True):
        return BasicQuery((block,), CERT_PROJECTS_KEYS)
    if block_is_duplicate_free_by_keys(block, schema, projected_only=False):
        return BasicQuery((block,), CERT_KEY_WHERE)
    return NotBasic("no duplicate-freeness certificate applies")


def _to_block(s: ResolvedSelect) -> SelectBlock:
    return SelectBlock(tuple(it.table for it in s.items), tuple(s.proj), s.where)


# ---------------------------------------------------------------------------
# Rewriting


def rewrite_to_basic(
    resolved: list[ResolvedSelect], schema: Schema, foreign_keys: tuple[ForeignKey, ...] = ()
) -> RewriteResult:
    exact = True
    limit_dropped = False
    blocks: list[ResolvedSelect] = []
    for s in resolved:
        s = _flatten_inner_joins(s)
        s = _left_join_on_fk(s, schema, foreign_keys)
        s = _fold_order_by(s)
        if s.limit is not None and s.limit > 1:
            s = replace(s, limit=None)
            limit_dropped = True
            exact = False
        if s.sum_col is not None:
            s = _rewrite_sum(s, schema)
            exact = False
        blocks.append(s)
    expanded: list[ResolvedSelect] = []
    for s in blocks:
        if any(it.join == "left" for it in s.items):
            expanded.extend(_distinct_left_join_union(s))
        else:
            expanded.append(s)
    out = classify_basic(expanded, schema)
    if isinstance(out, NotBasic):
        raise UnsupportedFeature(f"cannot rewrite to a basic query: {out.reason}")
    return RewriteResult(out, exact, limit_dropped)


def _flatten_inner_joins(s: ResolvedSelect) -> ResolvedSelect:
    items = []
    on_parts: list[Pred] = []
    for it in s.items:
        if it.join == "inner":
            if it.on is not None:
                on_parts.append(it.on)
            items.append(ResolvedItem(it.table, "comma", None))
        else:
            items.append(it)
    return replace(s, items=tuple(items), where=conj([*on_parts, s.where]))


def _left_join_on_fk(
    s: ResolvedSelect, schema: Schema, fks: tuple[ForeignKey, ...]
) -> ResolvedSelect:
    items = list(s.items)
    changed = False
    for i, it in enumerate(items):
        if it.join != "left" or it.on is None:
            continue
        pair = _single_cross_equality(it.on, i)
        if pair is None:
            continue
        src, dst = pair  # src on an earlier item, dst on item i
        src_table, dst_table = s.items[src.item].table, it.table
        src_def = schema.table(src_table)
        if src_def.column(src.column).nullable:
            continue  # a NULL source value has no match, left join is not inner
        for fk in fks:
            if (
                fk.src_table == src_table
                and fk.dst_table == dst_table
                and fk.src_cols == (src.column,)
                and fk.dst_cols == (dst.column,)
            ):
                items[i] = ResolvedItem(it.table, "inner", it.on)
                changed = True
                break
    if not changed:
        return s
    return _flatten_inner_joins(replace(s, items=tuple(items)))


def _single_cross_equality(on: Pred, item: int) -> tuple[Col, Col] | None:
    """Match ON R1.A = R2.B where R2 is `item` and R1 an earlier item."""
    if not isinstance(on, Cmp) or on.op != "eq":
        return None
    lhs, rhs = on.lhs, on.rhs
    if not (isinstance(lhs, Col) and isinstance(rhs, Col)):
        return None
    if lhs.item < item and rhs.item == item:
        return lhs, rhs
    if rhs.item < item and lhs.item == item:
        return rhs, lhs
    return None


def _fold_order_by(s: ResolvedSelect) -> ResolvedSelect:
    if not s.order_by:
        return s
    proj = list(s.proj)
    for col in s.order_by:
        if col not in proj:
            proj.append(col)
    return replace(s, proj=tuple(proj), order_by=())


def _rewrite_sum(s: ResolvedSelect, schema: Schema) -> ResolvedSelect:
    assert s.sum_col is not None and len(s.items) == 1
    tdef = schema.table(s.items[0].table)
    proj = [Col(0, c, tdef.column(c).kind) for c in tdef.primary_key]
    if s.sum_col not in proj:
        proj.append(s.sum_col)
    return replace(s, proj=tuple(proj), sum_col=None)


def _distinct_left_join_union(s: ResolvedSelect) -> list[ResolvedSelect]:
    if len(s.items) != 2 or s.items[1].join != "left" or s.items[0].join != "base":
        raise UnsupportedFeature("unsupported left join shape")
    if not s.distinct:
        raise UnsupportedFeature("left join without DISTINCT cannot be rewritten")
    if any(c.item != 0 for c in s.proj):
        raise UnsupportedFeature("left-join rewrite requires projecting the left table only")
    if _has_negation(s.where):
        raise UnsupportedFeature("left-join rewrite requires a negation-free WHERE")
    on = s.items[1].on if s.items[1].on is not None else TRUE
    inner = ResolvedSelect(
        False,
        s.proj,
        None,
        (s.items[0], ResolvedItem(s.items[1].table, "comma", None)),
        conj([on, s.where]),
        (),
        None,
    )
    no_match_pred = _null_out_item(s.where, item=1)
    no_match = ResolvedSelect(False, s.proj, None, (s.items[0],), no_match_pred, (), None)
    return [inner, no_match]


def _has_negation(pred: Pred) -> bool:
    if isinstance(pred, (And, Or)):
        return any(_has_negation(p) for p in pred.parts)
    if isinstance(pred, InList):
        return pred.negated
    if isinstance(pred, NullTest):
        return pred.negated
    return False


def _null_out_item(pred: Pred, item: int) -> Pred:
    """Replace atoms over columns of `item` with their NULL-literal truth value."""
    if isinstance(pred, And):
        parts = [_null_out_item(p, item) for p in pred.parts]
        if any(p == FALSE_PRED for p in parts):
            return FALSE_PRED
        kept = [p for p in parts if p != TRUE]
        return conj(kept) if kept else TRUE
    if isinstance(pred, Or):
        parts = [_null_out_item(p, item) for p in pred.parts]
        if any(p == TRUE for p in parts):
            return TRUE
        kept = [p for p in parts if p != FALSE_PRED]
        return disj(kept) if kept else FALSE_PRED
    if _mentions_item(pred, item):
        if isinstance(pred, NullTest) and not pred.negated:
            return TRUE
        return FALSE_PRED  # two-valued semantics: NULL operand falsifies the atom
    return pred


FALSE_PRED = Or(())


def _mentions_item(pred: Pred, item: int) -> bool:
    from .basic import iter_pred_operands

    return any(isinstance(op, Col) and op.item == item for op in iter_pred_operands(pred))


# ---------------------------------------------------------------------------
# IN-splitting


def split_in(q: BasicQuery) -> list[BasicQuery]:
    """Split a top-level `c IN (v1..vn)` into n equality queries.

    The union of the split queries equals the original on every database;
    refuses queries containing NOT (NOT IN / IS NOT NULL) or without a
    top-level IN conjunct.
    """
    if len(q.blocks) != 1:
        raise NotSplittable("IN-splitting applies to single-block queries")
    block = q.blocks[0]
    for part in _all_atoms(block.predicate):
        if isinstance(part, InList) and part.negated:
            raise NotSplittable("query contains NOT IN")
        if isinstance(part, NullTest) and part.negated:
            raise NotSplittable("query contains IS NOT NULL")
    parts = conjuncts(block.predicate)
    target = None
    for i, part in enumerate(parts):
        if isinstance(part, InList) and not part.negated:
            target = i
            break
    if target is None:
        raise NotSplittable("no top-level IN conjunct")
    in_atom = parts[target]
    assert isinstance(in_atom, InList)
    out = []
    for v in in_atom.values:
        new_parts = list(parts)
        new_parts[target] = Cmp("eq", in_atom.lhs, v)
        out.append(BasicQuery((SelectBlock(block.tables, block.projection, conj(new_parts)),), q.certificate))
    return out


def _all_atoms(pred: Pred):
    if isinstance(pred, (And, Or)):
        for p in pred.parts:
            yield from _all_atoms(p)
    else:
        yield pred
