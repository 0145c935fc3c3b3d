"""Basic-query intermediate representation.

A BasicQuery is one SELECT-FROM-WHERE block (or a UNION of blocks) that is
certified never to return duplicate rows on duplicate-free tables. FROM items
are referenced positionally; constants carry the column kind they were
resolved against. Template variables (Var) and context parameters (CtxVar)
reuse the same operand slots so parameterized queries share this type.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator

from .schema import Schema

CERT_DISTINCT = "Distinct"
CERT_LIMIT1 = "Limit1"
CERT_PROJECTS_KEYS = "ProjectsKeys"
CERT_KEY_WHERE = "KeyConstrainedWhere"
CERT_UNION = "UnionDedup"


@dataclass(frozen=True)
class Col:
    item: int  # index into SelectBlock.tables
    column: str
    kind: str


@dataclass(frozen=True)
class Const:
    kind: str  # column kind, or "null"
    value: object

    @property
    def is_null(self) -> bool:
        return self.value is None


@dataclass(frozen=True)
class Var:
    """Template variable; ctx=True marks request-context variables."""

    name: str
    kind: str
    ctx: bool = False


Operand = Col | Const | Var


@dataclass(frozen=True)
class Cmp:
    op: str  # eq | lt | le  (gt/ge are normalized away at resolution)
    lhs: Operand
    rhs: Operand


@dataclass(frozen=True)
class InList:
    lhs: Operand
    values: tuple[Operand, ...]  # Const or Var, never Col
    negated: bool


@dataclass(frozen=True)
class NullTest:
    operand: Operand
    negated: bool


@dataclass(frozen=True)
class And:
    parts: tuple["Pred", ...]


@dataclass(frozen=True)
class Or:
    parts: tuple["Pred", ...]


Pred = Cmp | InList | NullTest | And | Or

TRUE = And(())
FALSE = Or(())


def conj(parts: list[Pred]) -> Pred:
    flat: list[Pred] = []
    for p in parts:
        if isinstance(p, And):
            flat.extend(p.parts)
        else:
            flat.append(p)
    if len(flat) == 1:
        return flat[0]
    return And(tuple(flat))


def disj(parts: list[Pred]) -> Pred:
    flat: list[Pred] = []
    for p in parts:
        if isinstance(p, Or):
            flat.extend(p.parts)
        else:
            flat.append(p)
    if len(flat) == 1:
        return flat[0]
    return Or(tuple(flat))


def conjuncts(pred: Pred) -> tuple[Pred, ...]:
    if isinstance(pred, And):
        return pred.parts
    return (pred,)


@dataclass(frozen=True)
class SelectBlock:
    tables: tuple[str, ...]
    projection: tuple[Operand, ...]  # Col in real queries; Const/Var allowed in renderings
    predicate: Pred


@dataclass(frozen=True)
class BasicQuery:
    blocks: tuple[SelectBlock, ...]
    certificate: str

    @property
    def arity(self) -> int:
        return len(self.blocks[0].projection)

    def projection_kinds(self) -> tuple[str, ...]:
        kinds = []
        for op in self.blocks[0].projection:
            kinds.append(op.kind)
        return tuple(kinds)

    def tables_used(self) -> set[str]:
        return {t for b in self.blocks for t in b.tables}


# ---------------------------------------------------------------------------
# Operand traversal


def map_pred_operands(pred: Pred, fn: Callable[[Operand], Operand]) -> Pred:
    if isinstance(pred, Cmp):
        return Cmp(pred.op, fn(pred.lhs), fn(pred.rhs))
    if isinstance(pred, InList):
        return InList(fn(pred.lhs), tuple(fn(v) for v in pred.values), pred.negated)
    if isinstance(pred, NullTest):
        return NullTest(fn(pred.operand), pred.negated)
    if isinstance(pred, And):
        return And(tuple(map_pred_operands(p, fn) for p in pred.parts))
    if isinstance(pred, Or):
        return Or(tuple(map_pred_operands(p, fn) for p in pred.parts))
    raise TypeError(pred)


def iter_pred_operands(pred: Pred) -> Iterator[Operand]:
    if isinstance(pred, Cmp):
        yield pred.lhs
        yield pred.rhs
    elif isinstance(pred, InList):
        yield pred.lhs
        yield from pred.values
    elif isinstance(pred, NullTest):
        yield pred.operand
    elif isinstance(pred, (And, Or)):
        for p in pred.parts:
            yield from iter_pred_operands(p)
    else:
        raise TypeError(pred)


def map_query_operands(q: BasicQuery, fn: Callable[[Operand], Operand]) -> BasicQuery:
    blocks = []
    for b in q.blocks:
        blocks.append(
            SelectBlock(b.tables, tuple(fn(p) for p in b.projection), map_pred_operands(b.predicate, fn))
        )
    return BasicQuery(tuple(blocks), q.certificate)


def iter_query_operands(q: BasicQuery) -> Iterator[Operand]:
    for b in q.blocks:
        yield from b.projection
        yield from iter_pred_operands(b.predicate)


def query_vars(q: BasicQuery) -> list[Var]:
    seen: dict[str, Var] = {}
    for op in iter_query_operands(q):
        if isinstance(op, Var) and op.name not in seen:
            seen[op.name] = op
    return list(seen.values())


def is_closed(q: BasicQuery) -> bool:
    return not query_vars(q)


def has_negation(q: BasicQuery) -> bool:
    for b in q.blocks:
        for p in _iter_atoms(b.predicate):
            if isinstance(p, InList) and p.negated:
                return True
            if isinstance(p, NullTest) and p.negated:
                return True
    return False


def _iter_atoms(pred: Pred) -> Iterator[Pred]:
    if isinstance(pred, (And, Or)):
        for p in pred.parts:
            yield from _iter_atoms(p)
    else:
        yield pred


# ---------------------------------------------------------------------------
# Determined-column analysis (conjunctive equalities only)


class _UF:
    def __init__(self) -> None:
        self.parent: dict[object, object] = {}

    def find(self, x: object) -> object:
        self.parent.setdefault(x, x)
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: object, b: object) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[ra] = rb


def determined_column_classes(block: SelectBlock) -> tuple[_UF, set[object]]:
    """Union-find over column slots plus the set of determined class roots.

    A column is determined if it is projected, equated (through a chain of
    top-level conjunctive equalities) to a projected column, or pinned to a
    constant / variable / context parameter.
    """
    uf = _UF()
    pinned: list[object] = []
    for part in conjuncts(block.predicate):
        if isinstance(part, Cmp) and part.op == "eq":
            lhs, rhs = part.lhs, part.rhs
            if isinstance(lhs, Col) and isinstance(rhs, Col):
                uf.union(("c", lhs.item, lhs.column), ("c", rhs.item, rhs.column))
            elif isinstance(lhs, Col) and not isinstance(rhs, Col):
                pinned.append(("c", lhs.item, lhs.column))
            elif isinstance(rhs, Col) and not isinstance(lhs, Col):
                pinned.append(("c", rhs.item, rhs.column))
    determined: set[object] = set()
    for op in block.projection:
        if isinstance(op, Col):
            determined.add(uf.find(("c", op.item, op.column)))
    for slot in pinned:
        determined.add(uf.find(slot))
    return uf, determined


def block_is_duplicate_free_by_keys(block: SelectBlock, schema: Schema, projected_only: bool) -> bool:
    """ProjectsKeys check (projected_only=True) or KeyConstrainedWhere check."""
    if projected_only:
        projected: set[tuple[int, str]] = set()
        for op in block.projection:
            if isinstance(op, Col):
                projected.add((op.item, op.column))
        for item, table in enumerate(block.tables):
            tdef = schema.table(table)
            if not any(all((item, c) in projected for c in key) for key in tdef.keys):
                return False
        return True
    uf, determined = determined_column_classes(block)
    for item, table in enumerate(block.tables):
        tdef = schema.table(table)
        ok = False
        for key in tdef.keys:
            if all(uf.find(("c", item, c)) in determined for c in key):
                ok = True
                break
        if not ok:
            return False
    return True


# ---------------------------------------------------------------------------
# Rendering and signatures


def render_operand(op: Operand, aliases: tuple[str, ...]) -> str:
    if isinstance(op, Col):
        return f"{aliases[op.item]}.{op.column}"
    if isinstance(op, Const):
        return render_value(op.value)
    if isinstance(op, Var):
        return f"?{op.name}"
    raise TypeError(op)


def render_value(value: object) -> str:
    if value is None:
        return "NULL"
    if isinstance(value, bool):
        return "TRUE" if value else "FALSE"
    if isinstance(value, int):
        return str(value)
    return "'" + str(value).replace("'", "''") + "'"


_OPS = {"eq": "=", "lt": "<", "le": "<="}


def render_pred(pred: Pred, aliases: tuple[str, ...], outer: bool = True) -> str:
    if isinstance(pred, Cmp):
        return f"{render_operand(pred.lhs, aliases)} {_OPS[pred.op]} {render_operand(pred.rhs, aliases)}"
    if isinstance(pred, InList):
        vals = ", ".join(render_operand(v, aliases) for v in pred.values)
        kw = "NOT IN" if pred.negated else "IN"
        return f"{render_operand(pred.lhs, aliases)} {kw} ({vals})"
    if isinstance(pred, NullTest):
        kw = "IS NOT NULL" if pred.negated else "IS NULL"
        return f"{render_operand(pred.operand, aliases)} {kw}"
    if isinstance(pred, And):
        if not pred.parts:
            return "TRUE = TRUE" if outer else "(TRUE = TRUE)"
        inner = " AND ".join(render_pred(p, aliases, False) for p in pred.parts)
        return inner if outer else f"({inner})"
    if isinstance(pred, Or):
        if not pred.parts:
            return "FALSE = TRUE" if outer else "(FALSE = TRUE)"
        inner = " OR ".join(render_pred(p, aliases, False) for p in pred.parts)
        return inner if outer else f"({inner})"
    raise TypeError(pred)


def render_block(block: SelectBlock) -> str:
    aliases = tuple(f"t{i}" for i in range(len(block.tables)))
    proj = ", ".join(render_operand(p, aliases) for p in block.projection)
    frm = ", ".join(f"{t} {a}" for t, a in zip(block.tables, aliases))
    sql = f"SELECT {proj} FROM {frm}"
    if block.predicate != TRUE:
        sql += f" WHERE {render_pred(block.predicate, aliases)}"
    return sql


def render_query(q: BasicQuery) -> str:
    return " UNION ".join(render_block(b) for b in q.blocks)


def _pred_signature(pred: Pred) -> object:
    if isinstance(pred, Cmp):
        return ("cmp", pred.op, _op_signature(pred.lhs), _op_signature(pred.rhs))
    if isinstance(pred, InList):
        return ("in", pred.negated, _op_signature(pred.lhs), len(pred.values))
    if isinstance(pred, NullTest):
        return ("null", pred.negated, _op_signature(pred.operand))
    if isinstance(pred, And):
        return ("and", tuple(_pred_signature(p) for p in pred.parts))
    if isinstance(pred, Or):
        return ("or", tuple(_pred_signature(p) for p in pred.parts))
    raise TypeError(pred)


def _op_signature(op: Operand) -> object:
    if isinstance(op, Col):
        return ("col", op.item, op.column)
    return ("hole",)


def query_signature(q: BasicQuery) -> object:
    """Structural shape with constants and variables erased to holes."""
    sig = []
    for b in q.blocks:
        sig.append(
            (b.tables, tuple(_op_signature(p) for p in b.projection), _pred_signature(b.predicate))
        )
    return tuple(sig)
