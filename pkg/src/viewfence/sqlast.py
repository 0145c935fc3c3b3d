"""Tokenizer, AST, and recursive-descent parser for the supported SQL subset.

Supported: SELECT [DISTINCT] list FROM comma/INNER/LEFT joins, WHERE with
AND/OR over =, <, <=, >, >=, IN (...), NOT IN (...), IS [NOT] NULL,
UNION, ORDER BY, LIMIT, SUM(col). Literals are integers, 'strings',
TRUE/FALSE/NULL; ? is a positional parameter, ?Name a context parameter.
GROUP BY, EXISTS, ANY and subqueries outside IN are rejected.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import SqlSyntaxError, UnsupportedFeature

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>\d+)
  | (?P<str>'(?:[^']|'')*')
  | (?P<ctxparam>\?[A-Za-z_][A-Za-z0-9_]*)
  | (?P<param>\?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|<>|<|>|=)
  | (?P<punct>[(),.*])
    """,
    re.VERBOSE,
)

_KEYWORDS = {
    "select", "distinct", "from", "where", "and", "or", "not", "in", "is",
    "null", "true", "false", "union", "order", "by", "limit", "inner",
    "left", "join", "on", "as", "sum", "group", "exists", "any", "asc",
    "desc", "outer", "having", "except", "minus", "intersect",
}

_UNSUPPORTED_KEYWORDS = {
    "group": "GROUP BY",
    "exists": "EXISTS",
    "any": "ANY",
    "having": "HAVING",
    "except": "EXCEPT",
    "minus": "MINUS",
    "intersect": "INTERSECT",
}


@dataclass(frozen=True)
class Token:
    kind: str  # kw | ident | num | str | op | punct | param | ctxparam | eof
    value: str
    pos: int


def tokenize(sql: str) -> list[Token]:
    tokens: list[Token] = []
    pos = 0
    while pos < len(sql):
        m = _TOKEN_RE.match(sql, pos)
        if not m:
            raise SqlSyntaxError(f"unexpected character {sql[pos]!r} at offset {pos}")
        pos = m.end()
        if m.lastgroup == "ws":
            continue
        kind = m.lastgroup
        value = m.group()
        if kind == "ident" and value.lower() in _KEYWORDS:
            kind, value = "kw", value.lower()
        assert kind is not None
        tokens.append(Token(kind, value, m.start()))
    tokens.append(Token("eof", "", len(sql)))
    return tokens


# ---------------------------------------------------------------------------
# Raw AST (pre-resolution). Leaf values use Python objects: int, str, bool,
# None (for NULL).


@dataclass(frozen=True)
class ColRef:
    qualifier: str | None
    name: str


@dataclass(frozen=True)
class Lit:
    value: object


@dataclass(frozen=True)
class CtxRef:
    """?Name context-parameter placeholder (views only)."""

    name: str


Operand = ColRef | Lit | CtxRef


@dataclass(frozen=True)
class BinOp:
    op: str  # eq | lt | le | gt | ge
    lhs: Operand
    rhs: Operand


@dataclass(frozen=True)
class InCond:
    operand: Operand
    values: tuple[Lit | CtxRef, ...] | None  # None when subquery form
    subquery: "SelectStmt | None"
    negated: bool


@dataclass(frozen=True)
class NullCond:
    operand: Operand
    negated: bool


@dataclass(frozen=True)
class AndCond:
    parts: tuple["Cond", ...]


@dataclass(frozen=True)
class OrCond:
    parts: tuple["Cond", ...]


Cond = BinOp | InCond | NullCond | AndCond | OrCond


@dataclass(frozen=True)
class StarItem:
    qualifier: str | None  # None = bare *


@dataclass(frozen=True)
class ColItem:
    ref: ColRef


@dataclass(frozen=True)
class SumItem:
    ref: ColRef


SelectItemT = StarItem | ColItem | SumItem


@dataclass(frozen=True)
class FromItem:
    table: str
    alias: str
    join: str  # "base" | "comma" | "inner" | "left"
    on: Cond | None  # only for inner/left


@dataclass(frozen=True)
class SelectStmt:
    distinct: bool
    items: tuple[SelectItemT, ...]
    from_items: tuple[FromItem, ...]
    where: Cond | None
    order_by: tuple[ColRef, ...]
    limit: int | None


@dataclass(frozen=True)
class QueryAst:
    """One SELECT statement, or a UNION chain of them."""

    selects: tuple[SelectStmt, ...]


_CMP_OPS = {"=": "eq", "<": "lt", "<=": "le", ">": "gt", ">=": "ge"}


class _Parser:
    def __init__(self, tokens: list[Token], params: list[object]):
        self.tokens = tokens
        self.i = 0
        self.params = params
        self.param_i = 0

    # -- token helpers ------------------------------------------------------

    def peek(self) -> Token:
        return self.tokens[self.i]

    def next(self) -> Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def accept_kw(self, *kws: str) -> str | None:
        tok = self.peek()
        if tok.kind == "kw" and tok.value in kws:
            self.i += 1
            return tok.value
        return None

    def expect_kw(self, kw: str) -> None:
        tok = self.next()
        if tok.kind != "kw" or tok.value != kw:
            raise SqlSyntaxError(f"expected {kw.upper()} at offset {tok.pos}, got {tok.value!r}")

    def accept_punct(self, p: str) -> bool:
        tok = self.peek()
        if tok.kind == "punct" and tok.value == p:
            self.i += 1
            return True
        return False

    def expect_punct(self, p: str) -> None:
        tok = self.next()
        if tok.kind != "punct" or tok.value != p:
            raise SqlSyntaxError(f"expected {p!r} at offset {tok.pos}, got {tok.value!r}")

    def expect_ident(self) -> str:
        tok = self.next()
        if tok.kind == "kw" and tok.value in _UNSUPPORTED_KEYWORDS:
            raise UnsupportedFeature(f"{_UNSUPPORTED_KEYWORDS[tok.value]} is not supported")
        if tok.kind != "ident":
            raise SqlSyntaxError(f"expected identifier at offset {tok.pos}, got {tok.value!r}")
        return tok.value

    def _check_unsupported(self) -> None:
        tok = self.peek()
        if tok.kind == "kw" and tok.value in _UNSUPPORTED_KEYWORDS:
            raise UnsupportedFeature(f"{_UNSUPPORTED_KEYWORDS[tok.value]} is not supported")

    # -- grammar ------------------------------------------------------------

    def parse_query(self) -> QueryAst:
        selects = [self.parse_select()]
        while self.accept_kw("union"):
            selects.append(self.parse_select())
        self._check_unsupported()
        tok = self.peek()
        if tok.kind != "eof":
            raise SqlSyntaxError(f"trailing input at offset {tok.pos}: {tok.value!r}")
        if self.param_i != len(self.params):
            raise SqlSyntaxError(
                f"{len(self.params)} parameter(s) supplied but {self.param_i} placeholder(s) in query"
            )
        return QueryAst(tuple(selects))

    def parse_select(self) -> SelectStmt:
        self.expect_kw("select")
        distinct = bool(self.accept_kw("distinct"))
        items = [self.parse_select_item()]
        while self.accept_punct(","):
            items.append(self.parse_select_item())
        self.expect_kw("from")
        from_items = self.parse_from()
        where = None
        if self.accept_kw("where"):
            where = self.parse_disjunction()
        order_by: list[ColRef] = []
        self._check_unsupported()
        if self.accept_kw("order"):
            self.expect_kw("by")
            order_by.append(self.parse_order_col())
            while self.accept_punct(","):
                order_by.append(self.parse_order_col())
        limit = None
        if self.accept_kw("limit"):
            tok = self.next()
            if tok.kind != "num":
                raise SqlSyntaxError(f"expected integer after LIMIT at offset {tok.pos}")
            limit = int(tok.value)
        self._check_unsupported()
        return SelectStmt(distinct, tuple(items), tuple(from_items), where, tuple(order_by), limit)

    def parse_order_col(self) -> ColRef:
        ref = self.parse_col_ref()
        self.accept_kw("asc", "desc")
        return ref

    def parse_select_item(self) -> SelectItemT:
        if self.accept_punct("*"):
            return StarItem(None)
        if self.accept_kw("sum"):
            self.expect_punct("(")
            ref = self.parse_col_ref()
            self.expect_punct(")")
            return SumItem(ref)
        name = self.expect_ident()
        if self.accept_punct("."):
            if self.accept_punct("*"):
                return StarItem(name)
            return ColItem(ColRef(name, self.expect_ident()))
        return ColItem(ColRef(None, name))

    def parse_from(self) -> list[FromItem]:
        items = [self._from_item("base", None)]
        while True:
            if self.accept_punct(","):
                items.append(self._from_item("comma", None))
            elif self.accept_kw("inner"):
                self.expect_kw("join")
                items.append(self._join_item("inner"))
            elif self.accept_kw("left"):
                self.accept_kw("outer")
                self.expect_kw("join")
                items.append(self._join_item("left"))
            elif self.accept_kw("join"):
                items.append(self._join_item("inner"))
            else:
                return items

    def _join_item(self, kind: str) -> FromItem:
        item = self._from_item(kind, None)
        self.expect_kw("on")
        on = self.parse_disjunction()
        return FromItem(item.table, item.alias, kind, on)

    def _from_item(self, join: str, on: Cond | None) -> FromItem:
        table = self.expect_ident()
        alias = table
        if self.accept_kw("as"):
            alias = self.expect_ident()
        elif self.peek().kind == "ident":
            alias = self.expect_ident()
        return FromItem(table, alias, join, on)

    def parse_disjunction(self) -> Cond:
        parts = [self.parse_conjunction()]
        while self.accept_kw("or"):
            parts.append(self.parse_conjunction())
        if len(parts) == 1:
            return parts[0]
        return OrCond(tuple(parts))

    def parse_conjunction(self) -> Cond:
        parts = [self.parse_factor()]
        while self.accept_kw("and"):
            parts.append(self.parse_factor())
        if len(parts) == 1:
            return parts[0]
        return AndCond(tuple(parts))

    def parse_factor(self) -> Cond:
        self._check_unsupported()
        if self.peek().kind == "kw" and self.peek().value == "not":
            raise UnsupportedFeature("bare NOT is not supported (only NOT IN / IS NOT NULL)")
        if self.accept_punct("("):
            cond = self.parse_disjunction()
            self.expect_punct(")")
            return cond
        operand = self.parse_operand()
        tok = self.peek()
        if tok.kind == "op":
            self.next()
            if tok.value == "<>":
                raise UnsupportedFeature("<> is not supported; use NOT IN (value)")
            rhs = self.parse_operand()
            return BinOp(_CMP_OPS[tok.value], operand, rhs)
        if tok.kind == "kw" and tok.value in ("in", "not"):
            negated = bool(self.accept_kw("not"))
            self.expect_kw("in")
            return self.parse_in_tail(operand, negated)
        if tok.kind == "kw" and tok.value == "is":
            self.next()
            negated = bool(self.accept_kw("not"))
            self.expect_kw("null")
            return NullCond(operand, negated)
        raise SqlSyntaxError(f"expected comparison at offset {tok.pos}, got {tok.value!r}")

    def parse_in_tail(self, operand: Operand, negated: bool) -> InCond:
        self.expect_punct("(")
        if self.peek().kind == "kw" and self.peek().value == "select":
            sub = self.parse_select()
            self.expect_punct(")")
            return InCond(operand, None, sub, negated)
        values: list[Lit | CtxRef] = []
        while True:
            v = self.parse_operand()
            if isinstance(v, ColRef):
                raise SqlSyntaxError("IN list must contain constants or parameters")
            values.append(v)
            if not self.accept_punct(","):
                break
        self.expect_punct(")")
        return InCond(operand, tuple(values), None, negated)

    def parse_operand(self) -> Operand:
        tok = self.peek()
        if tok.kind == "num":
            self.next()
            return Lit(int(tok.value))
        if tok.kind == "str":
            self.next()
            return Lit(tok.value[1:-1].replace("''", "'"))
        if tok.kind == "kw" and tok.value in ("true", "false"):
            self.next()
            return Lit(tok.value == "true")
        if tok.kind == "kw" and tok.value == "null":
            self.next()
            return Lit(None)
        if tok.kind == "param":
            self.next()
            if self.param_i >= len(self.params):
                raise SqlSyntaxError("more ? placeholders than supplied parameters")
            value = self.params[self.param_i]
            self.param_i += 1
            return Lit(value)
        if tok.kind == "ctxparam":
            self.next()
            return CtxRef(tok.value[1:])
        if tok.kind == "ident":
            return self.parse_col_ref()
        self._check_unsupported()
        raise SqlSyntaxError(f"expected operand at offset {tok.pos}, got {tok.value!r}")

    def parse_col_ref(self) -> ColRef:
        name = self.expect_ident()
        if self.accept_punct("."):
            return ColRef(name, self.expect_ident())
        return ColRef(None, name)


def parse(sql: str, params: list[object] | None = None) -> QueryAst:
    """Parse SQL text, substituting positional ? placeholders with params."""
    return _Parser(tokenize(sql), list(params or [])).parse_query()
