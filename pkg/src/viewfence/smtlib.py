"""SMT-LIB 2.6 script construction and deterministic emission.

Formulas are nested tuples: ("and", f1, f2), ("or", ...), ("not", f),
("=>", a, b), ("=", a, b), ("distinct", t1, t2, ...), ("forall", vars, body),
("exists", vars, body), predicate applications ("P", t1, ...), or plain
symbol strings. `vars` is a tuple of (name, sort) pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

Term = object  # str | tuple


def sx(term: Term) -> str:
    if isinstance(term, str):
        return term
    if isinstance(term, tuple):
        head = term[0]
        if head in ("forall", "exists"):
            binders = " ".join(f"({n} {s})" for n, s in term[1])
            return f"({head} ({binders}) {sx(term[2])})"
        parts = " ".join(sx(t) for t in term[1:])
        return f"({head} {parts})" if parts else f"({head})"
    raise TypeError(term)


def conj_terms(parts: list[Term]) -> Term:
    flat: list[Term] = []
    for p in parts:
        if p == "true":
            continue
        if isinstance(p, tuple) and p[0] == "and":
            flat.extend(p[1:])
        else:
            flat.append(p)
    if not flat:
        return "true"
    if len(flat) == 1:
        return flat[0]
    return ("and", *flat)


def disj_terms(parts: list[Term]) -> Term:
    flat: list[Term] = []
    for p in parts:
        if p == "false":
            continue
        if isinstance(p, tuple) and p[0] == "or":
            flat.extend(p[1:])
        else:
            flat.append(p)
    if not flat:
        return "false"
    if len(flat) == 1:
        return flat[0]
    return ("or", *flat)


@dataclass
class SmtScript:
    logic: str
    sorts: list[str] = field(default_factory=list)
    consts: list[tuple[str, str]] = field(default_factory=list)
    funs: list[tuple[str, tuple[str, ...]]] = field(default_factory=list)  # Bool-valued
    assertions: list[tuple[str | None, Term]] = field(default_factory=list)

    @property
    def labels(self) -> list[str]:
        return [name for name, _ in self.assertions if name is not None]

    def declare_sort(self, name: str) -> None:
        if name not in self.sorts:
            self.sorts.append(name)

    def declare_const(self, name: str, sort: str) -> None:
        self.consts.append((name, sort))

    def declare_fun(self, name: str, arg_sorts: tuple[str, ...]) -> None:
        self.funs.append((name, arg_sorts))

    def assert_term(self, term: Term, label: str | None = None) -> None:
        if term == "true":
            return
        self.assertions.append((label, term))

    def to_text(self) -> str:
        lines = [f"(set-logic {self.logic})"]
        if self.labels:
            lines.append("(set-option :produce-unsat-cores true)")
        for s in self.sorts:
            lines.append(f"(declare-sort {s} 0)")
        for name, sort in self.consts:
            lines.append(f"(declare-const {name} {sort})")
        for name, args in self.funs:
            lines.append(f"(declare-fun {name} ({' '.join(args)}) Bool)")
        for label, term in self.assertions:
            if label is None:
                lines.append(f"(assert {sx(term)})")
            else:
                lines.append(f"(assert (! {sx(term)} :named {label}))")
        lines.append("(check-sat)")
        if self.labels:
            lines.append("(get-unsat-core)")
        lines.append("(exit)")
        return "\n".join(lines) + "\n"
