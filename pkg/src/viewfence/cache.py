"""Thread-safe decision cache: verified templates indexed by query shape.

Matching searches for a valuation mapping the template's variables so that
its parameterized query equals the checked query, every premise entry maps
into some trace entry, and the condition holds; recursive backtracking binds
the conclusion query first, then premise entries ordered most-bound-first.
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass

from .basic import BasicQuery, Col, Const, Operand, Var, query_signature
from .errors import UnverifiedTemplate
from .policy import RequestContext
from .templates import CandidateAtom, DecisionTemplate, PremiseEntry

Valuation = dict[str, object]


def _unify_operand(pat: Operand, concrete: Operand, nu: Valuation) -> bool:
    if isinstance(pat, Var):
        if isinstance(concrete, Const):
            value = concrete.value
        elif isinstance(concrete, Var):
            return False  # concrete queries are closed
        else:
            return False
        if pat.name in nu:
            return nu[pat.name] == value
        nu[pat.name] = value
        return True
    if isinstance(pat, Const) and isinstance(concrete, Const):
        return pat.value == concrete.value and pat.kind == concrete.kind
    if isinstance(pat, Col) and isinstance(concrete, Col):
        return pat == concrete
    return False


def _unify_value(pat, concrete, nu: Valuation) -> bool:
    if isinstance(pat, Var):
        if pat.name in nu:
            return nu[pat.name] == concrete
        nu[pat.name] = concrete
        return True
    return pat == concrete


def unify_query(pat: BasicQuery, concrete: BasicQuery, nu: Valuation) -> bool:
    """Structural unification; pattern variables bind to constants."""
    if len(pat.blocks) != len(concrete.blocks):
        return False
    for pb, cb in zip(pat.blocks, concrete.blocks):
        if pb.tables != cb.tables or len(pb.projection) != len(cb.projection):
            return False
        for p, c in zip(pb.projection, cb.projection):
            if not _unify_operand(p, c, nu):
                return False
        if not _unify_pred(pb.predicate, cb.predicate, nu):
            return False
    return True


def _unify_pred(pat, concrete, nu: Valuation) -> bool:
    from .basic import And, Cmp, InList, NullTest, Or

    if type(pat) is not type(concrete):
        return False
    if isinstance(pat, (And, Or)):
        if len(pat.parts) != len(concrete.parts):
            return False
        return all(
            _unify_pred(p, c, nu) for p, c in zip(pat.parts, concrete.parts)
        )
    if isinstance(pat, Cmp):
        if pat.op != concrete.op:
            return False
        return _unify_operand(pat.lhs, concrete.lhs, nu) and _unify_operand(
            pat.rhs, concrete.rhs, nu
        )
    if isinstance(pat, InList):
        if pat.negated != concrete.negated or len(pat.values) != len(concrete.values):
            return False
        if not _unify_operand(pat.lhs, concrete.lhs, nu):
            return False
        return all(
            _unify_operand(p, c, nu) for p, c in zip(pat.values, concrete.values)
        )
    if isinstance(pat, NullTest):
        return pat.negated == concrete.negated and _unify_operand(
            pat.operand, concrete.operand, nu
        )
    raise TypeError(pat)


def _condition_holds(condition, nu: Valuation) -> bool:
    for atom in condition:
        missing = [v for v in atom.vars() if v.name not in nu]
        if missing:
            return False  # unbound condition variable: no match
        if not atom.holds(nu):
            return False
    return True


def match_template(
    template: DecisionTemplate, q: BasicQuery, trace, ctx: RequestContext
) -> Valuation | None:
    """Valuation satisfying the four match clauses, or None."""
    nu: Valuation = dict(ctx.params)
    if not unify_query(template.query, q, nu):
        return None
    entries = list(trace)

    def bound_count(entry: PremiseEntry, nu: Valuation) -> int:
        n = 0
        for v in entry.row:
            if isinstance(v, Var) and v.name in nu:
                n += 1
        return n

    def backtrack(remaining: list[PremiseEntry], nu: Valuation):
        if not remaining:
            return nu if _condition_holds(template.condition, nu) else None
        remaining = sorted(
            remaining, key=lambda e: -bound_count(e, nu)
        )
        head, rest = remaining[0], remaining[1:]
        head_sig = query_signature(head.query)
        for te in entries:
            if query_signature(te.query) != head_sig:
                continue
            trial = dict(nu)
            if not unify_query(head.query, te.query, trial):
                continue
            if len(head.row) != len(te.row):
                continue
            if not all(
                _unify_value(p, c, trial) for p, c in zip(head.row, te.row)
            ):
                continue
            got = backtrack(rest, trial)
            if got is not None:
                return got
        return None

    return backtrack(list(template.premise), nu)


class DecisionCache:
    """Linearizable insert/match; optional LRU bound on stored templates."""

    def __init__(self, max_entries: int | None = None):
        self._lock = threading.Lock()
        self._buckets: dict[object, list[DecisionTemplate]] = {}
        self._order: list[DecisionTemplate] = []  # LRU, least recent first
        self.max_entries = max_entries
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        with self._lock:
            return len(self._order)

    def templates(self) -> list[DecisionTemplate]:
        with self._lock:
            return list(self._order)

    def insert(self, template: DecisionTemplate) -> None:
        if not template.verified:
            raise UnverifiedTemplate("refusing to cache an unverified template")
        sig = query_signature(template.query)
        with self._lock:
            bucket = self._buckets.setdefault(sig, [])
            if template in bucket:
                return
            bucket.append(template)
            self._order.append(template)
            if self.max_entries is not None and len(self._order) > self.max_entries:
                victim = self._order.pop(0)
                vsig = query_signature(victim.query)
                self._buckets[vsig].remove(victim)

    def match(self, q: BasicQuery, trace, ctx: RequestContext) -> Valuation | None:
        sig = query_signature(q)
        with self._lock:
            bucket = list(self._buckets.get(sig, ()))
        for template in bucket:
            nu = match_template(template, q, trace, ctx)
            if nu is not None:
                with self._lock:
                    self.hits += 1
                    if template in self._order:
                        self._order.remove(template)
                        self._order.append(template)
                return nu
        with self._lock:
            self.misses += 1
        return None
