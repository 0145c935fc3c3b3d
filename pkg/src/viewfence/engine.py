"""Per-request compliance sessions: fast accept, cache, split, solve, trace.

A session owns the request trace; the policy, solver harness, and decision
cache are shared. Allowing a query appends its observed rows to the trace;
denials leave the trace untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import sqlast
from .backend import SolverHarness
from .basic import BasicQuery, Col, Const, TRUE, iter_query_operands, query_signature
from .cache import DecisionCache
from .encode import encode_strong_compliance
from .errors import (
    NotSplittable,
    ParseError,
    ResolutionError,
    SessionClosed,
    SqlSyntaxError,
    UnsupportedFeature,
)
from .frontend import NotBasic, RewriteResult, classify_basic, resolve, rewrite_to_basic, split_in
from .policy import PolicyBundle, RequestContext
from .schema import kinds_compatible, value_kind
from .templates import generate_template

PRUNE_THRESHOLD = 10


@dataclass(frozen=True)
class TraceEntry:
    query: BasicQuery
    row: tuple
    origin: int
    limit_dropped: bool = False


@dataclass(frozen=True)
class Decision:
    allowed: bool
    reason: str = ""  # "" | "noncompliant" | "unknown" | "unsupported"
    decided_by: str = ""  # fast_accept | cache | split | solver | error
    detail: str = ""


@dataclass
class SessionStats:
    queries: int = 0
    allows: int = 0
    denies: int = 0
    fast_accepts: int = 0
    cache_hits: int = 0
    cache_misses: int = 0
    solver_checks: int = 0
    solver_calls: int = 0
    templates_generated: int = 0


def analyze_sql(sql: str, params, policy: PolicyBundle) -> RewriteResult:
    resolved = resolve(sqlast.parse(sql, list(params)), policy.schema)
    out = classify_basic(resolved, policy.schema)
    if isinstance(out, NotBasic):
        return rewrite_to_basic(resolved, policy.schema, policy.foreign_keys)
    return RewriteResult(out, True, False)


def fast_accept(q: BasicQuery, policy: PolicyBundle) -> bool:
    """Solver-free allow: a whole-table view covers every referenced column."""
    refs: set[tuple[str, str]] = set()
    for block in q.blocks:
        for op in block.projection:
            if isinstance(op, Col):
                refs.add((block.tables[op.item], op.column))
        for op in _pred_cols(block):
            refs.add(op)
    for view in policy.views:
        vq = view.query
        if len(vq.blocks) != 1:
            continue
        vb = vq.blocks[0]
        if len(vb.tables) != 1 or vb.predicate != TRUE:
            continue
        if any(not isinstance(p, Col) for p in vb.projection):
            continue
        table = vb.tables[0]
        cols = {p.column for p in vb.projection}
        if all(t == table and c in cols for t, c in refs):
            return True
    return False


def _pred_cols(block):
    from .basic import iter_pred_operands

    for op in iter_pred_operands(block.predicate):
        if isinstance(op, Col):
            yield (block.tables[op.item], op.column)


def prune_trace(trace: list[TraceEntry], q: BasicQuery, policy: PolicyBundle) -> list[TraceEntry]:
    """Thin out origins that contributed more than PRUNE_THRESHOLD rows.

    From such origins, keep only rows containing the first occurrence of a
    primary-key value that appears as a constant in q. Used for checking
    only; the session trace is never replaced.
    """
    q_consts = {
        op.value
        for op in iter_query_operands(q)
        if isinstance(op, Const) and op.value is not None
    }
    by_origin: dict[int, int] = {}
    for e in trace:
        by_origin[e.origin] = by_origin.get(e.origin, 0) + 1
    big = {o for o, n in by_origin.items() if n > PRUNE_THRESHOLD}
    if not big:
        return list(trace)
    out: list[TraceEntry] = []
    seen_values: dict[int, set] = {o: set() for o in big}
    for e in trace:
        if e.origin not in big:
            out.append(e)
            continue
        keep = False
        for value, proj in zip(e.row, e.query.blocks[0].projection):
            if not isinstance(proj, Col) or value is None:
                continue
            table = e.query.blocks[0].tables[proj.item]
            if proj.column not in policy.schema.table(table).primary_key:
                continue
            if value in q_consts and value not in seen_values[e.origin]:
                keep = True
            seen_values[e.origin].add(value)
        if keep:
            out.append(e)
    return out


class ComplianceEngine:
    """Shared policy + solvers + cache; sessions are created per request."""

    def __init__(
        self,
        policy: PolicyBundle,
        solver: SolverHarness | None = None,
        cache: DecisionCache | None = None,
        cache_enabled: bool = True,
        log_only: bool = False,
    ):
        self.policy = policy
        self.solver = solver if solver is not None else SolverHarness()
        self.cache = cache if cache is not None else DecisionCache()
        self.cache_enabled = cache_enabled
        self.log_only = log_only

    def begin_request(self, ctx_params: dict[str, object]) -> "Session":
        ctx = self.policy.make_context(ctx_params)
        return Session(self, ctx)


class Session:
    def __init__(self, engine: ComplianceEngine, ctx: RequestContext):
        self.engine = engine
        self.ctx = ctx
        self.trace: list[TraceEntry] = []
        self.stats = SessionStats()
        self._closed = False
        self._ordinal = 0

    # -- pipeline --------------------------------------------------------------

    def check_query(self, sql: str, params=(), observed_rows=()) -> Decision:
        if self._closed:
            raise SessionClosed("session already ended")
        self.stats.queries += 1
        engine = self.engine
        try:
            rr = analyze_sql(sql, params, engine.policy)
        except (SqlSyntaxError, UnsupportedFeature, ResolutionError) as e:
            self.stats.denies += 1
            return Decision(False, "unsupported", "error", str(e))
        q = rr.query
        rows = [tuple(r) for r in observed_rows]
        self._validate_rows(q, rows)

        decision = self._decide(q)
        if decision.allowed or engine.log_only:
            ordinal = self._ordinal
            for row in rows:
                self.trace.append(TraceEntry(q, row, ordinal, rr.limit_dropped))
        self._ordinal += 1
        if decision.allowed:
            self.stats.allows += 1
        else:
            self.stats.denies += 1
        return decision

    def _validate_rows(self, q: BasicQuery, rows) -> None:
        kinds = q.projection_kinds()
        for row in rows:
            if len(row) != len(kinds):
                raise ParseError(
                    f"observed row arity {len(row)} does not match query arity {len(kinds)}"
                )
            for v, k in zip(row, kinds):
                if v is not None and not kinds_compatible(value_kind(v), k):
                    raise ParseError(f"observed value {v!r} incompatible with {k} column")

    def _decide(self, q: BasicQuery) -> Decision:
        engine = self.engine
        if fast_accept(q, engine.policy):
            self.stats.fast_accepts += 1
            return Decision(True, decided_by="fast_accept")
        if engine.cache_enabled:
            if engine.cache.match(q, self.trace, self.ctx) is not None:
                self.stats.cache_hits += 1
                return Decision(True, decided_by="cache")
            self.stats.cache_misses += 1
        split_result = self._try_split(q)
        if split_result is not None:
            return split_result
        return self._solve_whole(q)

    def _try_split(self, q: BasicQuery) -> Decision | None:
        engine = self.engine
        try:
            parts = split_in(q)
        except NotSplittable:
            return None
        if len(parts) <= 1:
            return None
        for part in parts:
            if engine.cache_enabled and engine.cache.match(part, self.trace, self.ctx) is not None:
                self.stats.cache_hits += 1
                continue
            if engine.cache_enabled:
                self.stats.cache_misses += 1
            out = self._solver_check(part)
            if not out.is_unsat:
                return None  # revert to checking the whole query
            self._generalize(part)
        return Decision(True, decided_by="split")

    def _solve_whole(self, q: BasicQuery) -> Decision:
        out = self._solver_check(q)
        if out.is_unsat:
            self._generalize(q, seed=out.core)
            return Decision(True, decided_by="solver")
        if out.is_sat:
            return Decision(False, "noncompliant", "solver")
        return Decision(False, "unknown", "solver", out.reason)

    def _solver_check(self, q: BasicQuery):
        engine = self.engine
        pruned = prune_trace(self.trace, q, engine.policy)
        script = encode_strong_compliance(engine.policy, self.ctx, pruned, q)
        self.stats.solver_checks += 1
        before = engine.solver.calls
        out = engine.solver.check(script)
        self.stats.solver_calls += engine.solver.calls - before
        self._last_pruned = pruned
        return out

    def _generalize(self, q: BasicQuery, seed: frozenset[str] | None = None) -> None:
        engine = self.engine
        if not engine.cache_enabled:
            return
        pruned = getattr(self, "_last_pruned", list(self.trace))
        template = generate_template(
            q, pruned, self.ctx, engine.policy, engine.solver, seed_labels=seed
        )
        if template is not None:
            engine.cache.insert(template)
            self.stats.templates_generated += 1

    def end_request(self) -> SessionStats:
        if self._closed:
            raise SessionClosed("session already ended")
        self._closed = True
        self.trace = []
        return self.stats
