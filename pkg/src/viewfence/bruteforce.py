"""Brute-force decision procedures for compliance over finite domains.

Candidate databases are enumerated per table "component" (tables linked by a
shared query, constraint, or foreign key); a compliance witness only needs a
pair search inside the checked query's component, with every other component
contributing one trace-consistent state shared by both sides. Results are
deduplicated by (view results, query result) before the pair scan.

Completeness is relative to the DomainSpec: Compliant means no witness exists
within the domain; Exhausted means a size/time budget был hit first.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .basic import BasicQuery, Col, is_closed
from .oracle import Database, eval_pred, evaluate, _column_index
from .policy import (
    Containment,
    ForeignKeyConstraint,
    PolicyBundle,
    PrimaryKeyUnique,
    RequestContext,
    containment_rendering,
    instantiate_view,
)

COMPLIANT = "compliant"
NONCOMPLIANT = "noncompliant"
EXHAUSTED = "exhausted"


@dataclass(frozen=True)
class DomainSpec:
    """Finite constant pools per column kind plus a per-table row cap."""

    pools: dict[str, tuple]
    max_rows: int = 2

    def pool(self, kind: str) -> tuple:
        if kind not in self.pools or not self.pools[kind]:
            raise ValueError(f"domain has no constant pool for kind {kind!r}")
        return self.pools[kind]


def make_domain(
    n_ints: int = 3,
    n_strings: int = 2,
    n_timestamps: int = 2,
    max_rows: int = 2,
    extra: dict[str, tuple] | None = None,
) -> DomainSpec:
    pools: dict[str, tuple] = {
        "int": tuple(range(1, n_ints + 1)),
        "string": tuple(f"s{i}" for i in range(1, n_strings + 1)),
        "timestamp": tuple(10 * i for i in range(1, n_timestamps + 1)),
        "bool": (False, True),
    }
    for kind, values in (extra or {}).items():
        merged = list(pools[kind])
        for v in values:
            if v is not None and v not in merged:
                merged.append(v)
        pools[kind] = tuple(merged)
    return DomainSpec(pools, max_rows)


def domain_covering(policy: PolicyBundle, queries: list[BasicQuery], tuples: list[tuple],
                    max_rows: int = 2, padding: int = 1) -> DomainSpec:
    """Domain whose pools contain every constant appearing in the instance."""
    from .basic import Const, iter_query_operands

    extra: dict[str, list] = {"int": [], "string": [], "timestamp": [], "bool": []}
    for q in queries:
        for op in iter_query_operands(q):
            if isinstance(op, Const) and op.value is not None and op.kind in extra:
                extra[op.kind].append(op.value)
    for t in tuples:
        for v in t:
            if isinstance(v, bool):
                extra["bool"].append(v)
            elif isinstance(v, int):
                extra["int"].append(v)
            elif isinstance(v, str):
                extra["string"].append(v)
    base = make_domain(padding, padding, padding, max_rows,
                       {k: tuple(vs) for k, vs in extra.items()})
    return base


@dataclass
class OracleDecision:
    status: str
    witness: tuple[Database, Database] | None = None
    pair_checks: int = 0
    note: str = ""


# ---------------------------------------------------------------------------
# Table spaces


class _TableSpace:
    def __init__(self, tdef, dom: DomainSpec):
        self.tdef = tdef
        col_values = []
        for c in tdef.columns:
            vals = list(dom.pool(c.kind))
            if c.nullable:
                vals.append(None)
            col_values.append(vals)
        self.rows: list[tuple] = list(itertools.product(*col_values))
        self.states: list[tuple[int, ...]] = []
        key_idx = [[tdef.column_index(c) for c in key] for key in tdef.keys]
        for size in range(dom.max_rows + 1):
            for combo in itertools.combinations(range(len(self.rows)), size):
                ok = True
                for idx in key_idx:
                    seen = set()
                    for r in combo:
                        kv = tuple(self.rows[r][i] for i in idx)
                        if any(v is None for v in kv):
                            continue
                        if kv in seen:
                            ok = False
                            break
                        seen.add(kv)
                    if not ok:
                        break
                if ok:
                    self.states.append(combo)
        n, w = len(self.states), max(1, dom.max_rows)
        self.state_rows = np.full((n, w), -1, dtype=np.int32)
        self.state_counts = np.zeros(n, dtype=np.int32)
        for i, st in enumerate(self.states):
            self.state_counts[i] = len(st)
            for j, r in enumerate(st):
                self.state_rows[i, j] = r

    def state_db_rows(self, state_index: int) -> list[tuple]:
        return [self.rows[r] for r in self.states[state_index]]


class _TooWide(Exception):
    pass


class _TupleCoder:
    """Mixed-radix encoding of projected tuples into bit positions."""

    def __init__(self, cols: tuple[tuple[str, bool], ...], dom: DomainSpec):
        self.pools = [list(dom.pool(kind)) for kind, _ in cols]
        self.nullable = [n for _, n in cols]
        self.radix = [len(p) + (1 if n else 0) for p, n in zip(self.pools, self.nullable)]
        total = 1
        for r in self.radix:
            total *= r
        if total > 64:
            raise _TooWide(f"tuple universe of {total} exceeds 64")
        self.size = total

    def code(self, values: tuple) -> int | None:
        pos = 0
        for v, pool, r, nullable in zip(values, self.pools, self.radix, self.nullable):
            if v is None:
                if not nullable:
                    return None
                c = r - 1
            else:
                try:
                    c = pool.index(v)
                except ValueError:
                    return None
            pos = pos * r + c
        return pos

    def bit(self, values: tuple) -> int | None:
        c = self.code(values)
        return None if c is None else 1 << c


# ---------------------------------------------------------------------------
# Mask-grid evaluation over a component


class _Component:
    def __init__(self, tables: list[str], policy: PolicyBundle, dom: DomainSpec,
                 max_cells: int):
        self.tables = sorted(tables)
        self.axis = {t: i for i, t in enumerate(self.tables)}
        self.spaces = {t: _TableSpace(policy.schema.table(t), dom) for t in self.tables}
        self.shape = tuple(len(self.spaces[t].states) for t in self.tables)
        self.cells = 1
        for n in self.shape:
            self.cells *= n
        if self.cells > max_cells:
            raise _Budget(f"component {self.tables} has {self.cells} cells")
        self.policy = policy
        self.dom = dom
        self._mask_cache: dict[BasicQuery, np.ndarray] = {}
        self._coder_cache: dict[BasicQuery, _TupleCoder] = {}

    def coder(self, q: BasicQuery) -> _TupleCoder:
        if q not in self._coder_cache:
            kinds = q.projection_kinds()
            nullable = [False] * len(kinds)
            for block in q.blocks:
                for i, op in enumerate(block.projection):
                    if isinstance(op, Col):
                        tdef = self.policy.schema.table(block.tables[op.item])
                        nullable[i] |= tdef.column(op.column).nullable
                    else:
                        nullable[i] = True
            self._coder_cache[q] = _TupleCoder(tuple(zip(kinds, nullable)), self.dom)
        return self._coder_cache[q]

    def masks(self, q: BasicQuery) -> np.ndarray:
        """uint64 grid (component shape) of q's result mask per cell."""
        if q in self._mask_cache:
            return self._mask_cache[q]
        coder = self.coder(q)
        colidx = _column_index(self.policy.schema, q.tables_used())
        full = np.zeros(self.shape, dtype=np.uint64)
        for block in q.blocks:
            part = self._block_masks(block, coder, colidx)
            full |= part
        self._mask_cache[q] = full
        return full

    def _block_masks(self, block, coder: _TupleCoder, colidx) -> np.ndarray:
        items = block.tables
        spaces = [self.spaces[t] for t in items]
        if len(items) == 1:
            sp = spaces[0]
            P1 = np.zeros(len(sp.rows), dtype=np.uint64)
            for r, row in enumerate(sp.rows):
                if eval_pred(block.predicate, (row,), colidx, items):
                    values = tuple(row[colidx[items[0]][c.column]] for c in block.projection)
                    b = coder.bit(values)
                    if b is not None:
                        P1[r] = np.uint64(b)
            vec = kernels.eval_single(sp.state_rows, sp.state_counts, P1)
            return self._orient(vec, (items[0],))
        if len(items) == 2:
            sp0, sp1 = spaces
            P2 = np.zeros((len(sp0.rows), len(sp1.rows)), dtype=np.uint64)
            for r0, row0 in enumerate(sp0.rows):
                for r1, row1 in enumerate(sp1.rows):
                    if eval_pred(block.predicate, (row0, row1), colidx, items):
                        values = tuple(
                            (row0, row1)[c.item][colidx[items[c.item]][c.column]]
                            for c in block.projection
                        )
                        b = coder.bit(values)
                        if b is not None:
                            P2[r0, r1] = np.uint64(b)
            if items[0] == items[1]:
                vec = kernels.eval_self_pair(sp0.state_rows, sp0.state_counts, P2)
                return self._orient(vec, (items[0],))
            grid = kernels.eval_pair(
                sp0.state_rows, sp0.state_counts, sp1.state_rows, sp1.state_counts, P2
            )
            return self._orient(grid, (items[0], items[1]))
        return self._block_masks_general(block, coder, colidx)

    def _block_masks_general(self, block, coder: _TupleCoder, colidx) -> np.ndarray:
        """Fallback for blocks with three or more FROM items."""
        items = block.tables
        spaces = [self.spaces[t] for t in items]
        P: dict[tuple[int, ...], int] = {}
        for choice in itertools.product(*(range(len(sp.rows)) for sp in spaces)):
            rows = tuple(sp.rows[r] for sp, r in zip(spaces, choice))
            if eval_pred(block.predicate, rows, colidx, items):
                values = tuple(
                    rows[c.item][colidx[items[c.item]][c.column]]
                    for c in block.projection
                )
                b = coder.bit(values)
                if b is not None:
                    P[choice] = P.get(choice, 0) | b
        distinct = sorted(set(items), key=lambda t: self.axis[t])
        shape = tuple(len(self.spaces[t].states) for t in distinct)
        sub = np.zeros(shape, dtype=np.uint64)
        for cell in itertools.product(*(range(n) for n in shape)):
            state_of = {
                t: self.spaces[t].states[i] for t, i in zip(distinct, cell)
            }
            acc = 0
            for choice in itertools.product(*(state_of[t] for t in items)):
                acc |= P.get(choice, 0)
            sub[cell] = np.uint64(acc)
        full_shape = [1] * len(self.tables)
        for t, n in zip(distinct, shape):
            full_shape[self.axis[t]] = n
        out = np.zeros(self.shape, dtype=np.uint64)
        out |= sub.reshape(full_shape)
        return out

    def _orient(self, arr: np.ndarray, arr_tables: tuple[str, ...]) -> np.ndarray:
        """Broadcast a sub-grid over the component's full axis order."""
        axes = [self.axis[t] for t in arr_tables]
        if len(axes) == 2 and axes[0] > axes[1]:
            arr = arr.T
            axes = sorted(axes)
        shape = [1] * len(self.tables)
        for ax in axes:
            shape[ax] = self.shape[ax]
        out = np.zeros(self.shape, dtype=np.uint64)
        out |= arr.reshape(shape)
        return out

    def validity(self) -> np.ndarray:
        """Boolean grid: cell satisfies FK and containment constraints."""
        ok = np.ones(self.shape, dtype=bool)
        for c in self.policy.constraints:
            if isinstance(c, PrimaryKeyUnique):
                continue  # enforced during state enumeration
            if isinstance(c, ForeignKeyConstraint):
                fk = c.fk
                if fk.src_table not in self.axis or fk.dst_table not in self.axis:
                    continue
                ok &= self._fk_grid(fk)
            elif isinstance(c, Containment):
                tabs = c.lhs.tables_used() | c.rhs.tables_used()
                if not tabs <= set(self.tables):
                    continue
                lhs = self.masks(c.lhs)
                rhs = self.masks(c.rhs)
                ok &= (lhs & ~rhs) == 0
        return ok

    def _fk_grid(self, fk) -> np.ndarray:
        src_sp = self.spaces[fk.src_table]
        dst_sp = self.spaces[fk.dst_table]
        src_idx = [src_sp.tdef.column_index(c) for c in fk.src_cols]
        dst_idx = [dst_sp.tdef.column_index(c) for c in fk.dst_cols]
        src_keys = []
        for st in src_sp.states:
            keys = set()
            for r in st:
                kv = tuple(src_sp.rows[r][i] for i in src_idx)
                if all(v is not None for v in kv):
                    keys.add(kv)
            src_keys.append(keys)
        dst_keys = []
        for st in dst_sp.states:
            dst_keys.append(
                {tuple(dst_sp.rows[r][i] for i in dst_idx) for r in st}
            )
        ok2 = np.zeros((len(src_sp.states), len(dst_sp.states)), dtype=bool)
        for i, need in enumerate(src_keys):
            for j, have in enumerate(dst_keys):
                ok2[i, j] = need <= have
        if fk.src_table == fk.dst_table:
            diag = np.array([ok2[i, i] for i in range(len(src_sp.states))])
            return self._orient_bool(diag, (fk.src_table,))
        return self._orient_bool(ok2, (fk.src_table, fk.dst_table))

    def _orient_bool(self, arr: np.ndarray, arr_tables: tuple[str, ...]) -> np.ndarray:
        axes = [self.axis[t] for t in arr_tables]
        if len(axes) == 2 and axes[0] > axes[1]:
            arr = arr.T
            axes = sorted(axes)
        shape = [1] * len(self.tables)
        for ax in axes:
            shape[ax] = self.shape[ax]
        out = np.ones(self.shape, dtype=bool)
        out &= arr.reshape(shape)
        return out

    def decode_cell(self, flat: int) -> dict[str, list[tuple]]:
        idx = np.unravel_index(flat, self.shape)
        return {
            t: self.spaces[t].state_db_rows(int(i)) for t, i in zip(self.tables, idx)
        }


class _Budget(Exception):
    pass


# ---------------------------------------------------------------------------
# Trace conditions


def _trace_against(comp: _Component, entries, mode: str) -> np.ndarray:
    """Boolean grid: cell is consistent with the trace entries of this comp."""
    ok = np.ones(comp.shape, dtype=bool)
    local = [e for e in entries if e.query.tables_used() <= set(comp.tables)]
    if mode == "strong":
        for e in local:
            mask = comp.masks(e.query)
            bit = comp.coder(e.query).bit(tuple(e.row))
            if bit is None:
                return np.zeros(comp.shape, dtype=bool)
            b = np.uint64(bit)
            ok &= (mask & b) == b
        return ok
    groups: dict[BasicQuery, list] = {}
    for e in local:
        groups.setdefault(e.query, []).append(e)
    for q, es in groups.items():
        mask = comp.masks(q)
        coder = comp.coder(q)
        required = 0
        for e in es:
            bit = coder.bit(tuple(e.row))
            if bit is None:
                return np.zeros(comp.shape, dtype=bool)
            required |= bit
        req = np.uint64(required)
        if any(getattr(e, "limit_dropped", False) for e in es):
            ok &= (mask & req) == req
        else:
            ok &= mask == req
    return ok


# ---------------------------------------------------------------------------
# Public operations


def _components(policy: PolicyBundle, queries: list[BasicQuery]) -> list[set[str]]:
    parent: dict[str, str] = {}

    def find(x: str) -> str:
        parent.setdefault(x, x)
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a: str, b: str) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb

    for q in queries:
        tabs = sorted(q.tables_used())
        for t in tabs:
            find(t)
        for a, b in zip(tabs, tabs[1:]):
            union(a, b)
    for c in policy.constraints:
        if isinstance(c, ForeignKeyConstraint):
            union(c.fk.src_table, c.fk.dst_table)
        elif isinstance(c, Containment):
            tabs = sorted(c.lhs.tables_used() | c.rhs.tables_used())
            for a, b in zip(tabs, tabs[1:]):
                union(a, b)
    comps: dict[str, set[str]] = {}
    for t in parent:
        comps.setdefault(find(t), set()).add(t)
    return list(comps.values())


def oracle_decide(
    mode: str,
    query: BasicQuery,
    trace,
    policy: PolicyBundle,
    ctx: RequestContext,
    dom: DomainSpec,
    max_cells: int = 4_000_000,
    max_pair_checks: int = 20_000_000,
) -> OracleDecision:
    """Exhaustive witness search for (strong) compliance over dom.

    mode "compliance": both databases agree on all views and reproduce the
    trace exactly; a witness makes the query's results differ.
    mode "strong": D1 reproduces at least the trace rows, views of D1 are
    contained in views of D2; a witness makes Q(D1) escape Q(D2).
    """
    assert mode in ("compliance", "strong")
    assert is_closed(query)
    views = [instantiate_view(v, ctx) for v in policy.views]
    all_queries = [query, *views, *(e.query for e in trace)]
    try:
        comp_sets = _components(policy, all_queries)
        q_tables = query.tables_used()
        comps: list[_Component] = []
        qcomp: _Component | None = None
        for tabs in comp_sets:
            comp = _Component(sorted(tabs), policy, dom, max_cells)
            comps.append(comp)
            if q_tables <= tabs:
                qcomp = comp
        assert qcomp is not None
    except _Budget as e:
        return OracleDecision(EXHAUSTED, note=str(e))

    # Every non-query component only needs one trace-consistent valid cell,
    # shared by both sides of the witness pair.
    shared_cells: dict[int, int] = {}
    for i, comp in enumerate(comps):
        valid = comp.validity() & _trace_against(comp, trace, mode)
        flat = valid.reshape(-1)
        hits = np.flatnonzero(flat)
        if len(hits) == 0:
            return OracleDecision(COMPLIANT, note="trace unsatisfiable within domain")
        shared_cells[i] = int(hits[0])

    comp = qcomp
    comp_views = [v for v in views if v.tables_used() <= set(comp.tables)]
    valid = comp.validity().reshape(-1)
    tv = _trace_against(comp, trace, mode).reshape(-1)
    cols = [comp.masks(v).reshape(-1) for v in comp_views]
    qmask = comp.masks(query).reshape(-1)
    keep = np.flatnonzero(valid)
    if len(keep) == 0:
        return OracleDecision(COMPLIANT, note="no constraint-satisfying database within domain")
    nviews = len(comp_views)

    def dedup(rows_idx: np.ndarray):
        stacked = np.stack(
            [*(c[rows_idx] for c in cols), qmask[rows_idx]], axis=1
        ) if len(rows_idx) else np.zeros((0, nviews + 1), dtype=np.uint64)
        uniq, first = np.unique(stacked, axis=0, return_index=True)
        return uniq[:, :nviews], uniq[:, nviews:], rows_idx[first]

    if mode == "strong":
        side1_idx = keep[tv[keep]]
        if len(side1_idx) == 0:
            return OracleDecision(COMPLIANT, note="trace unsatisfiable within domain")
        v1, q1, rep1 = dedup(side1_idx)
        v2, q2, rep2 = dedup(keep)
        # Group both sides by view image. Some member of a D1 group escapes a
        # query-result set iff the union of the group's query results does;
        # some member of a D2 group is escaped iff the intersection is.
        g1v, g1q, g1members = _group_by_views(v1, q1, nviews, np.bitwise_or)
        g2v, g2q, g2members = _group_by_views(v2, q2, nviews, np.bitwise_and)
        i, g, checks = kernels.subset_scan(
            np.ascontiguousarray(g1v),
            np.ascontiguousarray(g1q),
            np.ascontiguousarray(g2v),
            np.ascontiguousarray(g2q),
            max_pair_checks,
        )
        if i == -2:
            return OracleDecision(EXHAUSTED, pair_checks=checks, note="pair budget exceeded")
        if i == -1:
            return OracleDecision(COMPLIANT, pair_checks=checks)
        qint = int(g2q[g, 0])
        a = next(k for k in g1members[i] if int(q1[k, 0]) & ~qint)
        escape = int(q1[a, 0])
        j = next(k for k in g2members[g] if escape & ~int(q2[k, 0]))
        c1, c2 = int(rep1[a]), int(rep2[j])
        return OracleDecision(
            NONCOMPLIANT,
            witness=_decode_witness(comps, shared_cells, comp, c1, c2, policy),
            pair_checks=checks,
        )

    side_idx = keep[tv[keep]]
    vwords, qwords, rep_flat = dedup(side_idx)
    groups: dict[tuple, list[int]] = {}
    for k in range(vwords.shape[0]):
        groups.setdefault(tuple(int(x) for x in vwords[k]), []).append(k)
    checks = 0
    for members in groups.values():
        checks += len(members)
        a = members[0]
        for k in members[1:]:
            if int(qwords[k, 0]) != int(qwords[a, 0]):
                c1, c2 = int(rep_flat[a]), int(rep_flat[k])
                return OracleDecision(
                    NONCOMPLIANT,
                    witness=_decode_witness(comps, shared_cells, comp, c1, c2, policy),
                    pair_checks=checks,
                )
    return OracleDecision(COMPLIANT, pair_checks=checks)


def _group_by_views(v: np.ndarray, q: np.ndarray, nviews: int, combine):
    index: dict[tuple, int] = {}
    gv: list[np.ndarray] = []
    gq: list[int] = []
    members: list[list[int]] = []
    for k in range(v.shape[0]):
        key = tuple(int(x) for x in v[k])
        if key not in index:
            index[key] = len(gv)
            gv.append(v[k])
            gq.append(int(q[k, 0]))
            members.append([k])
        else:
            g = index[key]
            gq[g] = int(combine(np.uint64(gq[g]), np.uint64(q[k, 0])))
            members[g].append(k)
    out_v = np.stack(gv, axis=0) if gv else np.zeros((0, nviews), dtype=np.uint64)
    out_q = np.array(gq, dtype=np.uint64).reshape(-1, 1)
    return out_v, out_q, members


def _decode_witness(comps, shared_cells, qcomp, c1, c2, policy) -> tuple[Database, Database]:
    rows1: dict[str, list[tuple]] = {t.name: [] for t in policy.schema.tables}
    rows2: dict[str, list[tuple]] = {t.name: [] for t in policy.schema.tables}
    for i, comp in enumerate(comps):
        if comp is qcomp:
            d1, d2 = comp.decode_cell(c1), comp.decode_cell(c2)
        else:
            d1 = d2 = comp.decode_cell(shared_cells[i])
        for t, rs in d1.items():
            rows1[t] = rs
        for t, rs in d2.items():
            rows2[t] = rs
    return (
        Database({t: frozenset(rs) for t, rs in rows1.items()}),
        Database({t: frozenset(rs) for t, rs in rows2.items()}),
    )


def trace_feasible(trace, policy: PolicyBundle, dom: DomainSpec,
                   max_cells: int = 2_000_000) -> bool:
    """True iff some constraint-satisfying database yields every trace row."""
    queries = [e.query for e in trace]
    if not queries:
        return True
    try:
        for tabs in _components(policy, queries):
            comp = _Component(sorted(tabs), policy, dom, max_cells)
            ok = comp.validity() & _trace_against(comp, trace, "strong")
            if not ok.any():
                return False
    except _Budget:
        return False
    return True
