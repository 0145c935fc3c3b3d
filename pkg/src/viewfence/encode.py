"""Compilation of compliance questions into SMT-LIB scripts.

Two flavors share one builder: unbounded scripts model tables as
uninterpreted relations (quantified UF, transitivity axiom for <), bounded
scripts materialize each table as a conditional table of fresh row variables
with boolean existence flags (quantifier-free, no transitivity).

SQL predicates use the two-valued NULL translation: `a = b` becomes
(= a b) plus non-NULL guards; tuple identity in set-membership formulas uses
raw SMT equality so NULL-valued positions compare as values.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .basic import (
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
    Var,
)
from .policy import PolicyBundle, PrimaryKeyUnique, RequestContext, containment_rendering, instantiate_view
from .schema import ORDERED_KINDS
from .smtlib import SmtScript, Term, conj_terms, disj_terms

BoundsMap = dict[str, int]


def _pointwise_form(lhs: BasicQuery, rhs: BasicQuery, schema):
    """Detect lhs ⊆ rhs pairs that reduce to a pointwise implication.

    When both sides are one block over the same tables, project every column
    of every FROM item identically, and rhs's predicate extends lhs's, the
    rhs witness is forced equal to the lhs row, so the containment is
    equivalent to: the lhs row satisfies rhs's extra conjuncts. This covers
    the key-uniqueness renderings without existential invention.
    """
    from .basic import conjuncts

    if len(lhs.blocks) != 1 or len(rhs.blocks) != 1:
        return None
    lb, rb = lhs.blocks[0], rhs.blocks[0]
    if lb.tables != rb.tables or lb.projection != rb.projection:
        return None
    projected = {(c.item, c.column) for c in lb.projection if isinstance(c, Col)}
    for item, table in enumerate(lb.tables):
        for col in schema.table(table).columns:
            if (item, col.name) not in projected:
                return None
    lparts = conjuncts(lb.predicate)
    rparts = conjuncts(rb.predicate)
    if len(rparts) < len(lparts) or tuple(rparts[: len(lparts)]) != tuple(lparts):
        return None
    return lb, And(tuple(rparts[len(lparts) :]))


class ScriptBuilder:
    def __init__(self, policy: PolicyBundle, logic: str):
        self.policy = policy
        self.script = SmtScript(logic)
        self.quantified = logic == "UF"
        self._interned: dict[tuple[str, object], str] = {}
        self._lit_counter: dict[str, itertools.count] = {}
        self._fresh = itertools.count()
        self._qvar = itertools.count()
        self._sorts_declared: set[str] = set()
        self._tables_declared: dict[tuple[str, str], str] = {}
        self._vars_declared: dict[str, str] = {}
        self._lt_used: set[str] = set()
        self._literal_names: set[str] = set()
        self._consts_by_sort: dict[str, list[str]] = {}

    # -- sorts and constants -------------------------------------------------

    def sort(self, kind: str) -> str:
        name = f"S_{kind}"
        if kind not in self._sorts_declared:
            self._sorts_declared.add(kind)
            self.script.declare_sort(name)
            null = f"null_{kind}"
            self.script.declare_const(null, name)
        return name

    def null(self, kind: str) -> str:
        self.sort(kind)
        return f"null_{kind}"

    def lit(self, kind: str, value: object) -> str:
        if value is None:
            return self.null(kind)
        key = (kind, value)
        if key not in self._interned:
            sort = self.sort(kind)
            n = next(self._lit_counter.setdefault(kind, itertools.count()))
            name = f"k_{kind}_{n}"
            self._interned[key] = name
            self._literal_names.add(name)
            self.script.declare_const(name, sort)
            self._consts_by_sort.setdefault(kind, []).append(name)
        return self._interned[key]

    def fresh(self, prefix: str, kind: str) -> str:
        sort = self.sort(kind)
        name = f"{prefix}{next(self._fresh)}"
        self.script.declare_const(name, sort)
        self._consts_by_sort.setdefault(kind, []).append(name)
        return name

    def fresh_bool_flag(self, name: str) -> str:
        self.script.declare_const(name, "Bool")
        return name

    def var(self, v: Var) -> str:
        name = f"v_{v.name}"
        if name not in self._vars_declared:
            sort = self.sort(v.kind)
            self._vars_declared[name] = v.kind
            self.script.declare_const(name, sort)
            self._consts_by_sort.setdefault(v.kind, []).append(name)
        return name

    def table_pred(self, db: str, table: str) -> str:
        key = (db, table)
        if key not in self._tables_declared:
            tdef = self.policy.schema.table(table)
            name = f"T{db[-1]}_{table}"
            args = tuple(self.sort(c.kind) for c in tdef.columns)
            self.script.declare_fun(name, args)
            self._tables_declared[key] = name
        return self._tables_declared[key]

    def lt_pred(self, kind: str) -> str:
        self._lt_used.add(kind)
        name = f"lt_{kind}"
        sort = self.sort(kind)
        if not any(f[0] == name for f in self.script.funs):
            self.script.declare_fun(name, (sort, sort))
        return name

    # -- operand / predicate translation --------------------------------------

    def operand(self, op: Operand, colmap: dict[tuple[int, str], Term]) -> tuple[Term, str]:
        if isinstance(op, Col):
            return colmap[(op.item, op.column)], op.kind
        if isinstance(op, Const):
            return self.lit(op.kind, op.value), op.kind
        if isinstance(op, Var):
            return self.var(op), op.kind
        raise TypeError(op)

    def _guard(self, term: Term, op: Operand, kind: str) -> list[Term]:
        # literal constants are distinct from NULL by axiom
        if isinstance(op, Const) or (isinstance(term, str) and term in self._literal_names):
            return []
        return [("not", ("=", term, self.null(kind)))]

    def pred(self, p: Pred, colmap: dict[tuple[int, str], Term]) -> Term:
        if isinstance(p, Cmp):
            a, kind = self.operand(p.lhs, colmap)
            b, _ = self.operand(p.rhs, colmap)
            guards = self._guard(a, p.lhs, kind) + self._guard(b, p.rhs, kind)
            if p.op == "eq":
                return conj_terms([("=", a, b), *guards])
            lt = self.lt_pred(kind)
            if p.op == "lt":
                return conj_terms([(lt, a, b), *guards])
            return conj_terms([disj_terms([(lt, a, b), ("=", a, b)]), *guards])
        if isinstance(p, InList):
            a, kind = self.operand(p.lhs, colmap)
            arms = []
            for v in p.values:
                b, _ = self.operand(v, colmap)
                guards = self._guard(a, p.lhs, kind) + self._guard(b, v, kind)
                arms.append(conj_terms([("=", a, b), *guards]))
            body = disj_terms(arms)
            return ("not", body) if p.negated else body
        if isinstance(p, NullTest):
            a, kind = self.operand(p.operand, colmap)
            body = ("=", a, self.null(kind))
            return ("not", body) if p.negated else body
        if isinstance(p, And):
            return conj_terms([self.pred(x, colmap) for x in p.parts])
        if isinstance(p, Or):
            return disj_terms([self.pred(x, colmap) for x in p.parts])
        raise TypeError(p)

    # -- unbounded membership --------------------------------------------------

    def block_body(self, block, db: str, tuple_terms, make_col):
        """(bound_vars, body): table atoms, predicate, projection bindings.

        Projected columns are substituted with the given tuple terms
        directly; only repeated projections of one column need an equality.
        """
        colmap: dict[tuple[int, str], Term] = {}
        extras: list[Term] = []
        if tuple_terms is not None:
            for t_term, proj in zip(tuple_terms, block.projection):
                assert isinstance(proj, Col)
                key = (proj.item, proj.column)
                if key in colmap:
                    extras.append(("=", t_term, colmap[key]))
                else:
                    colmap[key] = t_term
        bound: list[tuple[str, str]] = []
        for item, table in enumerate(block.tables):
            tdef = self.policy.schema.table(table)
            for c in tdef.columns:
                if (item, c.name) not in colmap:
                    colmap[(item, c.name)] = make_col(item, c.name, c.kind, bound)
        atoms: list[Term] = []
        for item, table in enumerate(block.tables):
            tdef = self.policy.schema.table(table)
            pred = self.table_pred(db, table)
            atoms.append((pred, *(colmap[(item, c.name)] for c in tdef.columns)))
            for c in tdef.columns:
                term = colmap[(item, c.name)]
                if not c.nullable and term not in self._literal_names:
                    atoms.append(("not", ("=", term, self.null(c.kind))))
        body = conj_terms([*atoms, *extras, self.pred(block.predicate, colmap)])
        return bound, body

    def membership_exists(self, q: BasicQuery, db: str, tuple_terms) -> Term:
        arms = []
        for block in q.blocks:
            def make_col(item, col, kind, bound):
                name = f"q{next(self._qvar)}"
                bound.append((name, self.sort(kind)))
                return name

            bound, body = self.block_body(block, db, tuple_terms, make_col)
            arms.append(("exists", tuple(bound), body) if bound else body)
        return disj_terms(arms)

    def membership_skolem(self, q: BasicQuery, db: str, tuple_terms) -> Term:
        arms = []
        for block in q.blocks:
            def make_col(item, col, kind, bound):
                return self.fresh("sk", kind)

            _, body = self.block_body(block, db, tuple_terms, make_col)
            arms.append(body)
        return disj_terms(arms)

    def containment(self, lhs: BasicQuery, rhs: BasicQuery, db: str) -> list[Term]:
        """One quantified assertion per lhs block: lhs row in rhs result."""
        if pointwise := _pointwise_form(lhs, rhs, self.policy.schema):
            block, extra_pred = pointwise

            def make_col(item, col, kind, bound):
                name = f"q{next(self._qvar)}"
                bound.append((name, self.sort(kind)))
                return name

            bound, body = self.block_body(block, db, None, make_col)
            colmap = self._colmap_of(block, bound)
            return [("forall", tuple(bound), ("=>", body, self.pred(extra_pred, colmap)))]
        out = []
        for block in lhs.blocks:
            def make_col(item, col, kind, bound):
                name = f"q{next(self._qvar)}"
                bound.append((name, self.sort(kind)))
                return name

            bound, body = self.block_body(block, db, None, make_col)
            proj_terms = self._projection_terms(block, bound)
            rhs_member = self.membership_exists(rhs, db, proj_terms)
            out.append(("forall", tuple(bound), ("=>", body, rhs_member)))
        return out

    def _colmap_of(self, block, bound):
        names = {}
        i = 0
        for item, table in enumerate(block.tables):
            for c in self.policy.schema.table(table).columns:
                names[(item, c.name)] = bound[i][0]
                i += 1
        return names

    def _projection_terms(self, block, bound):
        # Bound vars were created in (item, column-order) traversal order.
        names = {}
        i = 0
        for item, table in enumerate(block.tables):
            for c in self.policy.schema.table(table).columns:
                names[(item, c.name)] = bound[i][0]
                i += 1
        return [names[(p.item, p.column)] for p in block.projection]

    # -- bounded (conditional-table) membership ---------------------------------

    def bounded_tables(self, db: str, bounds: BoundsMap) -> dict[str, list[dict]]:
        """Declare conditional-table rows: per row a flag and column consts."""
        if not hasattr(self, "_cond_tables"):
            self._cond_tables: dict[tuple[str, str], list[dict]] = {}
        out = {}
        for tdef in self.policy.schema.tables:
            key = (db, tdef.name)
            if key not in self._cond_tables:
                rows = []
                for i in range(bounds.get(tdef.name, 0)):
                    flag = self.fresh_bool_flag(f"b{db[-1]}_{tdef.name}_{i}")
                    cols = {}
                    for c in tdef.columns:
                        name = f"r{db[-1]}_{tdef.name}_{i}_{c.name}"
                        self.script.declare_const(name, self.sort(c.kind))
                        self._consts_by_sort.setdefault(c.kind, []).append(name)
                        cols[c.name] = name
                        if not c.nullable:
                            self.script.assert_term(
                                ("not", ("=", name, self.null(c.kind)))
                            )
                    rows.append({"flag": flag, "cols": cols})
                self._cond_tables[key] = rows
            out[tdef.name] = self._cond_tables[key]
        return out

    def bounded_block_arms(self, block, tables: dict[str, list[dict]], tuple_terms):
        """All row-choice instantiations of one block: list of (guard, body)."""
        arms = []
        choices = [range(len(tables[t])) for t in block.tables]
        for choice in itertools.product(*choices):
            colmap: dict[tuple[int, str], Term] = {}
            flags: list[Term] = []
            for item, (table, row_i) in enumerate(zip(block.tables, choice)):
                row = tables[table][row_i]
                flags.append(row["flag"])
                for cname, cterm in row["cols"].items():
                    colmap[(item, cname)] = cterm
            extras: list[Term] = []
            proj_terms = []
            for proj in block.projection:
                term = colmap[(proj.item, proj.column)]
                proj_terms.append(term)
            if tuple_terms is not None:
                extras = [("=", t, p) for t, p in zip(tuple_terms, proj_terms)]
            body = conj_terms([*flags, *extras, self.pred(block.predicate, colmap)])
            arms.append((body, proj_terms, colmap, flags))
        return arms

    def bounded_membership(self, q: BasicQuery, tables, tuple_terms) -> Term:
        arms = []
        for block in q.blocks:
            for body, _, _, _ in self.bounded_block_arms(block, tables, tuple_terms):
                arms.append(body)
        return disj_terms(arms)

    def bounded_containment(self, lhs: BasicQuery, rhs: BasicQuery, tables) -> list[Term]:
        out = []
        if pointwise := _pointwise_form(lhs, rhs, self.policy.schema):
            block, extra_pred = pointwise
            for body, _, colmap, _ in self.bounded_block_arms(block, tables, None):
                out.append(("=>", body, self.pred(extra_pred, colmap)))
            return out
        for block in lhs.blocks:
            for body, proj_terms, colmap, flags in self.bounded_block_arms(
                block, tables, None
            ):
                rhs_member = self.bounded_membership(rhs, tables, proj_terms)
                out.append(("=>", body, rhs_member))
        return out

    # -- axioms -----------------------------------------------------------------

    def finalize_axioms(self) -> None:
        for kind in sorted(self._sorts_declared):
            lits = [
                name
                for (k, v), name in sorted(self._interned.items(), key=lambda kv: kv[1])
                if k == kind
            ]
            if lits:
                self.script.assert_term(("distinct", self.null(kind), *lits))
            if kind in self._lt_used and kind in ORDERED_KINDS:
                lt = self.lt_pred(kind)
                values = sorted(
                    ((v, name) for (k, v), name in self._interned.items() if k == kind),
                    key=lambda p: p[0],
                )
                for (va, na), (vb, nb) in itertools.combinations(values, 2):
                    self.script.assert_term((lt, na, nb))
                    self.script.assert_term(("not", (lt, nb, na)))
                for _, name in values:
                    self.script.assert_term(("not", (lt, name, name)))
                if self.quantified:
                    s = self.sort(kind)
                    self.script.assert_term(
                        (
                            "forall",
                            (("x", s), ("y", s), ("z", s)),
                            ("=>", conj_terms([(lt, "x", "y"), (lt, "y", "z")]), (lt, "x", "z")),
                        )
                    )
        if "bool" in self._sorts_declared:
            t = self.lit("bool", True)
            f = self.lit("bool", False)
            n = self.null("bool")
            for name in self._consts_by_sort.get("bool", ()):
                self.script.assert_term(
                    disj_terms([("=", name, t), ("=", name, f), ("=", name, n)])
                )
            if self.quantified:
                s = self.sort("bool")
                self.script.assert_term(
                    (
                        "forall",
                        (("x", s),),
                        disj_terms([("=", "x", t), ("=", "x", f), ("=", "x", n)]),
                    )
                )


# ---------------------------------------------------------------------------
# Public encoders


def encode_query(policy: PolicyBundle, q: BasicQuery, db: str = "D1"):
    """Membership formula for a fresh tuple; returns (builder, tuple names, term)."""
    b = ScriptBuilder(policy, "UF")
    tuple_terms = [b.fresh("t", kind) for kind in q.projection_kinds()]
    term = b.membership_exists(q, db, tuple_terms)
    return b, tuple_terms, term


def _assert_background(b: ScriptBuilder, dbs: tuple[str, ...]) -> None:
    """Schema constraints as containments on each database."""
    for db in dbs:
        for c in b.policy.constraints:
            lhs, rhs = containment_rendering(c, b.policy.schema)
            for t in b.containment(lhs, rhs, db):
                b.script.assert_term(t)


def _assert_background_bounded(b: ScriptBuilder, tables_by_db: dict[str, dict]) -> None:
    for db, tables in tables_by_db.items():
        for c in b.policy.constraints:
            lhs, rhs = containment_rendering(c, b.policy.schema)
            for t in b.bounded_containment(lhs, rhs, tables):
                b.script.assert_term(t)


def _view_queries(b: ScriptBuilder, ctx: RequestContext | None):
    views = []
    for v in b.policy.views:
        views.append(instantiate_view(v, ctx) if ctx is not None else v.query)
    return views


def encode_strong_compliance(
    policy: PolicyBundle, ctx: RequestContext, trace, q: BasicQuery
) -> SmtScript:
    """UNSAT iff q is strongly ctx-compliant given the trace."""
    b = ScriptBuilder(policy, "UF")
    _assert_background(b, ("D1", "D2"))
    # View containments V(D1) ⊆ V(D2): encode lhs on D1, rhs on D2.
    for vq in _view_queries(b, ctx):
        for t in _cross_containment(b, vq, "D1", "D2"):
            b.script.assert_term(t)
    for i, e in enumerate(trace):
        tuple_terms = [b.lit(k, v) for k, v in zip(e.query.projection_kinds(), e.row)]
        b.script.assert_term(b.membership_skolem(e.query, "D1", tuple_terms), f"LQ{i}")
    sk = [b.fresh("c", kind) for kind in q.projection_kinds()]
    b.script.assert_term(
        conj_terms(
            [b.membership_skolem(q, "D1", sk), ("not", b.membership_exists(q, "D2", sk))]
        )
    )
    b.finalize_axioms()
    return b.script


def _cross_containment(b: ScriptBuilder, vq: BasicQuery, db1: str, db2: str) -> list[Term]:
    out = []
    for block in vq.blocks:
        def make_col(item, col, kind, bound):
            name = f"q{next(b._qvar)}"
            bound.append((name, b.sort(kind)))
            return name

        bound, body = b.block_body(block, db1, None, make_col)
        proj_terms = b._projection_terms(block, bound)
        rhs_member = b.membership_exists(vq, db2, proj_terms)
        out.append(("forall", tuple(bound), ("=>", body, rhs_member)))
    return out


def choose_bounds(entries, q: BasicQuery, policy: PolicyBundle) -> BoundsMap:
    """Bound = rows needed for the sub-trace + 1 on relevant tables, else 0."""
    needed: dict[str, int] = {}
    for e in entries:
        for block in e.query.blocks:
            for t in block.tables:
                needed[t] = needed.get(t, 0) + 1
    relevant = set(needed) | q.tables_used()
    changed = True
    while changed:
        changed = False
        for c in policy.constraints:
            lhs, rhs = None, None
            if isinstance(c, PrimaryKeyUnique):
                continue
            lq, rq = containment_rendering(c, policy.schema)
            if lq.tables_used() & relevant:
                extra = rq.tables_used() - relevant
                if extra:
                    relevant |= extra
                    changed = True
    bounds: BoundsMap = {}
    for tdef in policy.schema.tables:
        if tdef.name in relevant:
            bounds[tdef.name] = needed.get(tdef.name, 0) + 1
        else:
            bounds[tdef.name] = 0
    return bounds


def encode_bounded(
    policy: PolicyBundle,
    ctx: RequestContext | None,
    trace,
    q: BasicQuery,
    bounds: BoundsMap,
    condition_atoms=None,
    label_trace: bool = False,
) -> SmtScript:
    """Quantifier-free strong-compliance script over conditional tables.

    ctx=None leaves context parameters symbolic (template-generation form);
    condition_atoms are asserted with LC labels in listing order.
    """
    b = ScriptBuilder(policy, "QF_UF")
    t1 = b.bounded_tables("D1", bounds)
    t2 = b.bounded_tables("D2", bounds)
    _assert_background_bounded(b, {"D1": t1, "D2": t2})
    for vq in _view_queries(b, ctx):
        for block in vq.blocks:
            for body, proj_terms, _, _ in b.bounded_block_arms(block, t1, None):
                b.script.assert_term(("=>", body, b.bounded_membership(vq, t2, proj_terms)))
    for i, e in enumerate(trace):
        terms = [_operand_term(b, v, k) for v, k in zip(e.row, e.query.projection_kinds())]
        label = f"LQ{i}" if label_trace else None
        b.script.assert_term(b.bounded_membership(e.query, t1, terms), label)
    if condition_atoms:
        for i, atom in enumerate(condition_atoms):
            b.script.assert_term(atom_term(b, atom), f"LC{i}")
    sk = [b.fresh("c", kind) for kind in q.projection_kinds()]
    b.script.assert_term(
        conj_terms(
            [
                b.bounded_membership(q, t1, sk),
                ("not", b.bounded_membership(q, t2, sk)),
            ]
        )
    )
    b.finalize_axioms()
    return b.script


def _operand_term(b: ScriptBuilder, value, kind: str) -> Term:
    if isinstance(value, Var):
        return b.var(value)
    return b.lit(kind, value)


def atom_term(b: ScriptBuilder, atom) -> Term:
    """Encode a candidate atom; '=' implies both sides non-NULL."""
    kind = atom.lhs.kind
    a = b.var(atom.lhs)
    if atom.kind == "isnull":
        return ("=", a, b.null(kind))
    if atom.kind == "eq":
        c = b.lit(kind, atom.rhs.value)
        return conj_terms([("=", a, c), ("not", ("=", a, b.null(kind)))])
    v2 = b.var(atom.rhs)
    if atom.kind == "eqvar":
        return conj_terms(
            [
                ("=", a, v2),
                ("not", ("=", a, b.null(kind))),
                ("not", ("=", v2, b.null(kind))),
            ]
        )
    if atom.kind == "lt":
        lt = b.lt_pred(kind)
        return conj_terms(
            [
                (lt, a, v2),
                ("not", ("=", a, b.null(kind))),
                ("not", ("=", v2, b.null(kind))),
            ]
        )
    raise TypeError(atom)


def encode_template_soundness(template, policy: PolicyBundle) -> SmtScript:
    """UNSAT certifies template soundness for all contexts and databases."""
    b = ScriptBuilder(policy, "UF")
    _assert_background(b, ("D1", "D2"))
    for vq in _view_queries(b, None):
        for t in _cross_containment(b, vq, "D1", "D2"):
            b.script.assert_term(t)
    for e in template.premise:
        terms = [
            _operand_term(b, v, k) for v, k in zip(e.row, e.query.projection_kinds())
        ]
        b.script.assert_term(b.membership_skolem(e.query, "D1", terms))
    for atom in template.condition:
        b.script.assert_term(atom_term(b, atom))
    q = template.query
    sk = [b.fresh("c", kind) for kind in q.projection_kinds()]
    b.script.assert_term(
        conj_terms(
            [b.membership_skolem(q, "D1", sk), ("not", b.membership_exists(q, "D2", sk))]
        )
    )
    b.finalize_axioms()
    return b.script
