"""Decision-template generation: generalize a solver-proved decision.

Pipeline: unsat-core-seeded trace minimization, parameterization of
constants into variables (sharing variables across positions forced equal by
the query), candidate-atom collection, core-atom extraction via labeled
bounded scripts, implication closure, smallest sound subset search, variable
folding, and a final soundness verification on the unbounded script.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

from .backend import SolverHarness, SolverOutcome
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
    SelectBlock,
    Var,
    conjuncts,
    map_query_operands,
)
from .encode import (
    BoundsMap,
    choose_bounds,
    encode_bounded,
    encode_strong_compliance,
    encode_template_soundness,
)
from .errors import SolverIndecision
from .policy import PolicyBundle, RequestContext
from .schema import ORDERED_KINDS


@dataclass(frozen=True)
class CandidateAtom:
    kind: str  # "eq" | "isnull" | "eqvar" | "lt"
    lhs: Var
    rhs: Var | Const | None

    def holds(self, nu: dict[str, object]) -> bool:
        a = nu[self.lhs.name]
        if self.kind == "isnull":
            return a is None
        if self.kind == "eq":
            assert isinstance(self.rhs, Const)
            return a is not None and a == self.rhs.value
        assert isinstance(self.rhs, Var)
        b = nu[self.rhs.name]
        if self.kind == "eqvar":
            return a is not None and b is not None and a == b
        if self.kind == "lt":
            return a is not None and b is not None and a < b
        raise ValueError(self.kind)

    def vars(self) -> tuple[Var, ...]:
        if isinstance(self.rhs, Var):
            return (self.lhs, self.rhs)
        return (self.lhs,)


@dataclass(frozen=True)
class PremiseEntry:
    query: BasicQuery  # parameterized
    row: tuple  # constants and Var objects


@dataclass(frozen=True)
class DecisionTemplate:
    query: BasicQuery
    premise: tuple[PremiseEntry, ...]
    condition: tuple[CandidateAtom, ...]
    verified: bool = False

    def variables(self) -> list[Var]:
        seen: dict[str, Var] = {}

        def visit(op):
            if isinstance(op, Var):
                seen.setdefault(op.name, op)
            return op

        map_query_operands(self.query, visit)
        for e in self.premise:
            map_query_operands(e.query, visit)
            for v in e.row:
                visit(v)
        for a in self.condition:
            for v in a.vars():
                visit(v)
        return list(seen.values())


# ---------------------------------------------------------------------------
# Trace minimization


def minimize_trace(
    q: BasicQuery,
    entries: list,
    policy: PolicyBundle,
    ctx: RequestContext,
    solver: SolverHarness,
    seed_labels: frozenset[str] | None = None,
) -> list:
    """Subset-minimal sub-trace preserving strong compliance.

    Starts from the unsat-core-induced subset when seed labels are given,
    then runs a deletion loop over bounded probes.
    """
    if seed_labels is not None:
        kept = [e for i, e in enumerate(entries) if f"LQ{i}" in seed_labels]
    else:
        kept = list(entries)
    bounds = choose_bounds(kept, q, policy)
    i = 0
    while i < len(kept):
        probe = kept[:i] + kept[i + 1 :]
        out = solver.check(encode_bounded(policy, ctx, probe, q, bounds))
        if out.status == "unknown":
            raise SolverIndecision("trace-minimization probe returned unknown")
        if out.is_unsat:
            kept = probe
        else:
            i += 1
    return kept


# ---------------------------------------------------------------------------
# Parameterization


class _SlotUF:
    def __init__(self):
        self.parent: dict[object, object] = {}

    def find(self, x):
        self.parent.setdefault(x, x)
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[ra] = rb


class _VarMint:
    def __init__(self):
        self.n = 0
        self.nu: dict[str, object] = {}

    def fresh(self, kind: str, value: object) -> Var:
        v = Var(f"x{self.n}", kind)
        self.n += 1
        self.nu[v.name] = value
        return v


def _parameterize_one(q: BasicQuery, row: tuple | None, mint: _VarMint):
    """Replace constants by variables; positions forced equal share one."""
    if len(q.blocks) != 1:
        q2 = map_query_operands(
            q, lambda op: mint.fresh(op.kind, op.value) if isinstance(op, Const) else op
        )
        row2 = None
        if row is not None:
            row2 = tuple(
                mint.fresh(k, v) for v, k in zip(row, q.projection_kinds())
            )
        return q2, row2

    block = q.blocks[0]
    uf = _SlotUF()
    # Column equality classes from top-level conjuncts.
    top = conjuncts(block.predicate)
    for part in top:
        if isinstance(part, Cmp) and part.op == "eq":
            if isinstance(part.lhs, Col) and isinstance(part.rhs, Col):
                uf.union(("c", part.lhs.item, part.lhs.column), ("c", part.rhs.item, part.rhs.column))

    # Walk constants in deterministic traversal order, tagging each
    # occurrence; a top-level equality Col = Const ties the column's class
    # to that occurrence.
    occurrences: list[tuple[int, str, object]] = []  # (occ id, kind, value)
    col_binding: dict[object, int] = {}  # column class -> occ id

    def collect(pred: Pred, top_level: bool):
        if isinstance(pred, And):
            for p in pred.parts:
                collect(p, top_level)
            return
        if isinstance(pred, Or):
            for p in pred.parts:
                collect(p, False)
            return
        if isinstance(pred, Cmp):
            for side, other in ((pred.lhs, pred.rhs), (pred.rhs, pred.lhs)):
                if isinstance(side, Const):
                    occ = len(occurrences)
                    occurrences.append((occ, side.kind, side.value))
                    if (
                        top_level
                        and pred.op == "eq"
                        and isinstance(other, Col)
                        and side.value is not None
                    ):
                        col_binding.setdefault(uf.find(("c", other.item, other.column)), occ)
        elif isinstance(pred, InList):
            for v in pred.values:
                if isinstance(v, Const):
                    occurrences.append((len(occurrences), v.kind, v.value))

    collect(block.predicate, True)

    # Tuple positions join the class of their projected column when the
    # bound constant has the same value.
    tuple_occ: list[int | None] = []
    if row is not None:
        for i, proj in enumerate(block.projection):
            assert isinstance(proj, Col)
            root = uf.find(("c", proj.item, proj.column))
            occ = col_binding.get(root)
            if occ is not None and occurrences[occ][2] == row[i]:
                tuple_occ.append(occ)
            else:
                tuple_occ.append(None)

    occ_var: dict[int, Var] = {}

    def var_for(occ: int, kind: str, value: object) -> Var:
        if occ not in occ_var:
            occ_var[occ] = mint.fresh(kind, value)
        return occ_var[occ]

    counter = itertools.count()

    def rebuild(op: Operand) -> Operand:
        if isinstance(op, Const):
            occ = next(counter)
            _, kind, value = occurrences[occ]
            return var_for(occ, kind, value)
        return op

    q2 = map_query_operands(q, rebuild)
    row2 = None
    if row is not None:
        out_row = []
        for i, (value, kind) in enumerate(zip(row, q.projection_kinds())):
            occ = tuple_occ[i]
            if occ is not None:
                out_row.append(var_for(occ, kind, value))
            else:
                out_row.append(mint.fresh(kind, value))
        row2 = tuple(out_row)
    return q2, row2


def parameterize(q: BasicQuery, entries: list, ctx: RequestContext, policy: PolicyBundle):
    """Returns (q_p, premise, valuation, variables). Context parameters join
    the valuation as ctx-variables alongside the minted x-variables."""
    mint = _VarMint()
    premise: list[PremiseEntry] = []
    for e in entries:
        qp, rowp = _parameterize_one(e.query, tuple(e.row), mint)
        assert rowp is not None
        premise.append(PremiseEntry(qp, rowp))
    q_p, _ = _parameterize_one(q, None, mint)
    nu = dict(mint.nu)
    xvars: list[Var] = []
    seen = set()

    def visit(op):
        if isinstance(op, Var) and op.name not in seen:
            seen.add(op.name)
            xvars.append(op)
        return op

    for e in premise:
        map_query_operands(e.query, visit)
        for v in e.row:
            visit(v)
    map_query_operands(q_p, visit)

    ctx_vars = [
        Var(name, kind, ctx=True) for name, kind in policy.context_decl.items()
    ]
    for cv in ctx_vars:
        nu[cv.name] = ctx.params.get(cv.name)
    return q_p, premise, nu, ctx_vars + xvars


# ---------------------------------------------------------------------------
# Candidate atoms


def candidate_atoms(nu: dict[str, object], variables: list[Var]) -> list[CandidateAtom]:
    atoms: list[CandidateAtom] = []
    for v in variables:
        val = nu[v.name]
        if val is None:
            atoms.append(CandidateAtom("isnull", v, None))
        else:
            atoms.append(CandidateAtom("eq", v, Const(v.kind, val)))
    for a, b in itertools.combinations(variables, 2):
        va, vb = nu[a.name], nu[b.name]
        if a.kind == b.kind and va is not None and va == vb:
            atoms.append(CandidateAtom("eqvar", a, b))
    for a, b in itertools.permutations(variables, 2):
        va, vb = nu[a.name], nu[b.name]
        if (
            a.kind == b.kind
            and a.kind in ORDERED_KINDS
            and va is not None
            and vb is not None
            and type(va) is type(vb)
            and va < vb
        ):
            atoms.append(CandidateAtom("lt", a, b))
    # permutations yields (a, b) and (b, a); keep pairs in listing order of
    # the first operand, matching the candidate-atom definition
    ordered = [x for x in atoms if x.kind in ("eq", "isnull")]
    ordered += [x for x in atoms if x.kind == "eqvar"]
    ordered += [x for x in atoms if x.kind == "lt"]
    return ordered


# ---------------------------------------------------------------------------
# Core atoms and minimization order


_CLASS_ORDER = {
    "eqvar_plain": 0,  # var-var links between minted variables
    "lt": 1,
    "eq_ctx": 2,  # constant pins on context parameters
    "eq_plain": 3,
    "isnull": 4,
    "eqvar_ctx": 5,  # context-linking var-var atoms go last
}


def _atom_class(a: CandidateAtom) -> int:
    if a.kind == "lt":
        return _CLASS_ORDER["lt"]
    if a.kind == "isnull":
        return _CLASS_ORDER["isnull"]
    has_ctx = a.lhs.ctx or (isinstance(a.rhs, Var) and a.rhs.ctx)
    if a.kind == "eqvar":
        return _CLASS_ORDER["eqvar_ctx" if has_ctx else "eqvar_plain"]
    return _CLASS_ORDER["eq_ctx" if has_ctx else "eq_plain"]


def core_atoms(
    q_p: BasicQuery,
    premise: list[PremiseEntry],
    atoms: list[CandidateAtom],
    policy: PolicyBundle,
    solver: SolverHarness,
    bounds: BoundsMap,
) -> list[CandidateAtom]:
    """Atoms surviving the labeled unsat core, deletion-minimized."""
    script = encode_bounded(policy, None, premise, q_p, bounds, condition_atoms=atoms)
    out = solver.check_for_core(script)
    if out.status == "unknown":
        raise SolverIndecision("core-atom script returned unknown")
    if not out.is_unsat:
        raise SolverIndecision("candidate-atom script unexpectedly satisfiable")
    kept = [a for i, a in enumerate(atoms) if f"LC{i}" in out.core]
    order = sorted(range(len(kept)), key=lambda i: (_atom_class(kept[i]), i))
    for idx in order:
        a = kept[idx]
        if a is None:
            continue
        probe = [x for x in kept if x is not None and x is not a]
        script = encode_bounded(policy, None, premise, q_p, bounds, condition_atoms=probe)
        res = solver.check(script)
        if res.is_unsat:
            kept[idx] = None
    return [a for a in kept if a is not None]


# ---------------------------------------------------------------------------
# Implication closure (congruence + order, solver-free)


class _Closure:
    def __init__(self, core: list[CandidateAtom]):
        self.uf = _SlotUF()
        self.nonnull: set[str] = set()
        self.null: set[str] = set()
        self.lt_edges: set[tuple[object, object]] = set()
        consts_by_class: dict[object, Const] = {}
        for a in core:
            if a.kind == "eq":
                self.uf.union(("v", a.lhs.name), ("k", a.rhs.kind, a.rhs.value))
                self.nonnull.add(a.lhs.name)
            elif a.kind == "eqvar":
                self.uf.union(("v", a.lhs.name), ("v", a.rhs.name))
                self.nonnull.add(a.lhs.name)
                self.nonnull.add(a.rhs.name)
            elif a.kind == "isnull":
                self.null.add(a.lhs.name)
            elif a.kind == "lt":
                self.nonnull.add(a.lhs.name)
                self.nonnull.add(a.rhs.name)
        for a in core:
            if a.kind == "lt":
                self.lt_edges.add(
                    (self.uf.find(("v", a.lhs.name)), self.uf.find(("v", a.rhs.name)))
                )
        # order facts among constants of the same kind and type
        consts: list[tuple[str, object, object]] = []
        for key in list(self.uf.parent):
            if isinstance(key, tuple) and key[0] == "k":
                consts.append((key[1], key[2], self.uf.find(key)))
        for (k1, v1, c1), (k2, v2, c2) in itertools.permutations(consts, 2):
            if k1 == k2 and k1 in ORDERED_KINDS and type(v1) is type(v2) and v1 < v2:
                self.lt_edges.add((c1, c2))
        changed = True
        while changed:
            changed = False
            for (a, b), (c, d) in itertools.product(list(self.lt_edges), repeat=2):
                if b == c and (a, d) not in self.lt_edges:
                    self.lt_edges.add((a, d))
                    changed = True

    def implies(self, a: CandidateAtom) -> bool:
        if a.kind == "eq":
            return (
                a.lhs.name in self.nonnull
                and self.uf.find(("v", a.lhs.name))
                == self.uf.find(("k", a.rhs.kind, a.rhs.value))
            )
        if a.kind == "eqvar":
            return (
                a.lhs.name in self.nonnull
                and a.rhs.name in self.nonnull
                and self.uf.find(("v", a.lhs.name)) == self.uf.find(("v", a.rhs.name))
            )
        if a.kind == "isnull":
            return a.lhs.name in self.null
        if a.kind == "lt":
            return (
                self.uf.find(("v", a.lhs.name)),
                self.uf.find(("v", a.rhs.name)),
            ) in self.lt_edges
        raise ValueError(a.kind)


def augment(core: list[CandidateAtom], atoms: list[CandidateAtom]) -> list[CandidateAtom]:
    """C_aug = atoms implied by the conjunction of the core atoms."""
    if not core:
        return []
    closure = _Closure(core)
    return [a for a in atoms if closure.implies(a)]


# ---------------------------------------------------------------------------
# Smallest sound subset (MARCO-style, ascending cardinality)


def smallest_sound_subset(
    aug: list[CandidateAtom],
    q_p: BasicQuery,
    premise: list[PremiseEntry],
    policy: PolicyBundle,
    solver: SolverHarness,
    bounds: BoundsMap,
    max_probes: int = 1 << 16,
) -> list[CandidateAtom]:
    if len(aug) > 24:
        return list(aug)  # fall back to the full set: sound, less general
    unsound: list[frozenset[int]] = []
    probes = 0
    for k in range(len(aug) + 1):
        for combo in itertools.combinations(range(len(aug)), k):
            s = frozenset(combo)
            if any(s <= u for u in unsound):
                continue
            probes += 1
            if probes > max_probes:
                return list(aug)
            subset = [aug[i] for i in combo]
            script = encode_bounded(
                policy, None, premise, q_p, bounds, condition_atoms=subset
            )
            out = solver.check(script)
            if out.is_unsat:
                return subset
            unsound.append(s)  # unknown probes are treated as unsound
    return list(aug)


# ---------------------------------------------------------------------------
# Folding and generation


def fold_template(
    q_p: BasicQuery, premise: list[PremiseEntry], condition: list[CandidateAtom]
):
    """Substitute x by y whenever the condition implies x = y, preferring
    context variables (then lower-indexed ones) as representatives."""
    uf = _SlotUF()
    for a in condition:
        if a.kind == "eqvar":
            uf.union(("v", a.lhs.name), ("v", a.rhs.name))
    groups: dict[object, list[Var]] = {}
    for a in condition:
        for v in a.vars():
            groups.setdefault(uf.find(("v", v.name)), []).append(v)

    def rep_of(vs: list[Var]) -> Var:
        ctxs = [v for v in vs if v.ctx]
        if ctxs:
            return ctxs[0]
        return sorted(vs, key=lambda v: v.name)[0]

    subst: dict[str, Var] = {}
    for root, vs in groups.items():
        uniq = {v.name: v for v in vs}
        rep = rep_of(list(uniq.values()))
        for name in uniq:
            if name != rep.name:
                subst[name] = rep

    def sub_op(op):
        if isinstance(op, Var) and op.name in subst:
            return subst[op.name]
        return op

    q2 = map_query_operands(q_p, sub_op)
    prem2 = [
        PremiseEntry(
            map_query_operands(e.query, sub_op),
            tuple(sub_op(v) if isinstance(v, Var) else v for v in e.row),
        )
        for e in premise
    ]
    cond2: list[CandidateAtom] = []
    for a in condition:
        if a.kind == "eqvar":
            if uf.find(("v", a.lhs.name)) == uf.find(("v", a.rhs.name)):
                continue  # folded away
        lhs = subst.get(a.lhs.name, a.lhs)
        rhs = a.rhs
        if isinstance(rhs, Var):
            rhs = subst.get(rhs.name, rhs)
        cond2.append(CandidateAtom(a.kind, lhs, rhs))
    return q2, prem2, cond2


def generate_template(
    q: BasicQuery,
    entries: list,
    ctx: RequestContext,
    policy: PolicyBundle,
    solver: SolverHarness,
    seed_labels: frozenset[str] | None = None,
    max_retries: int = 3,
) -> DecisionTemplate | None:
    """Full generalization pipeline; None when generation must be skipped."""
    try:
        kept = minimize_trace(q, entries, policy, ctx, solver, seed_labels)
        bounds = choose_bounds(kept, q, policy)
        q_p, premise, nu, variables = parameterize(q, kept, ctx, policy)
        atoms = candidate_atoms(nu, variables)
        for attempt in range(max_retries + 1):
            core = core_atoms(q_p, premise, atoms, policy, solver, bounds)
            aug = augment(core, atoms)
            small = smallest_sound_subset(aug, q_p, premise, policy, solver, bounds)
            q_f, prem_f, cond_f = fold_template(q_p, premise, small)
            template = DecisionTemplate(q_f, tuple(prem_f), tuple(cond_f))
            out = solver.check(encode_template_soundness(template, policy))
            if out.is_unsat:
                return replace(template, verified=True)
            bounds = {t: (b + 1 if b else 0) for t, b in bounds.items()}
        return None
    except SolverIndecision:
        return None
