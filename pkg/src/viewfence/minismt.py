"""Bundled SMT-LIB solver for the scripts this package emits.

Covers quantifier-free EUF (equality over uninterpreted sorts, boolean
flags, uninterpreted relations) via DPLL with a union-find theory core, and
the quantified fragment produced by the unbounded encoder (universally
quantified containments with existential conclusions) via model-guided
instantiation: violated instances are grounded, their existentials
skolemized with fresh constants, until a validated finite model exists or
the search closes. Unsat cores are derived from assertion provenance and are
not necessarily minimal.

Run as `viewfence-solve [--timeout-ms N]`; reads one script on stdin, prints
the check-sat verdict and, when requested, the unsat core.
"""

from __future__ import annotations

import itertools
import sys
import time

from .sexpr import parse_all

TRUE = ("true",)
FALSE = ("false",)


class Timeout(Exception):
    pass


class Unknown(Exception):
    pass


# NNF formula representation:
#   ("lit", positive, pred_or_"=", args)   args: tuple of term strings
#   ("and", parts) / ("or", parts)
#   ("forall", vars, body) / ("exists", vars, body)   vars: ((name, sort), ...)


def _substitute(f, env):
    kind = f[0]
    if kind == "lit":
        _, pos, pred, args = f
        return ("lit", pos, pred, tuple(env.get(a, a) for a in args))
    if kind in ("and", "or"):
        return (kind, tuple(_substitute(p, env) for p in f[1]))
    if kind in ("forall", "exists"):
        inner = {k: v for k, v in env.items() if k not in {n for n, _ in f[1]}}
        return (kind, f[1], _substitute(f[2], inner))
    return f


class Solver:
    def __init__(self, deadline: float | None = None):
        self.deadline = deadline
        self.sort_of: dict[str, str] = {}  # constant -> sort
        self.preds: dict[str, tuple[str, ...]] = {}
        self.named: list[str] = []
        self.ground: list[tuple, ...] = []  # (formula, frozenset names)
        self.rules: list[tuple] = []  # (vars, body, frozenset names)
        self.fresh_count = 0
        self.max_fresh = 400
        self.max_rounds = 100000
        self.max_decisions = 40000
        self._decisions = 0
        self.answer: str | None = None
        self.core: set[str] | None = None

    # -- script loading ------------------------------------------------------

    def run_script(self, text: str, out) -> None:
        for cmd in parse_all(text):
            if not isinstance(cmd, list) or not cmd:
                continue
            head = cmd[0]
            if head in ("set-logic", "set-option", "set-info"):
                continue
            if head == "declare-sort":
                continue
            if head == "declare-const":
                self.sort_of[cmd[1]] = cmd[2]
            if head == "declare-fun":
                name, args, ret = cmd[1], cmd[2], cmd[3]
                if not args and ret != "Bool":
                    self.sort_of[name] = ret
                elif ret == "Bool":
                    self.preds[name] = tuple(args)
            if head == "assert":
                self.add_assertion(cmd[1])
            if head == "check-sat":
                try:
                    self.answer = self.check()
                except Timeout:
                    self.answer = "unknown"
                except Unknown:
                    self.answer = "unknown"
                print(self.answer, file=out, flush=True)
            if head == "get-unsat-core":
                if self.answer == "unsat" and self.core is not None:
                    print("(" + " ".join(sorted(self.core)) + ")", file=out, flush=True)
                else:
                    print('(error "no unsat core available")', file=out, flush=True)
            if head == "exit":
                return

    def add_assertion(self, raw) -> None:
        name = None
        if isinstance(raw, list) and raw and raw[0] == "!":
            body = raw[1]
            for i in range(2, len(raw) - 1):
                if raw[i] == ":named":
                    name = raw[i + 1]
            raw = body
        if name is not None:
            self.named.append(name)
        names = frozenset([name]) if name is not None else frozenset()
        f = self._nnf(raw, True)
        self._store(f, names)

    def _store(self, f, names) -> None:
        kind = f[0]
        if f == TRUE:
            return
        if kind == "and":
            for p in f[1]:
                self._store(p, names)
            return
        if kind == "forall":
            self.rules.append((f[1], f[2], names))
            return
        if kind == "exists":
            env = {n: self._skolem(s) for n, s in f[1]}
            self._store(_substitute(f[2], env), names)
            return
        self.ground.append((f, names))

    def _skolem(self, sort: str) -> str:
        self.fresh_count += 1
        if self.fresh_count > self.max_fresh:
            raise Unknown("too many fresh constants")
        name = f".sk{self.fresh_count}"
        self.sort_of[name] = sort
        return name

    # -- NNF ------------------------------------------------------------------

    def _nnf(self, raw, pos: bool):
        if raw == "true" or raw == ["true"]:
            return TRUE if pos else FALSE
        if raw == "false" or raw == ["false"]:
            return FALSE if pos else TRUE
        if isinstance(raw, str):
            return ("lit", pos, raw, ())  # boolean constant
        head = raw[0]
        if head == "not":
            return self._nnf(raw[1], not pos)
        if head == "and":
            parts = tuple(self._nnf(p, pos) for p in raw[1:])
            return ("and" if pos else "or", parts)
        if head == "or":
            parts = tuple(self._nnf(p, pos) for p in raw[1:])
            return ("or" if pos else "and", parts)
        if head == "=>":
            return self._nnf(["or", ["not", raw[1]], raw[2]], pos)
        if head == "=":
            return ("lit", pos, "=", (raw[1], raw[2]))
        if head == "distinct":
            pairs = [
                ("lit", not pos, "=", (a, b))
                for a, b in itertools.combinations(raw[1:], 2)
            ]
            return ("and" if pos else "or", tuple(pairs))
        if head == "forall":
            vars_ = tuple((v[0], v[1]) for v in raw[1])
            body = self._nnf(raw[2], pos)
            return ("forall" if pos else "exists", vars_, body)
        if head == "exists":
            vars_ = tuple((v[0], v[1]) for v in raw[1])
            body = self._nnf(raw[2], pos)
            return ("exists" if pos else "forall", vars_, body)
        # predicate application
        return ("lit", pos, head, tuple(raw[1:]))

    # -- checking --------------------------------------------------------------

    def _tick(self) -> None:
        if self.deadline is not None and time.monotonic() > self.deadline:
            raise Timeout()

    def check(self) -> str:
        state = _State(self)
        for f, names in self.ground:
            state.add_formula(f, names)
        result = self._search(state, 0)
        if result is None:
            return "sat"
        self.core = {n for n in result if n in self.named}
        return "unsat"

    def _search(self, state: "_State", round_no: int):
        """Returns None when satisfiable, else a conflict name-set."""
        while True:
            self._tick()
            conflict = state.propagate()
            if conflict is not None:
                return conflict
            lit = state.pick_branch_literal()
            if lit is not None:
                self._decisions += 1
                if self._decisions > self.max_decisions:
                    raise Unknown("decision budget exceeded")
                pos, pred, args, names = lit
                s1 = state.clone()
                conflict = s1.assert_lit(pos, pred, args, names)
                r1 = conflict if conflict is not None else self._search(s1, round_no)
                if r1 is None:
                    return None
                conflict = state.assert_lit(not pos, pred, args, names | r1)
                if conflict is not None:
                    return conflict | r1
                continue
            # Obligations alive only through existential arms: branch over
            # the arms, materializing each with fresh witnesses (chase step).
            pending = state.pick_exists_obligation()
            if pending is not None:
                arms, names = pending
                conflicts: set[str] = set()
                for arm in arms:
                    s1 = state.clone()
                    s1.add_formula_skolemized(arm, names, self)
                    r = self._search(s1, round_no)
                    if r is None:
                        return None
                    conflicts |= r
                return frozenset(conflicts) | names
            # Look for violated rule instances under the completed model.
            if round_no >= self.max_rounds:
                raise Unknown("instantiation rounds exceeded")
            added = False
            for ri, (vars_, body, names) in enumerate(self.rules):
                for env in state.violations(vars_, body):
                    key = (ri, tuple(state.find(t) for t in env))
                    if key in state.seen_instances:
                        continue
                    state.seen_instances.add(key)
                    inst = _substitute(body, {n: t for (n, _), t in zip(vars_, env)})
                    state.add_formula_skolemized(inst, names, self)
                    added = True
            if not added:
                return None
            round_no += 1


class _State:
    """One DPLL branch: union-find, facts, and ground obligations."""

    def __init__(self, solver: Solver):
        self.solver = solver
        self.parent: dict[str, str] = {}
        self.class_names: dict[str, frozenset] = {}
        self.diseq: dict[tuple[str, str], frozenset] = {}
        self.pos: dict[tuple, frozenset] = {}
        self.neg: dict[tuple, frozenset] = {}
        self.obligations: list[tuple] = []  # (formula, names)
        self.obligation_keys: set = set()
        self.seen_instances: set = set()
        self.satisfied: set[int] = set()  # indices; truth is monotone per branch
        self.touched: set[int] = set()

    def clone(self) -> "_State":
        s = _State.__new__(_State)
        s.solver = self.solver
        s.parent = dict(self.parent)
        s.class_names = dict(self.class_names)
        s.diseq = dict(self.diseq)
        s.pos = dict(self.pos)
        s.neg = dict(self.neg)
        s.obligations = list(self.obligations)
        s.obligation_keys = set(self.obligation_keys)
        s.seen_instances = set(self.seen_instances)
        s.satisfied = set(self.satisfied)
        s.touched = set(self.touched)
        return s

    # -- union-find -----------------------------------------------------------

    def find(self, x: str) -> str:
        self.parent.setdefault(x, x)
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def names_of(self, x: str) -> frozenset:
        return self.class_names.get(self.find(x), frozenset())

    def _canon_pair(self, a: str, b: str) -> tuple[str, str]:
        ra, rb = self.find(a), self.find(b)
        return (ra, rb) if ra <= rb else (rb, ra)

    def eq_status(self, a: str, b: str):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return True, self.names_of(a)
        pair = (ra, rb) if ra <= rb else (rb, ra)
        if pair in self.diseq:
            return False, self.diseq[pair] | self.names_of(a) | self.names_of(b)
        return None, frozenset()

    def merge(self, a: str, b: str, names: frozenset):
        """Returns conflict name-set or None."""
        ra, rb = self.find(a), self.find(b)
        acc = self.class_names.get(ra, frozenset()) | self.class_names.get(rb, frozenset()) | names
        if ra == rb:
            self.class_names[ra] = acc
            return None
        pair = (ra, rb) if ra <= rb else (rb, ra)
        if pair in self.diseq:
            return self.diseq[pair] | acc
        self.parent[ra] = rb
        self.class_names.pop(ra, None)
        self.class_names[rb] = acc
        return self._rebuild()

    def assert_diseq(self, a: str, b: str, names: frozenset):
        st, prov = self.eq_status(a, b)
        if st is True:
            return prov | names
        pair = self._canon_pair(a, b)
        self.diseq.setdefault(pair, names)
        return None

    def _rebuild(self):
        """Re-canonicalize facts and disequalities after a merge."""
        new_pos: dict[tuple, frozenset] = {}
        for (pred, args), prov in self.pos.items():
            key = (pred, tuple(self.find(a) for a in args))
            new_pos[key] = new_pos.get(key, frozenset()) | prov
        new_neg: dict[tuple, frozenset] = {}
        for (pred, args), prov in self.neg.items():
            key = (pred, tuple(self.find(a) for a in args))
            new_neg[key] = new_neg.get(key, frozenset()) | prov
        self.pos, self.neg = new_pos, new_neg
        new_diseq: dict[tuple[str, str], frozenset] = {}
        for (a, b), prov in self.diseq.items():
            ra, rb = self.find(a), self.find(b)
            if ra == rb:
                return prov | self.names_of(ra)
            key = (ra, rb) if ra <= rb else (rb, ra)
            new_diseq[key] = new_diseq.get(key, prov) | prov
        self.diseq = new_diseq
        for key in self.pos:
            if key in self.neg:
                return self.pos[key] | self.neg[key]
        return None

    # -- literals ---------------------------------------------------------------

    def lit_status(self, pos: bool, pred: str, args: tuple):
        if pred == "=":
            st, prov = self.eq_status(args[0], args[1])
        else:
            key = (pred, tuple(self.find(a) for a in args))
            argnames = frozenset().union(*(self.names_of(a) for a in args)) if args else frozenset()
            if key in self.pos:
                st, prov = True, self.pos[key] | argnames
            elif key in self.neg:
                st, prov = False, self.neg[key] | argnames
            else:
                st, prov = None, frozenset()
        if st is None:
            return None, frozenset()
        return (st == pos), prov

    def assert_lit(self, pos: bool, pred: str, args: tuple, names: frozenset):
        if pred == "=":
            if pos:
                conflict = self.merge(args[0], args[1], names)
            else:
                conflict = self.assert_diseq(args[0], args[1], names)
        else:
            key = (pred, tuple(self.find(a) for a in args))
            if pos:
                if key in self.neg:
                    return self.neg[key] | names
                self.pos.setdefault(key, names)
                conflict = None
            else:
                if key in self.pos:
                    return self.pos[key] | names
                self.neg.setdefault(key, names)
                conflict = None
        return conflict

    def add_formula(self, f, names: frozenset) -> None:
        if f not in self.obligation_keys:
            self.obligation_keys.add(f)
            self.obligations.append((f, names))

    def add_formula_skolemized(self, f, names: frozenset, solver: Solver) -> None:
        kind = f[0]
        if f == TRUE:
            return
        if kind == "and":
            for p in f[1]:
                self.add_formula_skolemized(p, names, solver)
            return
        if kind == "exists":
            env = {n: solver._skolem(s) for n, s in f[1]}
            self.add_formula_skolemized(_substitute(f[2], env), names, solver)
            return
        self.add_formula(f, names)

    # -- evaluation ---------------------------------------------------------------

    def eval_formula(self, f, completed: bool):
        """Returns (status, provenance): status True/False/None."""
        kind = f[0]
        if f == TRUE:
            return True, frozenset()
        if f == FALSE:
            return False, frozenset()
        if kind == "lit":
            _, pos, pred, args = f
            st, prov = self.lit_status(pos, pred, args)
            if st is None and completed:
                # closed-world completion: unknown atoms are false,
                # unmerged classes are distinct
                return (not pos), frozenset()
            return st, prov
        if kind == "and":
            acc = frozenset()
            unknown = False
            for p in f[1]:
                st, prov = self.eval_formula(p, completed)
                if st is False:
                    return False, prov
                if st is None:
                    unknown = True
                else:
                    acc |= prov
            return (None, frozenset()) if unknown else (True, acc)
        if kind == "or":
            acc = frozenset()
            unknown = False
            for p in f[1]:
                st, prov = self.eval_formula(p, completed)
                if st is True:
                    return True, prov
                if st is None:
                    unknown = True
                else:
                    acc |= prov
            return (None, frozenset()) if unknown else (False, acc)
        if kind == "exists":
            return self._eval_exists(f[1], f[2], completed)
        if kind == "forall":
            # only reachable during completed-model validation
            assert completed
            for env in self.violations(f[1], f[2]):
                return False, frozenset()
            return True, frozenset()
        raise TypeError(f)

    def _eval_exists(self, vars_, body, completed: bool):
        if not completed:
            return None, frozenset()
        var_sorts = dict(vars_)
        for _ in self._solve(body, {}, var_sorts):
            return True, frozenset()
        return False, frozenset()

    def _solve(self, f, env: dict, var_sorts: dict):
        """Satisfying bindings of f's free vars under the completed model."""
        kind = f[0]
        if f == TRUE:
            yield env
            return
        if f == FALSE:
            return
        if kind == "or":
            for p in f[1]:
                yield from self._solve(p, env, var_sorts)
            return
        if kind == "exists":
            inner = dict(var_sorts)
            inner.update(dict(f[1]))
            yield from self._solve(f[2], env, inner)
            return
        if kind == "and":
            yield from self._solve_conj(list(f[1]), env, var_sorts)
            return
        if kind == "lit":
            yield from self._solve_conj([f], env, var_sorts)
            return
        raise TypeError(f)

    def _solve_conj(self, parts: list, env: dict, var_sorts: dict):
        self.solver._tick()
        if not parts:
            yield env
            return

        def unbound(term):
            return term in var_sorts and term not in env

        def ground(term):
            return env.get(term, term)

        # Pick the most constrained part first: ground literals, then
        # positive fact matches, then equalities that bind a variable.
        for i, p in enumerate(parts):
            if p[0] != "lit":
                continue
            _, pos, pred, args = p
            if not any(unbound(a) for a in args):
                st, _ = self.lit_status(pos, pred, tuple(ground(a) for a in args))
                if st is None:
                    st = not pos  # completion
                if not st:
                    return
                yield from self._solve_conj(parts[:i] + parts[i + 1 :], env, var_sorts)
                return
        for i, p in enumerate(parts):
            if p[0] != "lit":
                continue
            _, pos, pred, args = p
            if pos and pred != "=" and args:
                rest = parts[:i] + parts[i + 1 :]
                for (fpred, fargs), _prov in list(self.pos.items()):
                    if fpred != pred or len(fargs) != len(args):
                        continue
                    env2 = dict(env)
                    ok = True
                    for pat, val in zip(args, fargs):
                        if unbound(pat) and pat not in env2:
                            env2[pat] = val
                        elif self.find(env2.get(pat, pat)) != self.find(val):
                            ok = False
                            break
                    if ok:
                        yield from self._solve_conj(rest, env2, var_sorts)
                return
        for i, p in enumerate(parts):
            if p[0] != "lit":
                continue
            _, pos, pred, args = p
            if pos and pred == "=":
                a, b = args
                rest = parts[:i] + parts[i + 1 :]
                if unbound(a) and not unbound(b):
                    env2 = dict(env)
                    env2[a] = ground(b)
                    yield from self._solve_conj(rest, env2, var_sorts)
                    return
                if unbound(b) and not unbound(a):
                    env2 = dict(env)
                    env2[b] = ground(a)
                    yield from self._solve_conj(rest, env2, var_sorts)
                    return
        for i, p in enumerate(parts):
            if p[0] in ("and", "or", "exists"):
                rest = parts[:i] + parts[i + 1 :]
                for env2 in self._solve(p, env, var_sorts):
                    yield from self._solve_conj(rest, env2, var_sorts)
                return
        # Only literals with unbound variables remain: enumerate the first.
        for p in parts:
            if p[0] == "lit":
                for a in p[3]:
                    if unbound(a):
                        domain = self._domain_by_sort()
                        for val in domain.get(var_sorts[a], []):
                            env2 = dict(env)
                            env2[a] = val
                            yield from self._solve_conj(parts, env2, var_sorts)
                        return
        raise AssertionError("unprocessable conjunction")

    def _domain_by_sort(self) -> dict[str, list[str]]:
        reps: dict[str, list[str]] = {}
        seen = set()
        for c, sort in self.solver.sort_of.items():
            r = self.find(c)
            if r not in seen:
                seen.add(r)
                reps.setdefault(sort, []).append(r)
        return reps

    # -- propagation -----------------------------------------------------------------

    def propagate(self):
        changed = True
        while changed:
            changed = False
            for i, (f, names) in enumerate(self.obligations):
                if i in self.satisfied:
                    continue
                st, prov = self.eval_formula(f, False)
                if st is True:
                    self.satisfied.add(i)
                    if names and i not in self.touched:
                        self.touched.add(i)
                        self._touch_equalities(f, names)
                    continue
                if st is False:
                    return prov | names
                forced = self._forced_literals(f, names)
                if forced is False:
                    continue
                for pos, pred, args, lnames in forced:
                    conflict = self.assert_lit(pos, pred, args, lnames)
                    if conflict is not None:
                        return conflict | names
                    changed = True
        return None

    def _touch_equalities(self, f, names: frozenset) -> None:
        """Deposit a named assertion's label into the equality classes of its
        already-entailed positive equalities so cores can report it."""
        kind = f[0]
        if kind == "lit":
            _, pos, pred, args = f
            if pos and pred == "=":
                st, _ = self.eq_status(args[0], args[1])
                if st is True:
                    self.merge(args[0], args[1], names)
        elif kind in ("and", "or"):
            for p in f[1]:
                self._touch_equalities(p, names)

    def _forced_literals(self, f, names):
        """Unit literals forced by an undetermined formula, or False."""
        kind = f[0]
        if kind == "lit":
            return [(f[1], f[2], f[3], names)]
        if kind == "and":
            out = []
            for p in f[1]:
                st, _ = self.eval_formula(p, False)
                if st is True:
                    continue
                sub = self._forced_literals(p, names)
                if sub is False:
                    return False
                out.extend(sub)
            return out
        if kind == "or":
            undet = None
            acc = frozenset()
            for p in f[1]:
                st, prov = self.eval_formula(p, False)
                if st is True:
                    return []
                if st is False:
                    acc |= prov
                    continue
                if undet is not None:
                    return False  # two live disjuncts: no unit
                undet = p
            if undet is None:
                return False
            sub = self._forced_literals(undet, names | acc)
            return sub if sub is not False else False
        return False  # exists: never a unit

    def pick_branch_literal(self):
        best = None
        best_score = None
        for i, (f, names) in enumerate(self.obligations):
            if i in self.satisfied:
                continue
            st, _ = self.eval_formula(f, False)
            if st is not None:
                if st is True:
                    self.satisfied.add(i)
                continue
            for pos, pred, args in self._undetermined_literals(f):
                # existence flags gate whole rows: decide them first
                score = (0 if not args else 1, len(args))
                if best_score is None or score < best_score:
                    best, best_score = (pos, pred, args, frozenset()), score
            if best is not None and best_score == (0, 0):
                break
        return best

    def _undetermined_literals(self, f):
        kind = f[0]
        if kind == "lit":
            st, _ = self.lit_status(f[1], f[2], f[3])
            if st is None:
                yield (f[1], f[2], f[3])
        elif kind in ("and", "or"):
            for p in f[1]:
                yield from self._undetermined_literals(p)

    def pick_exists_obligation(self):
        """First obligation that is alive only through existential arms.

        Returns (live_arms, provenance): the determined-false arms contribute
        their refutation provenance; the caller branches over live arms.
        """
        for i, (f, names) in enumerate(self.obligations):
            if i in self.satisfied:
                continue
            st, _ = self.eval_formula(f, False)
            if st is not None:
                continue
            if self._first_undetermined(f) is not None:
                continue  # plain literal decisions come first
            arms = f[1] if f[0] == "or" else (f,)
            live = []
            acc = names
            satisfied = False
            for arm in arms:
                ast, prov = self.eval_formula(arm, False)
                if ast is True:
                    satisfied = True
                    break
                if ast is False:
                    acc |= prov
                    continue
                cst, _ = self.eval_formula(arm, True)
                if cst is True:
                    # an existing witness satisfies this arm under the
                    # current (completed) model; nothing to materialize
                    satisfied = True
                    break
                live.append(arm)
            if satisfied:
                continue
            if live:
                return live, acc
        return None

    def _first_undetermined(self, f):
        kind = f[0]
        if kind == "lit":
            st, _ = self.lit_status(f[1], f[2], f[3])
            if st is None:
                return (f[1], f[2], f[3])
            return None
        if kind in ("and", "or"):
            for p in f[1]:
                got = self._first_undetermined(p)
                if got is not None:
                    return got
            return None
        return None  # exists handled by instantiation

    # -- rule instantiation -------------------------------------------------------

    def violations(self, vars_, body, limit: int = 64):
        """Assignments (tuples of terms) falsifying the rule body under the
        completed model; trigger-driven over positive facts."""
        self.solver._tick()
        names = [n for n, _ in vars_]
        triggers = []
        self._collect_triggers(body, triggers)
        domain = self._domain_by_sort()
        out = []
        for env in self._match(triggers, names, dict(), domain, [v[1] for v in vars_]):
            st, _ = self.eval_formula(
                _substitute(body, dict(zip(names, env))), True
            )
            if st is False:
                out.append(env)
                if len(out) >= limit:
                    break
        return out

    def _collect_triggers(self, f, out) -> None:
        # negative predicate literals at the top or/and level act as premises
        kind = f[0]
        if kind == "lit":
            _, pos, pred, args = f
            if not pos and pred != "=" and args:
                out.append((pred, args))
        elif kind in ("and", "or"):
            for p in f[1]:
                self._collect_triggers(p, out)

    def _match(self, triggers, names, env, domain, sorts):
        if not triggers:
            free = [n for n in names if n not in env]
            if not free:
                yield tuple(env[n] for n in names)
                return
            pools = []
            for n in free:
                sort = sorts[names.index(n)]
                pools.append(domain.get(sort, []))
            for combo in itertools.product(*pools):
                env2 = dict(env)
                env2.update(zip(free, combo))
                yield tuple(env2[n] for n in names)
            return
        (pred, args), *rest = triggers
        for (fpred, fargs) in self.pos:
            if fpred != pred or len(fargs) != len(args):
                continue
            env2 = dict(env)
            ok = True
            for pat, val in zip(args, fargs):
                if pat in names:
                    if pat in env2:
                        if self.find(env2[pat]) != self.find(val):
                            ok = False
                            break
                    else:
                        env2[pat] = val
                else:
                    if self.find(pat) != self.find(val):
                        ok = False
                        break
            if ok:
                yield from self._match(rest, names, env2, domain, sorts)


def solve_text(text: str, timeout_ms: int | None = None) -> tuple[str, list[str]]:
    """Library entry point: returns (answer, core_labels)."""
    import io

    deadline = time.monotonic() + timeout_ms / 1000 if timeout_ms else None
    solver = Solver(deadline)
    buf = io.StringIO()
    solver.run_script(text, buf)
    lines = [l for l in buf.getvalue().splitlines() if l]
    answer = lines[0] if lines else "unknown"
    core: list[str] = []
    if len(lines) > 1 and lines[1].startswith("(") and "error" not in lines[1]:
        core = lines[1].strip("()").split()
    return answer, core


def main(argv=None) -> int:
    args = argv if argv is not None else sys.argv[1:]
    timeout_ms = None
    it = iter(args)
    for a in it:
        if a == "--timeout-ms":
            timeout_ms = int(next(it))
        elif a in ("-h", "--help"):
            print("usage: viewfence-solve [--timeout-ms N] < script.smt2")
            return 0
    text = sys.stdin.read()
    deadline = time.monotonic() + timeout_ms / 1000 if timeout_ms else None
    solver = Solver(deadline)
    try:
        solver.run_script(text, sys.stdout)
    except Exception as e:  # malformed input: report like a solver error
        print(f'(error "{e}")')
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
