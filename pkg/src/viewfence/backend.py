"""Subprocess SMT solver driver: race an ensemble, harvest unsat cores.

Each configured solver receives the full SMT-LIB script on stdin and must
print the check-sat answer (and, when asked, a core S-expression) on stdout.
The default ensemble is the bundled `viewfence-solve`; z3/cvc5 style commands
can be configured interchangeably (e.g. ["z3", "-in"]).
"""

from __future__ import annotations

import shlex
import subprocess
import sys
import threading
import time
from dataclasses import dataclass, field

from .errors import SolverSpawnError
from .smtlib import SmtScript


@dataclass(frozen=True)
class SolverConfig:
    command: tuple[str, ...]
    budget_ms: int = 2000
    supports_cores: bool = True
    name: str = ""

    def label(self) -> str:
        return self.name or self.command[0]


def bundled_solver(budget_ms: int = 2000) -> SolverConfig:
    # {timeout_ms} is substituted with the effective per-call budget
    cmd = (sys.executable, "-m", "viewfence.minismt", "--timeout-ms", "{timeout_ms}")
    return SolverConfig(cmd, budget_ms, True, "viewfence-solve")


def parse_solver_flag(spec: str, budget_ms: int) -> SolverConfig:
    return SolverConfig(tuple(shlex.split(spec)), budget_ms, True, spec)


@dataclass(frozen=True)
class SolverOutcome:
    status: str  # "unsat" | "sat" | "unknown"
    core: frozenset[str] = frozenset()
    reason: str = ""
    winner: str = ""

    @property
    def is_unsat(self) -> bool:
        return self.status == "unsat"

    @property
    def is_sat(self) -> bool:
        return self.status == "sat"


def _run_one(
    cfg: SolverConfig, text: str, declared: frozenset[str], budget_ms: int | None = None
) -> SolverOutcome:
    effective = budget_ms if budget_ms is not None else cfg.budget_ms
    cmd = [a.replace("{timeout_ms}", str(effective)) for a in cfg.command]
    try:
        proc = subprocess.Popen(
            cmd,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
        )
    except OSError as e:
        raise SolverSpawnError(f"cannot spawn {cfg.label()}: {e}") from e
    try:
        out, _ = proc.communicate(text, timeout=effective / 1000 + 5)
    except subprocess.TimeoutExpired:
        proc.kill()
        proc.communicate()
        return SolverOutcome("unknown", reason="timeout", winner=cfg.label())
    lines = [l.strip() for l in out.splitlines() if l.strip()]
    answer = next((l for l in lines if l in ("sat", "unsat", "unknown")), None)
    if answer is None:
        return SolverOutcome("unknown", reason="solver-error", winner=cfg.label())
    if answer != "unsat":
        return SolverOutcome(answer, winner=cfg.label())
    core: frozenset[str] = frozenset()
    idx = lines.index("unsat")
    for line in lines[idx + 1 :]:
        if line.startswith("(") and "error" not in line:
            labels = frozenset(line.strip("()").split())
            if labels <= declared:
                core = labels
            break
    if not core:
        core = declared  # no usable core: every labeled assertion may matter
    return SolverOutcome("unsat", core=core, winner=cfg.label())


def _race(script_text: str, configs, declared, deadline: float, collect_window_s: float):
    """Run all solvers in threads; return decisive outcomes as they arrive."""
    results: list[SolverOutcome] = []
    errors: list[Exception] = []
    lock = threading.Lock()
    done = threading.Event()
    budget_ms = max(1, int((deadline - time.monotonic()) * 1000))

    def work(cfg: SolverConfig):
        try:
            out = _run_one(cfg, script_text, declared, budget_ms)
        except SolverSpawnError as e:
            with lock:
                errors.append(e)
            done.set()
            return
        with lock:
            results.append(out)
        if out.status in ("sat", "unsat"):
            done.set()

    threads = [threading.Thread(target=work, args=(c,), daemon=True) for c in configs]
    for t in threads:
        t.start()

    def decisive():
        with lock:
            return [r for r in results if r.status in ("sat", "unsat")]

    while time.monotonic() < deadline:
        if done.wait(timeout=0.01):
            if decisive() or errors:
                break
            done.clear()
    if errors and not decisive():
        raise errors[0]
    if not decisive():
        return [SolverOutcome("unknown", reason="timeout")], threads, lock, results
    if collect_window_s > 0:
        t_end = time.monotonic() + collect_window_s
        while time.monotonic() < t_end:
            with lock:
                finished = len(results)
            if finished == len(configs):
                break
            time.sleep(0.005)
    return decisive(), threads, lock, results


def solve(script: SmtScript, configs, deadline_ms: int | None = None) -> SolverOutcome:
    """First decisive outcome from the ensemble; Unknown if none by deadline."""
    configs = list(configs)
    if not configs:
        raise SolverSpawnError("no solver configured")
    text = script.to_text()
    declared = frozenset(script.labels)
    budget = deadline_ms if deadline_ms is not None else max(c.budget_ms for c in configs)
    deadline = time.monotonic() + budget / 1000
    outcomes, *_ = _race(text, configs, declared, deadline, 0.0)
    return outcomes[0]


def solve_for_core(
    script: SmtScript,
    configs,
    deadline_ms: int | None = None,
    wait_window_ms: int = 250,
    verify: bool = True,
) -> SolverOutcome:
    """Like solve, but waits a window after the first Unsat and returns the
    smallest core received; cores are re-verified by a restricted solve."""
    configs = list(configs)
    if not configs:
        raise SolverSpawnError("no solver configured")
    text = script.to_text()
    declared = frozenset(script.labels)
    budget = deadline_ms if deadline_ms is not None else max(c.budget_ms for c in configs)
    deadline = time.monotonic() + budget / 1000
    outcomes, threads, lock, results = _race(
        text, configs, declared, deadline, wait_window_ms / 1000
    )
    with lock:
        final = [r for r in results if r.status in ("sat", "unsat")] or outcomes
    unsats = [r for r in final if r.status == "unsat"]
    if not unsats:
        return final[0]
    best = min(unsats, key=lambda r: len(r.core))
    if verify and best.core != declared:
        restricted = restrict_script(script, best.core)
        check = solve(restricted, configs, deadline_ms)
        if not check.is_unsat:
            return SolverOutcome("unsat", core=declared, winner=best.winner)
    return best


@dataclass
class SolverHarness:
    """Solver ensemble with the two per-call budgets the engine uses."""

    configs: list[SolverConfig] = field(default_factory=lambda: [bundled_solver()])
    check_budget_ms: int = 2000
    template_budget_ms: int = 10000
    wait_window_ms: int = 250
    calls: int = 0

    def check(self, script: SmtScript) -> SolverOutcome:
        self.calls += 1
        return solve(script, self.configs, self.check_budget_ms)

    def check_for_core(self, script: SmtScript) -> SolverOutcome:
        self.calls += 1
        return solve_for_core(
            script, self.configs, self.template_budget_ms, self.wait_window_ms
        )


def restrict_script(script: SmtScript, core: frozenset[str]) -> SmtScript:
    """Keep unlabeled assertions plus the core-labeled ones."""
    out = SmtScript(script.logic)
    out.sorts = list(script.sorts)
    out.consts = list(script.consts)
    out.funs = list(script.funs)
    out.assertions = [
        (label, term)
        for label, term in script.assertions
        if label is None or label in core
    ]
    return out
