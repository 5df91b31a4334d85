"""Bounded brute-force interpreter used as ground truth in differential tests.

Explores every interleaving of the *uncloned* CFA with concrete integers,
one statement per step.  ``nondet()`` ranges over a small finite set.  It
shares nothing with the threading CPA or the abstract domains beyond the
lowered CFA itself: thread bookkeeping, locking, joins and expression
evaluation are re-implemented here in the most direct way.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

from threadreach import cfa as C
from threadreach.syntax import Binary, Const, Nondet, Program, Unary, Var, parse

_ATOMIC = "<atomic>"


class OracleError(Exception):
    pass


class OracleBoundExceeded(OracleError):
    pass


class OracleUnsupported(OracleError):
    pass


@dataclass
class OracleResult:
    verdict: str  # "SAFE" | "VIOLATION" | "DEADLOCK"
    max_observed: dict
    state_count: int
    error_reachable: bool = False
    deadlock_reachable: bool = False
    complete: bool = True
    # (thread name, uncloned location id) tuple -> {variable: set of observed values}
    observations: dict = field(default_factory=dict)


def _eval(e, env, choices):
    """Concrete evaluation; ``choices`` is an iterator feeding ``nondet()``."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return env[e.name]
    if isinstance(e, Nondet):
        return next(choices)
    if isinstance(e, Unary):
        v = _eval(e.operand, env, choices)
        return -v if e.op == "-" else (1 if v == 0 else 0)
    a = _eval(e.left, env, choices)
    b = _eval(e.right, env, choices)  # no short-circuit: every nondet() is drawn
    op = e.op
    r = {
        "+": lambda: a + b, "-": lambda: a - b, "*": lambda: a * b,
        "&&": lambda: int(bool(a) and bool(b)), "||": lambda: int(bool(a) or bool(b)),
        "==": lambda: int(a == b), "!=": lambda: int(a != b), "<": lambda: int(a < b),
        "<=": lambda: int(a <= b), ">": lambda: int(a > b), ">=": lambda: int(a >= b),
    }[op]()
    if not -(2**63) <= r < 2**63:
        raise OracleUnsupported("64-bit overflow")
    return r


def _count_nondet(e) -> int:
    if isinstance(e, Nondet):
        return 1
    if isinstance(e, Unary):
        return _count_nondet(e.operand)
    if isinstance(e, Binary):
        return _count_nondet(e.left) + _count_nondet(e.right)
    return 0


def _evaluations(expr, env, values):
    n = _count_nondet(expr)
    for combo in itertools.product(values, repeat=n):
        yield _eval(expr, env, iter(combo))


# A concrete state: (threads, locks, globals)
#   threads: sorted tuple of (name, function, loc_id, stack, locals)
#   locks:   sorted tuple of (mutex, thread name)
#   globals: sorted tuple of (name, value)


class _Interpreter:
    def __init__(self, program: Program, values):
        self.program = program
        self.cfa = C.lower_to_cfa(program)
        self.values = tuple(values)
        self.locations = {loc.id: loc for loc in self.cfa.locations()}
        self.out = {}
        for e in self.cfa.edges():
            self.out.setdefault(e.source.id, []).append(e)
        self.entry = {name: f.entry.id for name, f in self.cfa.functions.items()}

    def initial(self):
        globals_ = tuple(sorted((g.name, g.init or 0) for g in self.program.globals))
        return ((("main", "main", self.entry["main"], (), ()),), (), globals_)

    def successors(self, state):
        """Yield ``(thread name, edge, successor)`` for every concrete step."""
        threads, locks, globals_ = state
        lockmap = dict(locks)
        atomic = lockmap.get(_ATOMIC)
        for idx, (name, fn, loc, stack, locals_) in enumerate(threads):
            if atomic is not None and atomic != name:
                continue
            location = self.locations[loc]
            edges = list(self.out.get(loc, ()))
            if location.is_exit and stack:
                edges.append(C.CfaEdge(location, self.locations[stack[-1]], C.ReturnPop()))
            for edge in edges:
                for succ in self._step(state, idx, edge, lockmap):
                    yield name, edge, succ

    def _step(self, state, idx, edge, lockmap):
        threads, locks, globals_ = state
        name, fn, loc, stack, locals_ = threads[idx]
        op = edge.op
        target = edge.target.id

        def moved(new_loc=target, new_stack=stack, new_locals=locals_):
            ts = list(threads)
            ts[idx] = (name, fn, new_loc, new_stack, new_locals)
            return ts

        if isinstance(op, (C.Assign, C.Assume)):
            env = dict(globals_)
            env.update(locals_)
            for value in _evaluations(op.expr, env, self.values):
                if isinstance(op, C.Assume):
                    if bool(value) == op.positive:
                        yield (tuple(moved()), locks, globals_)
                    continue
                if "::" in op.var:
                    nl = dict(locals_)
                    nl[op.var] = value
                    yield (tuple(moved(new_locals=tuple(sorted(nl.items())))), locks, globals_)
                else:
                    ng = dict(globals_)
                    ng[op.var] = value
                    yield (tuple(moved()), locks, tuple(sorted(ng.items())))
        elif isinstance(op, C.Create):
            if any(t[0] == op.thread_var for t in threads):
                raise OracleUnsupported(f"thread variable {op.thread_var} reused while live")
            ts = moved()
            ts.append((op.thread_var, op.function, self.entry[op.function], (), ()))
            yield (tuple(sorted(ts)), locks, globals_)
        elif isinstance(op, C.Join):
            for j, t in enumerate(threads):
                if t[0] == op.thread_var and j != idx:
                    if self.locations[t[2]].is_exit and not t[3]:
                        ts = moved()
                        del ts[j]
                        yield (tuple(ts), locks, globals_)
        elif isinstance(op, (C.Lock, C.AtomicBegin)):
            m = op.mutex if isinstance(op, C.Lock) else _ATOMIC
            if m not in lockmap:
                yield (tuple(moved()), tuple(sorted(locks + ((m, name),))), globals_)
        elif isinstance(op, (C.Unlock, C.AtomicEnd)):
            m = op.mutex if isinstance(op, C.Unlock) else _ATOMIC
            if lockmap.get(m) == name:
                yield (tuple(moved()), tuple(l for l in locks if l[0] != m), globals_)
        elif isinstance(op, C.CallPush):
            yield (tuple(moved(self.entry[op.callee], stack + (target,))), locks, globals_)
        elif isinstance(op, C.ReturnPop):
            yield (tuple(moved(stack[-1], stack[:-1])), locks, globals_)
        else:
            yield (tuple(moved()), locks, globals_)

    def has_any_move(self, state) -> bool:
        """Could some thread move if data were ignored?  (Locks, joins and atomics still apply.)"""
        threads, locks, _ = state
        lockmap = dict(locks)
        atomic = lockmap.get(_ATOMIC)
        names = {t[0]: t for t in threads}
        for name, fn, loc, stack, _ in threads:
            if atomic is not None and atomic != name:
                continue
            location = self.locations[loc]
            if location.is_exit and stack:
                return True
            for e in self.out.get(loc, ()):
                op = e.op
                if isinstance(op, (C.Lock, C.AtomicBegin)):
                    m = op.mutex if isinstance(op, C.Lock) else _ATOMIC
                    if m not in lockmap:
                        return True
                elif isinstance(op, (C.Unlock, C.AtomicEnd)):
                    m = op.mutex if isinstance(op, C.Unlock) else _ATOMIC
                    if lockmap.get(m) == name:
                        return True
                elif isinstance(op, C.Join):
                    t = names.get(op.thread_var)
                    if t is not None and t[0] != name and self.locations[t[2]].is_exit and not t[3]:
                        return True
                else:
                    return True
        return False

    def is_deadlock(self, state) -> bool:
        if self.has_any_move(state):
            return False
        sync = (C.Lock, C.Join, C.AtomicBegin)
        return any(
            any(isinstance(e.op, sync) for e in self.out.get(t[2], ()))
            for t in state[0]
        )

    def is_error(self, state) -> bool:
        return any(self.locations[t[2]].is_error for t in state[0])


def location_tuple(state) -> tuple:
    return tuple(sorted((t[0], t[2]) for t in state[0]))


def run_oracle(source: str, step_bound: int = 10_000, values=(0, 1), truncate: bool = False,
               observe: bool = False) -> OracleResult:
    """Exhaustive breadth-first exploration of the concrete state space.

    With ``truncate`` the search silently stops expanding at ``step_bound``
    steps and the result is marked incomplete; otherwise exceeding the bound
    raises :class:`OracleBoundExceeded`.
    """
    interp = _Interpreter(parse(source), values)
    init = interp.initial()
    seen = {init}
    queue = deque([(init, 0)])
    error = deadlock = False
    complete = True
    maxima: dict[str, int] = {}
    observations: dict = {}
    while queue:
        state, depth = queue.popleft()
        for name, value in state[2]:
            if value > maxima.get(name, value - 1):
                maxima[name] = value
        if observe:
            slot = observations.setdefault(location_tuple(state), {})
            values_here = dict(state[2])
            for t in state[0]:
                values_here.update(t[4])
            for var, v in values_here.items():
                slot.setdefault(var, set()).add(v)
        if interp.is_error(state):
            error = True
        elif interp.is_deadlock(state):
            deadlock = True
        successors = list(interp.successors(state))
        if successors and depth >= step_bound:
            if not truncate:
                raise OracleBoundExceeded(f"an interleaving exceeds {step_bound} steps")
            complete = False
            continue
        for _, _, succ in successors:
            if succ not in seen:
                seen.add(succ)
                queue.append((succ, depth + 1))
    verdict = "VIOLATION" if error else "DEADLOCK" if deadlock else "SAFE"
    return OracleResult(verdict, maxima, len(seen), error, deadlock, complete, observations)


def oracle(task_path, step_bound: int = 10_000, values=(0, 1)) -> OracleResult:
    return run_oracle(Path(task_path).read_text(), step_bound, values)
