"""Data domains composed with the threading CPA.

Two abstract domains over qualified variable names (``g`` for globals,
``f__k::x`` for locals of clone ``k`` of ``f``):

* explicit values: a partial map to integers, absent meaning unknown;
* intervals: a partial map to ``(lo, hi)`` with ``None`` for an infinite bound.

Plus the trivial unit domain used for threading-only exploration.
"""

from __future__ import annotations

from typing import Optional

from threadreach.cfa import Assign, Assume, Operation
from threadreach.errors import ArithmeticOverflow
from threadreach.syntax import Binary, Const, Expr, Nondet, Program, Unary, Var
from threadreach.threads import ThreadingState

INT_MIN = -(2**63)
INT_MAX = 2**63 - 1
DEFAULT_WIDENING_THRESHOLD = 10

_NEGATE = {"==": "!=", "!=": "==", "<": ">=", ">=": "<", ">": "<=", "<=": ">"}
_MIRROR = {"==": "==", "!=": "!=", "<": ">", ">": "<", "<=": ">=", ">=": "<="}


def _compare(op: str, a: int, b: int) -> bool:
    if op == "==":
        return a == b
    if op == "!=":
        return a != b
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    return a >= b


class _Env:
    __slots__ = ("env", "_items", "_hash")

    def __init__(self, env: dict):
        self.env = env
        self._items = tuple(sorted(env.items()))
        self._hash = hash(self._items)

    def __eq__(self, other):
        return type(self) is type(other) and self._hash == other._hash and self._items == other._items

    def __hash__(self):
        return self._hash

    def items(self):
        return self._items


# ---------------------------------------------------------------------------
# Explicit values
# ---------------------------------------------------------------------------


class ValueState(_Env):
    def __repr__(self):
        return "{" + ", ".join(f"{k}={v}" for k, v in self._items) + "}"

    def get(self, name: str) -> Optional[int]:
        return self.env.get(name)


def _checked(v: int) -> int:
    if v < INT_MIN or v > INT_MAX:
        raise ArithmeticOverflow(f"64-bit overflow: {v}")
    return v


def eval_value(e: Expr, env: dict) -> Optional[int]:
    """Evaluate under a partial environment; ``None`` means unknown."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return env.get(e.name)
    if isinstance(e, Nondet):
        return None
    if isinstance(e, Unary):
        v = eval_value(e.operand, env)
        if v is None:
            return None
        return _checked(-v) if e.op == "-" else int(v == 0)
    left = eval_value(e.left, env)
    op = e.op
    if op == "&&" and left == 0:
        return 0
    if op == "||" and left is not None and left != 0:
        return 1
    right = eval_value(e.right, env)
    if op == "*" and (left == 0 or right == 0):
        return 0
    if op == "&&" and right == 0:
        return 0
    if op == "||" and right is not None and right != 0:
        return 1
    if left is None or right is None:
        return None
    if op == "+":
        return _checked(left + right)
    if op == "-":
        return _checked(left - right)
    if op == "*":
        return _checked(left * right)
    if op == "&&":
        return int(left != 0 and right != 0)
    if op == "||":
        return int(left != 0 or right != 0)
    return int(_compare(op, left, right))


def _equality_binding(e: Expr, positive: bool, env: dict) -> Optional[tuple[str, int]]:
    """``x == c`` (or ``!(x != c)``) against an unknown ``x`` binds ``x``."""
    while isinstance(e, Unary) and e.op == "!":
        e, positive = e.operand, not positive
    if not isinstance(e, Binary) or e.op not in ("==", "!="):
        return None
    if (e.op == "==") != positive:
        return None
    for var, other in ((e.left, e.right), (e.right, e.left)):
        if isinstance(var, Var) and var.name not in env:
            c = eval_value(other, env)
            if c is not None:
                return var.name, c
    return None


def value_transfer(d: ValueState, op: Operation) -> list[ValueState]:
    if isinstance(op, Assign):
        v = eval_value(op.expr, d.env)
        env = dict(d.env)
        if v is None:
            env.pop(op.var, None)
        else:
            env[op.var] = v
        return [ValueState(env)]
    if isinstance(op, Assume):
        v = eval_value(op.expr, d.env)
        if v is not None:
            return [d] if (v != 0) == op.positive else []
        binding = _equality_binding(op.expr, op.positive, d.env)
        if binding is not None:
            env = dict(d.env)
            env[binding[0]] = binding[1]
            return [ValueState(env)]
        return [d]
    return [d]


def value_leq(a: ValueState, b: ValueState) -> bool:
    """``a`` ⊑ ``b``: every binding of ``b`` also holds in ``a``."""
    env = a.env
    return all(env.get(k, _MISSING) == v for k, v in b.items())


_MISSING = object()


# ---------------------------------------------------------------------------
# Intervals
# ---------------------------------------------------------------------------

Bound = Optional[int]
Interval = tuple  # (lo, hi) with None for -inf / +inf
TOP_INTERVAL = (None, None)


def _sat(v: Optional[int]) -> Optional[int]:
    if v is None or v < INT_MIN or v > INT_MAX:
        return None
    return v


def _lo_le(a: Bound, b: Bound) -> bool:
    """Compare lower bounds (None = -inf)."""
    return a is None or (b is not None and a <= b)


def _hi_le(a: Bound, b: Bound) -> bool:
    """Compare upper bounds (None = +inf)."""
    return b is None or (a is not None and a <= b)


def interval_contains(outer: Interval, inner: Interval) -> bool:
    return _lo_le(outer[0], inner[0]) and _hi_le(inner[1], outer[1])


def interval_hull(a: Interval, b: Interval) -> Interval:
    lo = None if a[0] is None or b[0] is None else min(a[0], b[0])
    hi = None if a[1] is None or b[1] is None else max(a[1], b[1])
    return (lo, hi)


def _meet(a: Interval, b: Interval) -> Optional[Interval]:
    lo = b[0] if a[0] is None else a[0] if b[0] is None else max(a[0], b[0])
    hi = b[1] if a[1] is None else a[1] if b[1] is None else min(a[1], b[1])
    if lo is not None and hi is not None and lo > hi:
        return None
    return (lo, hi)


def _add(a: Interval, b: Interval) -> Interval:
    lo = None if a[0] is None or b[0] is None else _sat(a[0] + b[0])
    hi = None if a[1] is None or b[1] is None else _sat(a[1] + b[1])
    return (lo, hi)


def _neg(a: Interval) -> Interval:
    return (None if a[1] is None else -a[1], None if a[0] is None else -a[0])


def _scale(a: Interval, c: int) -> Interval:
    if c == 0:
        return (0, 0)
    lo = None if a[0] is None else _sat(a[0] * c)
    hi = None if a[1] is None else _sat(a[1] * c)
    return (lo, hi) if c > 0 else (hi, lo)


def _mul(a: Interval, b: Interval) -> Interval:
    if a[0] is not None and a[0] == a[1]:
        return _scale(b, a[0])
    if b[0] is not None and b[0] == b[1]:
        return _scale(a, b[0])
    return TOP_INTERVAL


def _truth(a: Interval) -> Interval:
    """Map a numeric interval to the truth interval within [0, 1]."""
    if a == (0, 0):
        return (0, 0)
    if not interval_contains(a, (0, 0)):
        return (1, 1)
    return (0, 1)


def _cmp_interval(op: str, a: Interval, b: Interval) -> Interval:
    can_true = _feasible(op, a, b)
    can_false = _feasible(_NEGATE[op], a, b)
    return (0 if can_false else 1, 1 if can_true else 0)


def _feasible(op: str, a: Interval, b: Interval) -> bool:
    """Is there a pair (x, y) in a × b with ``x op y``?"""
    if op == "==":
        return _meet(a, b) is not None
    if op == "!=":
        return not (a[0] is not None and a[0] == a[1] == b[0] == b[1])
    if op == "<":
        return a[0] is None or b[1] is None or a[0] < b[1]
    if op == "<=":
        return a[0] is None or b[1] is None or a[0] <= b[1]
    if op == ">":
        return a[1] is None or b[0] is None or a[1] > b[0]
    return a[1] is None or b[0] is None or a[1] >= b[0]


def eval_interval(e: Expr, env: dict) -> Interval:
    if isinstance(e, Const):
        return (e.value, e.value)
    if isinstance(e, Var):
        return env.get(e.name, TOP_INTERVAL)
    if isinstance(e, Nondet):
        return TOP_INTERVAL
    if isinstance(e, Unary):
        v = eval_interval(e.operand, env)
        if e.op == "-":
            return _neg(v)
        t = _truth(v)
        return (1 - t[1], 1 - t[0])
    a = eval_interval(e.left, env)
    b = eval_interval(e.right, env)
    op = e.op
    if op == "+":
        return _add(a, b)
    if op == "-":
        return _add(a, _neg(b))
    if op == "*":
        return _mul(a, b)
    if op == "&&":
        ta, tb = _truth(a), _truth(b)
        return (min(ta[0], tb[0]), min(ta[1], tb[1]))
    if op == "||":
        ta, tb = _truth(a), _truth(b)
        return (max(ta[0], tb[0]), max(ta[1], tb[1]))
    return _cmp_interval(op, a, b)


def _refine_var(env: dict, name: str, op: str, other: Interval) -> Optional[dict]:
    cur = env.get(name, TOP_INTERVAL)
    lo, hi = other
    if op == "==":
        bound = other
    elif op == "<":
        bound = (None, None if hi is None else hi - 1)
    elif op == "<=":
        bound = (None, hi)
    elif op == ">":
        bound = (None if lo is None else lo + 1, None)
    elif op == ">=":
        bound = (lo, None)
    else:  # "!=": only trims an endpoint equal to a singleton
        if lo is not None and lo == hi:
            if cur[0] == lo == cur[1]:
                return None
            if cur[0] == lo:
                cur = (lo + 1, cur[1])
            elif cur[1] == lo:
                cur = (cur[0], lo - 1)
        bound = TOP_INTERVAL
    new = _meet(cur, bound)
    if new is None:
        return None
    out = dict(env)
    if new == TOP_INTERVAL:
        out.pop(name, None)
    else:
        out[name] = new
    return out


def _join_env(a: Optional[dict], b: Optional[dict]) -> Optional[dict]:
    if a is None:
        return b
    if b is None:
        return a
    out = {}
    for k in a.keys() & b.keys():
        h = interval_hull(a[k], b[k])
        if h != TOP_INTERVAL:
            out[k] = h
    return out


def refine(env: dict, e: Expr, positive: bool) -> Optional[dict]:
    """Strengthen ``env`` with the assumption ``e`` (or its negation); ``None`` if infeasible."""
    if isinstance(e, Unary) and e.op == "!":
        return refine(env, e.operand, not positive)
    if isinstance(e, Binary) and e.op in ("&&", "||"):
        conjunctive = (e.op == "&&") == positive
        if conjunctive:
            first = refine(env, e.left, positive)
            return None if first is None else refine(first, e.right, positive)
        return _join_env(refine(env, e.left, positive), refine(env, e.right, positive))
    if isinstance(e, Binary) and e.op in _NEGATE:
        op = e.op if positive else _NEGATE[e.op]
        left = eval_interval(e.left, env)
        right = eval_interval(e.right, env)
        if not _feasible(op, left, right):
            return None
        out = env
        if isinstance(e.left, Var):
            out = _refine_var(out, e.left.name, op, right)
            if out is None:
                return None
        if isinstance(e.right, Var):
            out = _refine_var(out, e.right.name, _MIRROR[op], eval_interval(e.left, out))
        return out
    t = _truth(eval_interval(e, env))
    if positive and t == (0, 0):
        return None
    if not positive and t == (1, 1):
        return None
    if isinstance(e, Var) and not positive:
        return _refine_var(env, e.name, "==", (0, 0))
    return env


class IntervalState(_Env):
    def __repr__(self):
        def show(b, inf):
            return inf if b is None else str(b)

        return "{" + ", ".join(
            f"{k}∈[{show(lo, '-∞')},{show(hi, '+∞')}]" for k, (lo, hi) in self._items
        ) + "}"

    def get(self, name: str) -> Interval:
        return self.env.get(name, TOP_INTERVAL)


def _interval_state(env: dict) -> IntervalState:
    return IntervalState({k: v for k, v in env.items() if v != TOP_INTERVAL})


def interval_transfer(d: IntervalState, op: Operation) -> list[IntervalState]:
    if isinstance(op, Assign):
        env = dict(d.env)
        env[op.var] = eval_interval(op.expr, d.env)
        return [_interval_state(env)]
    if isinstance(op, Assume):
        env = refine(d.env, op.expr, op.positive)
        if env is None:
            return []
        return [d] if env is d.env else [_interval_state(env)]
    return [d]


def interval_leq(a: IntervalState, b: IntervalState) -> bool:
    """``a`` ⊑ ``b``: each interval of ``a`` lies inside the matching one of ``b``."""
    for k, outer in b.items():
        if not interval_contains(outer, a.env.get(k, TOP_INTERVAL)):
            return False
    return True


def interval_join(a: IntervalState, b: IntervalState) -> IntervalState:
    return _interval_state(_join_env(a.env, b.env))


def interval_widen(old: IntervalState, new: IntervalState, visit_count: int,
                   threshold: int = DEFAULT_WIDENING_THRESHOLD) -> IntervalState:
    """Join below ``threshold`` visits; from then on unstable bounds go to infinity."""
    if visit_count < threshold:
        return interval_join(old, new)
    env = {}
    for k in old.env.keys() & new.env.keys():
        (olo, ohi), (nlo, nhi) = old.env[k], new.env[k]
        lo = olo if _lo_le(olo, nlo) else None
        hi = ohi if _hi_le(nhi, ohi) else None
        env[k] = (lo, hi)
    return _interval_state(env)


# ---------------------------------------------------------------------------
# Domain objects
# ---------------------------------------------------------------------------


def _initial_globals(program: Program) -> dict:
    return {g.name: g.init or 0 for g in program.globals}


class UnitDomain:
    name = "none"
    joins = False

    def initial(self, program: Program):
        return None

    def transfer(self, d, op):
        return [d]

    def leq(self, a, b) -> bool:
        return True


class ValueDomain:
    name = "value"
    joins = False

    def initial(self, program: Program) -> ValueState:
        return ValueState(_initial_globals(program))

    def transfer(self, d, op):
        return value_transfer(d, op)

    def leq(self, a, b) -> bool:
        return value_leq(a, b)


class IntervalDomain:
    name = "interval"
    joins = True

    def __init__(self, widening_threshold: int = DEFAULT_WIDENING_THRESHOLD):
        self.widening_threshold = widening_threshold

    def initial(self, program: Program) -> IntervalState:
        return IntervalState({k: (v, v) for k, v in _initial_globals(program).items()})

    def transfer(self, d, op):
        return interval_transfer(d, op)

    def leq(self, a, b) -> bool:
        return interval_leq(a, b)

    def merge(self, new, old, visit_count: int):
        return interval_widen(old, new, visit_count, self.widening_threshold)


DOMAINS = {"none": UnitDomain, "value": ValueDomain, "interval": IntervalDomain}


def make_domain(name: str, **kwargs):
    if name not in DOMAINS:
        raise ValueError(f"unknown domain {name!r}")
    return DOMAINS[name](**kwargs) if name == "interval" else DOMAINS[name]()


# ---------------------------------------------------------------------------
# Composite states
# ---------------------------------------------------------------------------


class CompositeState:
    """Threading state paired with a data state (``None`` for the unit domain)."""

    __slots__ = ("threading", "data", "_hash")

    def __init__(self, threading: ThreadingState, data=None):
        self.threading = threading
        self.data = data
        self._hash = hash((threading, data))

    def __eq__(self, other):
        return (
            isinstance(other, CompositeState)
            and self._hash == other._hash
            and self.threading == other.threading
            and self.data == other.data
        )

    def __hash__(self):
        return self._hash

    def __repr__(self):
        data = "" if self.data is None else f", {self.data!r}"
        return f"<{self.threading.label()}{data}>"


def composite_transfer(s: CompositeState, cfa, domain, por: bool = False,
                       diagnostics: Optional[list] = None, prune_errors: bool = False):
    """All ``(move, successor)`` pairs; a move whose data result is empty is pruned."""
    from threadreach.threads import threading_transfer

    out = []
    for move in threading_transfer(s.threading, cfa, por, diagnostics):
        if prune_errors and move.edge.target.is_error:
            continue
        for d in domain.transfer(s.data, move.edge.op):
            out.append((move, CompositeState(move.successor, d)))
    return out


def composite_covers(candidate: CompositeState, s: CompositeState, domain) -> bool:
    return candidate.threading == s.threading and domain.leq(s.data, candidate.data)


def composite_stop(s: CompositeState, candidates, domain) -> bool:
    return any(composite_covers(c, s, domain) for c in candidates)
