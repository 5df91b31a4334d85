"""The threading CPA: one location and callstack per live thread, plus mutexes.

A :class:`ThreadingState` maps thread identifiers to ``(location, callstack)``
and mutex names to their owning thread.  :func:`threading_transfer` computes
every enabled move of every thread; thread creation, joins, locks and atomic
sections are handled by dedicated helpers.  Partial-order reduction reuses the
lock machinery through the reserved ``__local__`` mutex.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterator, Optional

from threadreach.cfa import (
    AtomicBegin, AtomicEnd, CallPush, CfaEdge, CfaSet, Create, Join, Location, Lock,
    ReturnPop, Scope, Unlock, base_name, clone_name,
)
from threadreach.errors import InsufficientClones, UnsupportedFeature

logger = logging.getLogger(__name__)

ATOMIC_LOCK = "__atomic__"
LOCAL_LOCK = "__local__"


@dataclass(frozen=True, order=True)
class ThreadId:
    """A thread is named by the variable it was assigned to.

    ``ordinal`` is the clone index the thread runs in (0 for ``main``) and
    ``start`` the base name of its start routine.
    """

    name: str
    ordinal: int = 1
    start: str = ""

    def __str__(self):
        return self.name


MAIN = ThreadId("main", 0, "main")

# Flat-lattice elements; the transfer relation never produces them.
UNKNOWN_LOCATION = Location("<top>", "<top>", "⊤")


class ThreadingState:
    """Immutable thread map plus lock map, with a cached hash."""

    __slots__ = ("threads", "locks", "_hash")

    def __init__(self, threads, locks=()):
        # threads: sorted tuple of (ThreadId, Location, callstack tuple)
        # locks: sorted tuple of (mutex name, ThreadId)
        self.threads = tuple(sorted(threads, key=lambda t: t[0]))
        self.locks = tuple(sorted(locks))
        self._hash = hash((self.threads, self.locks))

    def __eq__(self, other):
        return (
            isinstance(other, ThreadingState)
            and self._hash == other._hash
            and self.threads == other.threads
            and self.locks == other.locks
        )

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"ThreadingState({self.label()})"

    def label(self, with_locks: bool = True) -> str:
        """``main↦4, id1↦B``-style rendering; ``main`` first."""
        order = sorted(self.threads, key=lambda t: (t[0] != MAIN, t[0]))
        parts = [f"{tid}↦{loc.label}" for tid, loc, _ in order]
        text = ", ".join(parts)
        if with_locks and self.locks:
            text += " | " + ", ".join(f"{m}:{tid}" for m, tid in self.locks)
        return text

    # queries -------------------------------------------------------------

    def thread_ids(self) -> list[ThreadId]:
        return [t[0] for t in self.threads]

    def entry(self, tid: ThreadId) -> Optional[tuple[Location, tuple]]:
        for t, loc, stack in self.threads:
            if t == tid:
                return loc, stack
        return None

    def location(self, tid: ThreadId) -> Optional[Location]:
        e = self.entry(tid)
        return e[0] if e else None

    def by_name(self, name: str) -> Optional[ThreadId]:
        for t, _, _ in self.threads:
            if t.name == name:
                return t
        return None

    def holder(self, mutex: str) -> Optional[ThreadId]:
        for m, t in self.locks:
            if m == mutex:
                return t
        return None

    @property
    def active_count(self) -> int:
        return len(self.threads)

    # updates -------------------------------------------------------------

    def moved(self, tid: ThreadId, loc: Location, stack: tuple) -> "ThreadingState":
        threads = [(t, l, s) if t != tid else (t, loc, stack) for t, l, s in self.threads]
        return ThreadingState(threads, self.locks)

    def with_thread(self, tid: ThreadId, loc: Location, stack: tuple = ()) -> "ThreadingState":
        return ThreadingState(self.threads + ((tid, loc, stack),), self.locks)

    def without_thread(self, tid: ThreadId) -> "ThreadingState":
        return ThreadingState([t for t in self.threads if t[0] != tid], self.locks)

    def with_lock(self, mutex: str, tid: ThreadId) -> "ThreadingState":
        return ThreadingState(self.threads, self.locks + ((mutex, tid),))

    def without_lock(self, mutex: str) -> "ThreadingState":
        return ThreadingState(self.threads, [l for l in self.locks if l[0] != mutex])


class _Top:
    """The top element of the flat threading lattice."""

    def __repr__(self):
        return "ThreadingState(⊤)"

    def location(self, tid):
        return UNKNOWN_LOCATION


TOP = _Top()


def threading_leq(a, b) -> bool:
    return b is TOP or a == b


def threading_join(a, b):
    """Least upper bound in the flat lattice.  Only used by tests: merge-sep
    never combines states during an analysis."""
    return a if a == b else TOP


@dataclass(frozen=True)
class EnabledMove:
    thread: ThreadId
    edge: CfaEdge
    successor: ThreadingState


def threading_initial(cfa: CfaSet) -> ThreadingState:
    return ThreadingState([(MAIN, cfa.main_entry, ())])


# ---------------------------------------------------------------------------
# Transfer cases
# ---------------------------------------------------------------------------


def _free_ordinal(s: ThreadingState, cfa: CfaSet, function: str) -> int:
    """Smallest clone index not used by a live thread whose code overlaps ``function``'s."""
    family = cfa.family(function)
    taken = {tid.ordinal for tid, _, _ in s.threads
             if tid.ordinal and cfa.family(tid.start) & family}
    for k in range(1, cfa.max_clones + 1):
        if k not in taken:
            return k
    raise InsufficientClones(function, cfa.max_clones)


def apply_create(s: ThreadingState, tid: ThreadId, edge: CfaEdge, cfa: CfaSet) -> ThreadingState:
    op = edge.op
    if s.by_name(op.thread_var) is not None:
        raise UnsupportedFeature(
            f"thread variable '{op.thread_var}' is assigned a new thread while its "
            "previous thread is still live"
        )
    function = base_name(op.function)
    k = _free_ordinal(s, cfa, function)
    new = ThreadId(op.thread_var, k, function)
    entry = cfa.functions[clone_name(function, k)].entry
    _, stack = s.entry(tid)
    return s.moved(tid, edge.target, stack).with_thread(new, entry, ())


def apply_join(s: ThreadingState, tid: ThreadId, edge: CfaEdge) -> Optional[ThreadingState]:
    exiting = s.by_name(edge.op.thread_var)
    if exiting is None or exiting == tid:
        return None
    loc, stack = s.entry(exiting)
    if not loc.is_exit or stack:
        return None
    _, own_stack = s.entry(tid)
    return s.without_thread(exiting).moved(tid, edge.target, own_stack)


def apply_plain(s: ThreadingState, tid: ThreadId, edge: CfaEdge, cfa: CfaSet) -> ThreadingState:
    _, stack = s.entry(tid)
    op = edge.op
    if isinstance(op, CallPush):
        return s.moved(tid, cfa.functions[op.callee].entry, stack + (edge.target,))
    if isinstance(op, ReturnPop):
        if not stack:
            raise AssertionError("return with an empty callstack")
        return s.moved(tid, stack[-1], stack[:-1])
    return s.moved(tid, edge.target, stack)


def apply_lock_ops(s: ThreadingState, tid: ThreadId, edge: CfaEdge,
                   diagnostics: Optional[list] = None) -> Optional[ThreadingState]:
    op = edge.op
    if isinstance(op, (Lock, AtomicBegin)):
        mutex = op.mutex if isinstance(op, Lock) else ATOMIC_LOCK
        if s.holder(mutex) is not None:
            return None
        _, stack = s.entry(tid)
        return s.with_lock(mutex, tid).moved(tid, edge.target, stack)
    mutex = op.mutex if isinstance(op, Unlock) else ATOMIC_LOCK
    if s.holder(mutex) != tid:
        message = f"{tid} unlocks '{mutex}' without owning it at {edge.source.id}"
        logger.debug(message)
        if diagnostics is not None and message not in diagnostics:
            diagnostics.append(message)
        return None
    _, stack = s.entry(tid)
    return s.without_lock(mutex).moved(tid, edge.target, stack)


def _outgoing(cfa: CfaSet, loc: Location, stack: tuple) -> Iterator[CfaEdge]:
    yield from cfa.out_edges(loc)
    if loc.is_exit and stack:
        yield CfaEdge(loc, stack[-1], ReturnPop(), Scope.LOCAL)


def _successor(s, tid, edge, cfa, diagnostics):
    op = edge.op
    if isinstance(op, Create):
        return apply_create(s, tid, edge, cfa)
    if isinstance(op, Join):
        return apply_join(s, tid, edge)
    if isinstance(op, (Lock, Unlock, AtomicBegin, AtomicEnd)):
        return apply_lock_ops(s, tid, edge, diagnostics)
    return apply_plain(s, tid, edge, cfa)


def has_local_continuation(cfa: CfaSet, loc: Location, stack: tuple) -> bool:
    return cfa.has_local_out(loc) or (loc.is_exit and bool(stack))


def _with_local_lock(s: ThreadingState, tid: ThreadId, edge: CfaEdge, cfa: CfaSet) -> ThreadingState:
    """Hold ``__local__`` exactly while ``tid`` is inside a run of thread-local edges."""
    holder = s.holder(LOCAL_LOCK)
    entry = s.entry(tid)
    keep = (
        edge.scope is Scope.LOCAL
        and entry is not None
        and has_local_continuation(cfa, entry[0], entry[1])
    )
    if keep and holder is None:
        return s.with_lock(LOCAL_LOCK, tid)
    if not keep and holder == tid:
        return s.without_lock(LOCAL_LOCK)
    return s


def por_filter(s: ThreadingState, moves: list[EnabledMove]) -> list[EnabledMove]:
    """Drop the moves of every thread but the ``__local__`` holder, if any."""
    holder = s.holder(LOCAL_LOCK)
    if holder is None or s.entry(holder) is None:
        return moves
    return [m for m in moves if m.thread == holder]


def threading_transfer(s: ThreadingState, cfa: CfaSet, por: bool = False,
                       diagnostics: Optional[list] = None) -> list[EnabledMove]:
    """Enabled moves of all live threads, ordered by thread id then edge order.

    While a thread holds ``__atomic__`` no other thread moves.  With ``por``
    the ``__local__`` filter is applied and the successors' ``__local__``
    ownership is updated; without it the reserved lock is ignored.
    """
    atomic = s.holder(ATOMIC_LOCK)
    moves = []
    for tid, loc, stack in s.threads:
        if atomic is not None and atomic != tid and s.entry(atomic) is not None:
            continue
        for edge in _outgoing(cfa, loc, stack):
            succ = _successor(s, tid, edge, cfa, diagnostics)
            if succ is not None:
                moves.append(EnabledMove(tid, edge, succ))
    if not por:
        return moves
    moves = por_filter(s, moves)
    return [EnabledMove(m.thread, m.edge, _with_local_lock(m.successor, m.thread, m.edge, cfa))
            for m in moves]


def blocked_on_sync(s: ThreadingState, cfa: CfaSet) -> list[ThreadId]:
    """Threads whose location has an outgoing lock, atomic-begin or join edge."""
    return [tid for tid, loc, _ in s.threads
            if any(isinstance(e.op, (Lock, Join, AtomicBegin)) for e in cfa.out_edges(loc))]
