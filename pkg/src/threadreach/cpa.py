"""Configurable-program-analysis reachability over composite states.

The algorithm is the classic CPA worklist loop: pop a state, compute its
successors, try ``merge`` against the successor's partition, then ``stop``.
The reached set can be partitioned by the tuple of thread locations (plus
held locks) so that ``merge`` and ``stop`` only look at states that can
possibly be related.
"""

from __future__ import annotations

import enum
import heapq
import itertools
import time
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

from threadreach import properties
from threadreach.cfa import CfaEdge, CfaSet
from threadreach.domains import CompositeState, composite_transfer
from threadreach.errors import UnsupportedFeature
from threadreach.syntax import Program
from threadreach.threads import ThreadId, threading_initial


class Verdict(enum.Enum):
    SAFE = "SAFE"
    VIOLATION = "VIOLATION"
    DEADLOCK = "DEADLOCK"
    UNKNOWN = "UNKNOWN"


class WaitlistPolicy(enum.Enum):
    DFS = "dfs"
    BFS = "bfs"
    THREADS_DFS = "threads-dfs"
    THREADS_BFS = "threads-bfs"


class PropertySpec(enum.Enum):
    ERROR = "error"
    DEADLOCK = "deadlock"
    BOTH = "both"

    @property
    def errors(self) -> bool:
        return self is not PropertySpec.DEADLOCK

    @property
    def deadlocks(self) -> bool:
        return self is not PropertySpec.ERROR


@dataclass(frozen=True)
class ExplorationConfig:
    waitlist: WaitlistPolicy = WaitlistPolicy.THREADS_DFS
    partitioning: bool = True
    por: bool = True
    max_clones: int = 5
    stats_enabled: bool = True
    domain: str = "value"
    property: PropertySpec = PropertySpec.ERROR
    timeout: Optional[float] = None
    widening_threshold: int = 10
    # keep exploring after the first violation/deadlock (used by tests)
    stop_on_first: bool = True

    def name(self) -> str:
        return "-".join([
            self.domain,
            "por" if self.por else "nopor",
            "part" if self.partitioning else "nopart",
            self.waitlist.value,
        ])


@dataclass
class StatsRecord:
    popped: int = 0
    reached: int = 0
    comparisons: int = 0
    peak_reached: int = 0
    wall_ms: float = 0.0


class PartitionKey(NamedTuple):
    thread_locations: tuple
    locks: tuple


def partition_key(s: CompositeState) -> PartitionKey:
    t = s.threading
    return PartitionKey(
        tuple((tid, loc.id) for tid, loc, _ in t.threads),
        t.locks,
    )


# ---------------------------------------------------------------------------
# The CPA
# ---------------------------------------------------------------------------


class CompositeCPA:
    """Threading CPA × data domain with merge-sep/stop-sep (or merge-join for intervals)."""

    def __init__(self, program: Program, cfa: CfaSet, domain, por: bool = False,
                 prune_errors: bool = False):
        self.program = program
        self.cfa = cfa
        self.domain = domain
        self.por = por
        self.prune_errors = prune_errors
        self.diagnostics: list[str] = []

    @property
    def joins(self) -> bool:
        return self.domain.joins

    def initial(self) -> CompositeState:
        return CompositeState(threading_initial(self.cfa), self.domain.initial(self.program))

    def transfer(self, s: CompositeState) -> list[tuple[ThreadId, CfaEdge, CompositeState]]:
        return [
            (move.thread, move.edge, succ)
            for move, succ in composite_transfer(
                s, self.cfa, self.domain, self.por, self.diagnostics, self.prune_errors
            )
        ]

    def covers(self, candidate: CompositeState, s: CompositeState) -> bool:
        return candidate.threading == s.threading and self.domain.leq(s.data, candidate.data)

    def merge(self, new: CompositeState, old: CompositeState, visit_count: int) -> CompositeState:
        if not self.joins or new.threading != old.threading or self.domain.leq(new.data, old.data):
            return old
        return CompositeState(old.threading, self.domain.merge(new.data, old.data, visit_count))

    def stop(self, s: CompositeState, candidates) -> bool:
        return stop_sep(s, candidates, self.covers)


def merge_sep(s1, s2):
    """Never combines: the reached element ``s2`` is kept as is."""
    return s2


def stop_sep(s, candidates, covers=None) -> bool:
    """True iff some candidate covers ``s`` (equality unless ``covers`` is given)."""
    if covers is None:
        return any(c == s for c in candidates)
    return any(covers(c, s) for c in candidates)


# ---------------------------------------------------------------------------
# Reached set and waitlist
# ---------------------------------------------------------------------------


class ArgNode:
    __slots__ = ("id", "state", "parent", "thread", "edge", "key", "waiting", "_seq")

    def __init__(self, id, state, key, parent=None, thread=None, edge=None):
        self.id = id
        self.state = state
        self.key = key
        self.parent = parent
        self.thread = thread
        self.edge = edge
        self.waiting = False
        self._seq = 0

    def __repr__(self):
        return f"ArgNode({self.id}, {self.state!r})"


class Waitlist:
    def __init__(self, policy: WaitlistPolicy):
        self.policy = policy
        self._counter = itertools.count()
        if policy in (WaitlistPolicy.DFS, WaitlistPolicy.BFS):
            self._items = deque()
        else:
            self._items = []

    def __len__(self):
        return len(self._items)

    def add(self, node: ArgNode) -> None:
        node.waiting = True
        node._seq = next(self._counter)
        if self.policy in (WaitlistPolicy.DFS, WaitlistPolicy.BFS):
            self._items.append(node)
            return
        order = -node._seq if self.policy is WaitlistPolicy.THREADS_DFS else node._seq
        heapq.heappush(self._items, (node.state.threading.active_count, order, node))

    def pop(self) -> ArgNode:
        if self.policy is WaitlistPolicy.DFS:
            node = self._items.pop()
        elif self.policy is WaitlistPolicy.BFS:
            node = self._items.popleft()
        else:
            node = heapq.heappop(self._items)[2]
        node.waiting = False
        return node


class ReachedSet:
    def __init__(self, policy: WaitlistPolicy = WaitlistPolicy.BFS, partitioning: bool = True):
        self.partitioning = partitioning
        self.nodes: list[ArgNode] = []
        self.partitions: dict[PartitionKey, list[ArgNode]] = {}
        self.waitlist = Waitlist(policy)
        # (parent id, thread, edge, child id): tree edges of newly added states
        self.arg_edges: list[tuple[int, ThreadId, CfaEdge, int]] = []
        # transitions whose successor was covered by (or merged into) an existing state
        self.cover_edges: list[tuple[int, ThreadId, CfaEdge, int]] = []
        self.join_counts: dict[PartitionKey, int] = {}

    def __len__(self):
        return len(self.nodes)

    def candidates(self, key: PartitionKey) -> list[ArgNode]:
        if self.partitioning:
            return self.partitions.get(key, [])
        return self.nodes

    def add(self, state, key=None, parent: Optional[ArgNode] = None, thread=None, edge=None) -> ArgNode:
        key = key if key is not None else partition_key(state)
        node = ArgNode(len(self.nodes), state, key, parent, thread, edge)
        self.nodes.append(node)
        self.partitions.setdefault(key, []).append(node)
        if parent is not None:
            self.arg_edges.append((parent.id, thread, edge, node.id))
        self.waitlist.add(node)
        return node

    def states(self) -> set:
        return {n.state for n in self.nodes}

    def path_to(self, node: ArgNode) -> list[tuple[ThreadId, CfaEdge]]:
        path = []
        while node.parent is not None:
            path.append((node.thread, node.edge))
            node = node.parent
        return path[::-1]


def waitlist_pop(reached: ReachedSet, policy: Optional[WaitlistPolicy] = None) -> CompositeState:
    """Pop the next state; the policy is fixed when the reached set is built."""
    if policy is not None and policy is not reached.waitlist.policy:
        raise ValueError("waitlist policy differs from the reached set's")
    return reached.waitlist.pop().state


# ---------------------------------------------------------------------------
# Algorithm
# ---------------------------------------------------------------------------


@dataclass
class ReachResult:
    verdict: Verdict
    reached: ReachedSet
    stats: StatsRecord
    target: Optional[ArgNode] = None
    message: str = ""
    diagnostics: list = field(default_factory=list)
    targets: list = field(default_factory=list)

    @property
    def counterexample(self) -> Optional[list[tuple[ThreadId, CfaEdge]]]:
        if self.target is None:
            return None
        return self.reached.path_to(self.target)


class _Timeout(Exception):
    pass


def reach(cpa: CompositeCPA, config: ExplorationConfig) -> ReachResult:
    """Run the worklist algorithm; see the module docstring."""
    started = time.perf_counter()
    deadline = None if config.timeout is None else started + config.timeout
    reached = ReachedSet(config.waitlist, config.partitioning)
    stats = StatsRecord()
    result = ReachResult(Verdict.SAFE, reached, stats, diagnostics=cpa.diagnostics)
    check_errors = config.property.errors
    check_deadlocks = config.property.deadlocks

    def found(verdict: Verdict, node: ArgNode) -> bool:
        result.targets.append((verdict, node))
        if result.target is None:
            result.verdict, result.target = verdict, node
        return config.stop_on_first

    try:
        root = reached.add(cpa.initial())
        if check_errors and properties.check_error(root.state):
            found(Verdict.VIOLATION, root)
            if config.stop_on_first:
                raise StopIteration
        while len(reached.waitlist):
            if deadline is not None and stats.popped % 64 == 0 and time.perf_counter() > deadline:
                raise _Timeout
            node = reached.waitlist.pop()
            stats.popped += 1
            state = node.state
            if check_deadlocks and properties.check_deadlock_state(state.threading, cpa.cfa):
                if found(Verdict.DEADLOCK, node):
                    break
            stop_now = False
            for thread, edge, succ in cpa.transfer(state):
                key = partition_key(succ)
                candidates = reached.candidates(key)
                if cpa.joins:
                    succ_covered_by = None
                    for other in candidates:
                        stats.comparisons += 1
                        if other.key != key:
                            continue
                        count = reached.join_counts.get(key, 0)
                        merged = cpa.merge(succ, other.state, count + 1)
                        if merged is not other.state and merged != other.state:
                            reached.join_counts[key] = count + 1
                            other.state = merged
                            reached.cover_edges.append((node.id, thread, edge, other.id))
                            succ_covered_by = other
                            if not other.waiting:
                                reached.waitlist.add(other)
                    if succ_covered_by is not None:
                        continue
                covering = None
                for other in candidates:
                    stats.comparisons += 1
                    if cpa.covers(other.state, succ):
                        covering = other
                        break
                if covering is not None:
                    reached.cover_edges.append((node.id, thread, edge, covering.id))
                    continue
                child = reached.add(succ, key, node, thread, edge)
                stats.peak_reached = max(stats.peak_reached, len(reached))
                if check_errors and properties.check_error(succ):
                    if found(Verdict.VIOLATION, child):
                        stop_now = True
                        break
            if stop_now:
                break
    except StopIteration:
        pass
    except _Timeout:
        result.verdict = Verdict.UNKNOWN
        result.target = None
        result.message = f"timeout after {config.timeout} s"
    except UnsupportedFeature as exc:
        result.verdict = Verdict.UNKNOWN
        result.target = None
        result.message = str(exc)
    stats.reached = len(reached)
    stats.peak_reached = max(stats.peak_reached, len(reached))
    stats.wall_ms = (time.perf_counter() - started) * 1000.0
    return result
