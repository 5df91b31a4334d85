from __future__ import annotations

import itertools

import pytest

from threadreach.arg import analyze, prepare
from threadreach.cfa import build_cfa
from threadreach.cpa import (
    ExplorationConfig, PropertySpec, ReachedSet, Verdict, WaitlistPolicy, merge_sep,
    partition_key, stop_sep, waitlist_pop,
)
from threadreach.domains import CompositeState, ValueState
from threadreach.syntax import parse
from threadreach.threads import MAIN, ThreadId, ThreadingState

from conftest import FIB, FIB7, TASK_IDS, run_cached, source

SMALL = [t for t in TASK_IDS if t != "stress"]


def test_merge_sep():
    a, b = object(), object()
    assert merge_sep(a, b) is b
    assert merge_sep(b, a) is a
    assert merge_sep(a, a) is a


def _fib_states():
    cfa = build_cfa(parse(FIB), 1)
    locs = {l.id: l for l in cfa.locations()}
    id1, id2 = ThreadId("id1", 1, "t1"), ThreadId("id2", 1, "t2")
    t = ThreadingState([(MAIN, locs["main:4"], ()), (id1, locs["t1__1:1"], ()),
                        (id2, locs["t2__1:1"], ())])
    return cfa, t


def test_stop_sep():
    _, t = _fib_states()
    s = CompositeState(t, ValueState({"i": 1}))
    assert stop_sep(s, [CompositeState(t, ValueState({"i": 1}))])
    assert not stop_sep(s, [])
    unknown = CompositeState(t, ValueState({}))
    assert not stop_sep(s, [unknown])
    cpa = prepare(FIB, ExplorationConfig()).cpa
    assert stop_sep(s, [unknown], cpa.covers)


def test_partition_key():
    _, t = _fib_states()
    key = partition_key(CompositeState(t, ValueState({"i": 1})))
    names = [(tid.name, loc) for tid, loc in key.thread_locations]
    assert names == [("id1", "t1__1:1"), ("id2", "t2__1:1"), ("main", "main:4")]
    assert key.locks == ()
    locked = partition_key(CompositeState(t.with_lock("m", MAIN), ValueState({"i": 1})))
    assert locked != key
    assert partition_key(CompositeState(t, ValueState({"i": 7}))) == key


def _threads(n):
    cfa = build_cfa(parse(FIB), 1)
    locs = sorted(cfa.locations())
    return ThreadingState([(ThreadId(f"t{k}", 1, "t1"), locs[k], ()) for k in range(n)])


@pytest.mark.parametrize("policy, expected", [
    (WaitlistPolicy.DFS, "c"),
    (WaitlistPolicy.BFS, "a"),
    (WaitlistPolicy.THREADS_BFS, "b"),
    (WaitlistPolicy.THREADS_DFS, "b"),
])
def test_waitlist_pop(policy, expected):
    reached = ReachedSet(policy)
    states = {"a": _threads(2), "b": _threads(1), "c": _threads(3)}
    for name in "abc":
        reached.add(CompositeState(states[name], name))
    assert waitlist_pop(reached, policy).data == expected


def test_threads_first_tie_break():
    for policy, expected in [(WaitlistPolicy.THREADS_BFS, "a"), (WaitlistPolicy.THREADS_DFS, "c")]:
        reached = ReachedSet(policy)
        for name in "abc":
            reached.add(CompositeState(_threads(2), name))
        assert waitlist_pop(reached).data == expected


def test_reach_examples():
    assert analyze(FIB, ExplorationConfig())[1].verdict is Verdict.SAFE
    assert analyze(FIB7, ExplorationConfig())[1].verdict is Verdict.VIOLATION
    _, res = analyze(FIB, ExplorationConfig(domain="none", por=False, waitlist=WaitlistPolicy.BFS,
                                            property=PropertySpec.DEADLOCK))
    assert res.stats.reached == 20


def test_unknown_on_clone_exhaustion():
    res = analyze(source("three_workers"), ExplorationConfig(max_clones=2))[1]
    assert res.verdict is Verdict.UNKNOWN
    assert "insufficient number of threads" in res.message


def test_unknown_on_overflow():
    src = "int x = 1; void main(){ while (1) { x = x + x; } }"
    res = analyze(src, ExplorationConfig())[1]
    assert res.verdict is Verdict.UNKNOWN and "overflow" in res.message


def test_timeout_gives_unknown():
    res = analyze(source("stress"), ExplorationConfig(partitioning=False, por=False, timeout=0.2))[1]
    assert res.verdict is Verdict.UNKNOWN and "timeout" in res.message


def _full(**kw):
    return ExplorationConfig(property=PropertySpec.BOTH, stop_on_first=False, **kw)


@pytest.mark.parametrize("name", SMALL)
def test_soundness_fixpoint(name):
    analysis, res = run_cached(name, _full())
    states = [n.state for n in res.reached.nodes]
    for s in states:
        for _, _, succ in analysis.cpa.transfer(s):
            assert analysis.cpa.stop(succ, states)


@pytest.mark.parametrize("name", SMALL)
def test_partitioning_transparent(name):
    for por in (True, False):
        on = run_cached(name, _full(por=por, partitioning=True))[1]
        off = run_cached(name, _full(por=por, partitioning=False))[1]
        assert on.reached.states() == off.reached.states()
        assert on.stats.comparisons <= off.stats.comparisons


@pytest.mark.parametrize("name", SMALL)
def test_arg_acyclic(name):
    res = run_cached(name, _full())[1]
    children = {}
    for parent, _, _, child in res.reached.arg_edges:
        assert parent < child  # children are always created after their parent
        children.setdefault(parent, []).append(child)
    assert len(res.reached.arg_edges) == len(res.reached) - 1


@pytest.mark.parametrize("name", TASK_IDS)
def test_verdict_invariant_across_policies(name):
    verdicts = {
        run_cached(name, ExplorationConfig(waitlist=w, property=PropertySpec.BOTH))[1].verdict
        for w in WaitlistPolicy
    }
    assert len(verdicts) == 1


def test_waitlist_elements_in_reached():
    _, res = analyze(FIB, ExplorationConfig(timeout=None))
    assert len(res.reached.waitlist) == 0
    reached = ReachedSet(WaitlistPolicy.BFS)
    node = reached.add(CompositeState(_threads(1), None))
    assert node in reached.partitions[node.key]


def test_config_names_unique():
    names = {
        ExplorationConfig(waitlist=w, partitioning=p, por=r).name()
        for w, p, r in itertools.product(WaitlistPolicy, (True, False), (True, False))
    }
    assert len(names) == 16


def test_por_reduces_popped_states_with_local_work():
    # calls_in_threads has thread-local runs while two workers are live
    src = source("calls_in_threads")
    on = analyze(src, ExplorationConfig(por=True))[1]
    off = analyze(src, ExplorationConfig(por=False))[1]
    assert on.verdict == off.verdict
    assert on.stats.popped < off.stats.popped
