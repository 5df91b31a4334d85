from __future__ import annotations

import pytest

from threadreach.arg import analyze
from threadreach.bench import expected_verdict
from threadreach.cpa import ExplorationConfig, PropertySpec, WaitlistPolicy
from threadreach.oracle import OracleBoundExceeded, OracleUnsupported, run_oracle

from conftest import FIB, FIB7, TASKS, TASK_IDS, is_loop_free, source

LOOP_FREE = [t for t in TASKS if is_loop_free(t)]


def test_fib_oracle():
    r = run_oracle(FIB)
    assert r.verdict == "SAFE"
    assert r.max_observed["j"] == 8


def test_fib7_oracle():
    r = run_oracle(FIB7)
    assert r.verdict == "VIOLATION" and r.max_observed["j"] == 8


def test_crosslock_oracle():
    assert run_oracle(source("crosslock")).verdict == "DEADLOCK"


@pytest.mark.parametrize("body, n", [
    ("local int a = 1; local int b = a + 1;", 2),
    ("local int a = 1; a = a + 1; a = a * 2; assume(a > 0);", 4),
])
def test_straight_line_state_count(body, n):
    r = run_oracle(f"void main(){{ {body} }}")
    assert r.state_count == n + 1


def test_declarations_count_as_statements():
    # ``int x;`` is one edge of main
    r = run_oracle("int x; void main(){ x = 1; x = 2; }")
    assert r.state_count == 3 + 1


def test_bound_exceeded():
    with pytest.raises(OracleBoundExceeded):
        run_oracle(source("counter_loop"), step_bound=30)


def test_truncated_run_is_incomplete():
    r = run_oracle(source("counter_loop"), step_bound=30, truncate=True)
    assert not r.complete and r.verdict == "SAFE"


def test_nondet_value_set():
    src = "int x; void main(){ x = nondet(); assert(x != 7); }"
    assert run_oracle(src).verdict == "SAFE"
    assert run_oracle(src, values=(0, 7)).verdict == "VIOLATION"


def test_reused_thread_variable_unsupported():
    src = "thread a; void w(){ } void main(){ create(a, w); create(a, w); }"
    with pytest.raises(OracleUnsupported):
        run_oracle(src)


@pytest.mark.parametrize("task", TASKS, ids=TASK_IDS)
def test_oracle_matches_expect_files(task):
    r = run_oracle(task.read_text(), step_bound=200, truncate=True)
    assert r.verdict == expected_verdict(task)
    # a task is either violating, deadlocking, or neither
    assert not (r.error_reachable and r.deadlock_reachable)


CONFIGS = [
    ExplorationConfig(waitlist=w, partitioning=p, por=r, property=PropertySpec.BOTH)
    for r in (True, False) for p in (True, False) for w in WaitlistPolicy
]


@pytest.mark.parametrize("task", LOOP_FREE, ids=[t.stem for t in LOOP_FREE])
def test_differential_all_configs(task):
    truth = run_oracle(task.read_text()).verdict
    for config in CONFIGS:
        # the unpartitioned stress runs are quadratic; their reached sets are
        # checked equal to the partitioned ones in the acceptance suite
        if task.stem == "stress" and not config.partitioning:
            continue
        verdict = analyze(task.read_text(), config)[1].verdict.value
        assert verdict == truth, config.name()
