from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from threadreach import syntax
from threadreach.cfa import (
    Assign, Assume, CallPush, Create, Join, Lock, Scope, Skip, build_cfa, cfa_to_dot,
    classify_edges, clone_functions, edge_scope, lower_to_cfa,
)
from threadreach.cfa import RecursionNotSupported
from threadreach.syntax import (
    Binary, Const, DuplicateName, ParseError, UnknownIdentifier, Var, parse, unparse,
)

from conftest import FIB, TASKS, TASK_IDS


def test_minimal_program():
    p = parse("int i=1; void main(){ i = i + 1; }")
    assert [g.name for g in p.globals] == ["i"]
    assert p.globals[0].init == 1
    assert len(p.functions) == 1
    assert p.function("main").body == (syntax.Assign("i", Binary("+", Var("i"), Const(1))),)


def test_example_program_shape():
    p = parse(FIB)
    assert [g.name for g in p.globals] == ["i", "j"]
    assert p.threads == ("id1", "id2")
    assert sorted(f.name for f in p.functions) == ["main", "t1", "t2"]


def test_unknown_identifier_has_position():
    with pytest.raises(UnknownIdentifier) as exc:
        parse("void main(){\n  x = 1;\n}")
    assert exc.value.line == 2


@pytest.mark.parametrize("src", [
    "int a; int a; void main(){}",
    "mutex m; int m; void main(){}",
    "void main(){} void main(){}",
])
def test_duplicate_names(src):
    with pytest.raises(DuplicateName):
        parse(src)


@pytest.mark.parametrize("src", [
    "int x; void main(){ x = ; }",
    "void main(){ x = 1 }",
    "int x; void main(){ x = x * x; }",  # not linear
    "int a__b; void main(){}",  # reserved clone separator
    "void f(){}",  # no main
    "void main(){ @ }",
])
def test_syntax_errors(src):
    with pytest.raises((ParseError, UnknownIdentifier)):
        parse(src)


def test_parse_error_reports_column():
    with pytest.raises(ParseError) as exc:
        parse("void main(){ assert(1 ; }")
    assert (exc.value.line, exc.value.column) == (1, 23)


def test_comments_are_ignored():
    p = parse("/* a\n b */ int x; // trailing\nvoid main(){ x = 2; }")
    assert p.globals[0].name == "x"


@pytest.mark.parametrize("task", TASKS, ids=TASK_IDS)
def test_corpus_round_trip(task):
    p = parse(task.read_text())
    assert parse(unparse(p)) == p


# --- generated programs --------------------------------------------------

GLOBALS = ("g0", "g1", "g2")
LOCALS = ("v",)


def _exprs(names):
    leaf = st.one_of(
        st.integers(-50, 50).map(Const),
        st.sampled_from(names).map(Var),
        st.just(syntax.Nondet()),
    )

    def extend(sub):
        arith = st.tuples(st.sampled_from(["+", "-"] + list(syntax.COMPARISONS) + ["&&", "||"]), sub, sub)
        scaled = st.tuples(sub, st.integers(-4, 4).map(Const)).map(lambda t: Binary("*", t[0], t[1]))
        return st.one_of(
            arith.map(lambda t: Binary(*t)),
            scaled,
            sub.filter(lambda e: not isinstance(e, Const)).map(lambda e: syntax.Unary("-", e)),
            sub.map(lambda e: syntax.Unary("!", e)),
        )

    return st.recursive(leaf, extend, max_leaves=6)


def _stmts(names, calls=True):
    e = _exprs(names)
    simple = st.one_of(
        st.tuples(st.sampled_from(names), e).map(lambda t: syntax.Assign(*t)),
        e.map(syntax.AssertStmt),
        e.map(syntax.AssumeStmt),
        st.just(syntax.LockStmt("m")),
        st.just(syntax.UnlockStmt("m")),
        st.just(syntax.AtomicBeginStmt()),
        st.just(syntax.AtomicEndStmt()),
    )
    if calls:
        simple = simple | st.just(syntax.CallStmt("helper"))

    def extend(sub):
        block = st.lists(sub, max_size=3).map(tuple)
        return st.one_of(
            st.tuples(e, block, st.none() | block).map(lambda t: syntax.If(*t)),
            st.tuples(e, block).map(lambda t: syntax.While(*t)),
        )

    return st.lists(st.recursive(simple, extend, max_leaves=5), max_size=5).map(tuple)


@st.composite
def programs(draw):
    inits = draw(st.lists(st.none() | st.integers(-9, 9), min_size=3, max_size=3))
    globals_ = tuple(syntax.GlobalVar(n, i) for n, i in zip(GLOBALS, inits))
    worker_body = (syntax.LocalDecl("v", draw(st.none() | _exprs(GLOBALS))),)
    worker_body += draw(_stmts(GLOBALS + LOCALS))
    main_body = (syntax.CreateStmt("t", "worker"),) + draw(_stmts(GLOBALS)) + (syntax.JoinStmt("t"),)
    functions = (
        syntax.Function("helper", draw(_stmts(GLOBALS, calls=False))),
        syntax.Function("worker", worker_body),
        syntax.Function("main", main_body),
    )
    return syntax.Program(globals_, ("m",), ("t",), functions)


@settings(max_examples=100, deadline=None)
@given(programs())
def test_round_trip_generated(program):
    text = unparse(program)
    assert parse(text) == program


@settings(max_examples=60, deadline=None)
@given(programs())
def test_generated_cfa_wellformed(program):
    cfa = build_cfa(program, 2)
    for loc in cfa.locations():
        if not (loc.is_error or loc.is_exit):
            assert cfa.out_edges(loc), loc
    # Assume pairs leaving the same branch node are complementary.
    for loc in cfa.locations():
        assumes = [e.op for e in cfa.out_edges(loc) if isinstance(e.op, Assume)]
        if len(assumes) == 2:
            a, b = assumes
            assert a.expr == b.expr and a.positive != b.positive


# --- lowering ------------------------------------------------------------


def test_example_main_is_chain_of_eight_locations():
    cfa = lower_to_cfa(parse(FIB))
    main = cfa.functions["main"]
    normal = [l for l in main.locations if not l.is_error]
    assert sorted(int(l.label) for l in normal) == list(range(8))
    ops = [e.op for e in sorted(main.edges, key=lambda e: e.source.label) if not e.target.is_error]
    kinds = [type(o).__name__ for o in ops]
    assert kinds == ["Skip", "Skip", "Create", "Create", "Join", "Join", "Assume"]
    assert main.entry.label == "0" and main.exit.label == "7"


def test_example_t1_is_chain_abc():
    cfa = lower_to_cfa(parse(FIB))
    t1 = cfa.functions["t1"]
    assert len(t1.locations) == 3
    assert [str(e.op) for e in t1.edges] == ["i = i + j", "i = i + j"]
    assert t1.exit.is_exit


def test_empty_body_single_skip():
    cfa = lower_to_cfa(parse("void main(){}"))
    main = cfa.functions["main"]
    assert len(main.edges) == 1 and isinstance(main.edges[0].op, Skip)
    assert main.edges[0].source == main.entry and main.edges[0].target == main.exit


def test_assert_lowering():
    cfa = lower_to_cfa(parse("int x; void main(){ assert(x < 3); }"))
    edges = cfa.functions["main"].edges
    asserts = [e for e in edges if isinstance(e.op, Assume)]
    assert {(e.op.positive, e.target.is_error) for e in asserts} == {(True, False), (False, True)}


def test_if_and_while_lowering():
    src = "int x; void main(){ if (x > 0) { x = 1; } else { x = 2; } while (x < 5) { x = x + 1; } }"
    edges = lower_to_cfa(parse(src)).functions["main"].edges
    assert sum(isinstance(e.op, Assume) for e in edges) == 4
    assert sum(isinstance(e.op, Skip) and e.op.text == "loop" for e in edges) == 1


def test_uninitialised_local_is_nondet():
    cfa = lower_to_cfa(parse("void main(){ local int k; }"))
    op = cfa.functions["main"].edges[0].op
    assert isinstance(op, Assign) and op.var == "main::k" and isinstance(op.expr, syntax.Nondet)


def test_recursion_rejected():
    with pytest.raises(RecursionNotSupported):
        lower_to_cfa(parse("void f(){ g(); } void g(){ f(); } void main(){ f(); }"))


# --- cloning ---------------------------------------------------------------


def test_example_one_clone():
    cfa = clone_functions(lower_to_cfa(parse(FIB)), 1)
    assert set(cfa.functions) == {"main", "t1", "t2", "t1__1", "t2__1"}
    assert cfa.clone_index == {"t1": ["t1__1"], "t2": ["t2__1"]}


WORKER2 = """
thread a; thread b;
void worker(){ local int tmp = 1; tmp = tmp + 1; }
void main(){ create(a, worker); create(b, worker); join(a); join(b); }
"""


def test_two_clones_disjoint():
    cfa = clone_functions(lower_to_cfa(parse(WORKER2)), 2)
    w1 = {l.id for l in cfa.functions["worker__1"].locations}
    w2 = {l.id for l in cfa.functions["worker__2"].locations}
    assert w1 and w2 and not (w1 & w2)


def test_clone_locals_distinct():
    cfa = clone_functions(lower_to_cfa(parse(WORKER2)), 2)
    v1 = cfa.functions["worker__1"].edges[0].op.var
    v2 = cfa.functions["worker__2"].edges[0].op.var
    assert (v1, v2) == ("worker__1::tmp", "worker__2::tmp")


def test_calls_stay_in_family():
    src = "thread a; void h(){} void w(){ h(); } void main(){ create(a, w); join(a); }"
    cfa = clone_functions(lower_to_cfa(parse(src)), 3)
    for k in (1, 2, 3):
        calls = [e.op for e in cfa.functions[f"w__{k}"].edges if isinstance(e.op, CallPush)]
        assert [c.callee for c in calls] == [f"h__{k}"]
    assert "main__1" not in cfa.functions


def _shape(cfa):
    return sorted((name, sorted(str(e) for e in f.edges)) for name, f in cfa.functions.items())


def test_cloning_idempotent():
    once = clone_functions(lower_to_cfa(parse(WORKER2)), 2)
    twice = clone_functions(once, 2)
    assert _shape(once) == _shape(twice)


# --- classification ----------------------------------------------------------


def test_classification_examples():
    src = """
int g; thread t;
void w(){ local int k = 0; k = k + 1; g = k; assert(k < 5); }
void main(){ create(t, w); join(t); }
"""
    cfa = build_cfa(parse(src), 1)
    by_op = {(str(e.op), e.target.is_error): e.scope for e in cfa.functions["w__1"].edges}
    assert by_op[("w__1::k = 0", False)] is Scope.LOCAL
    assert by_op[("w__1::k = w__1::k + 1", False)] is Scope.LOCAL
    assert by_op[("g = w__1::k", False)] is Scope.GLOBAL
    assert by_op[("[!(w__1::k < 5)]", True)] is Scope.GLOBAL
    assert by_op[("[w__1::k < 5]", False)] is Scope.LOCAL


def test_fib_edges_global():
    cfa = build_cfa(parse(FIB), 1)
    for e in cfa.functions["t1__1"].edges:
        assert e.scope is Scope.GLOBAL
    for e in cfa.edges():
        if isinstance(e.op, (Create, Join, Lock)):
            assert e.scope is Scope.GLOBAL


@settings(max_examples=100, deadline=None)
@given(_exprs(("main::a", "main::b")), st.sampled_from(GLOBALS))
def test_classification_monotone(expr, extra):
    from threadreach.cfa import CfaEdge, Location
    src, dst = Location("f:0", "f", "0"), Location("f:1", "f", "1")
    before = edge_scope(CfaEdge(src, dst, Assign("main::a", expr)), set(GLOBALS))
    widened = Binary("+", expr, Var(extra))
    after = edge_scope(CfaEdge(src, dst, Assign("main::a", widened)), set(GLOBALS))
    assert after is Scope.GLOBAL
    if before is Scope.GLOBAL:
        assert after is Scope.GLOBAL


def test_classify_requires_no_program():
    cfa = classify_edges(clone_functions(lower_to_cfa(parse(FIB)), 1))
    assert all(e.scope is not None for e in cfa.edges())


def test_cfa_dot_deterministic():
    a = cfa_to_dot(build_cfa(parse(FIB), 2))
    b = cfa_to_dot(build_cfa(parse(FIB), 2))
    assert a == b and a.startswith("digraph cfa")
