"""Control-flow automata: data model, lowering from the AST, cloning, and
thread-local/global edge classification."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Union

from threadreach import syntax
from threadreach.syntax import Expr, Program

CLONE_SEPARATOR = "__"
DEFAULT_MAX_CLONES = 5


class Scope(enum.Enum):
    LOCAL = "local"
    GLOBAL = "global"


@dataclass(frozen=True, eq=False)
class Location:
    """A program location; identity is the ``id`` string."""

    id: str
    function: str
    label: str
    is_error: bool = False
    is_exit: bool = False

    def __eq__(self, other):
        return isinstance(other, Location) and self.id == other.id

    def __hash__(self):
        return hash(self.id)

    def __lt__(self, other):
        return self.id < other.id

    def __repr__(self):
        return f"Location({self.id})"

    @property
    def base_function(self) -> str:
        return base_name(self.function)

    @property
    def base_id(self) -> str:
        """Location id with any clone suffix removed."""
        return f"{self.base_function}:{self.label}"


def base_name(function: str) -> str:
    return function.split(CLONE_SEPARATOR, 1)[0]


def clone_name(function: str, k: int) -> str:
    return f"{function}{CLONE_SEPARATOR}{k}"


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Assign:
    var: str
    expr: Expr

    def __str__(self):
        return f"{self.var} = {self.expr}"


@dataclass(frozen=True)
class Assume:
    expr: Expr
    positive: bool = True

    def __str__(self):
        return f"[{self.expr}]" if self.positive else f"[!({self.expr})]"


@dataclass(frozen=True)
class Create:
    thread_var: str
    function: str

    def __str__(self):
        return f"create({self.thread_var}, {self.function})"


@dataclass(frozen=True)
class Join:
    thread_var: str

    def __str__(self):
        return f"join({self.thread_var})"


@dataclass(frozen=True)
class Lock:
    mutex: str

    def __str__(self):
        return f"lock({self.mutex})"


@dataclass(frozen=True)
class Unlock:
    mutex: str

    def __str__(self):
        return f"unlock({self.mutex})"


@dataclass(frozen=True)
class AtomicBegin:
    def __str__(self):
        return "atomic_begin"


@dataclass(frozen=True)
class AtomicEnd:
    def __str__(self):
        return "atomic_end"


@dataclass(frozen=True)
class CallPush:
    callee: str

    def __str__(self):
        return f"{self.callee}()"


@dataclass(frozen=True)
class ReturnPop:
    def __str__(self):
        return "return"


@dataclass(frozen=True)
class Skip:
    text: str = ""

    def __str__(self):
        return self.text or "skip"


Operation = Union[Assign, Assume, Create, Join, Lock, Unlock, AtomicBegin, AtomicEnd,
                  CallPush, ReturnPop, Skip]

THREAD_MANAGEMENT = (Create, Join, Lock, Unlock, AtomicBegin, AtomicEnd)


def reads(op: Operation) -> set[str]:
    if isinstance(op, (Assign, Assume)):
        return syntax.variables(op.expr)
    return set()


def writes(op: Operation) -> set[str]:
    return {op.var} if isinstance(op, Assign) else set()


def rename_op(op: Operation, var_map, fn_map) -> Operation:
    if isinstance(op, Assign):
        return Assign(var_map(op.var), syntax.rename(op.expr, var_map))
    if isinstance(op, Assume):
        return Assume(syntax.rename(op.expr, var_map), op.positive)
    if isinstance(op, CallPush):
        return CallPush(fn_map(op.callee))
    return op


@dataclass(frozen=True)
class CfaEdge:
    source: Location
    target: Location
    op: Operation
    scope: Optional[Scope] = None

    def __str__(self):
        return f"{self.source.id} -[{self.op}]-> {self.target.id}"


@dataclass
class FunctionCfa:
    name: str
    entry: Location
    exit: Location
    edges: tuple[CfaEdge, ...]

    @property
    def locations(self) -> list[Location]:
        seen = {self.entry.id: self.entry, self.exit.id: self.exit}
        for e in self.edges:
            seen.setdefault(e.source.id, e.source)
            seen.setdefault(e.target.id, e.target)
        return list(seen.values())


@dataclass
class CfaSet:
    functions: dict[str, FunctionCfa]
    clone_index: dict[str, list[str]] = field(default_factory=dict)
    max_clones: int = 0
    globals: frozenset = frozenset()
    _out: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        out: dict[Location, list[CfaEdge]] = {}
        for f in self.functions.values():
            for e in f.edges:
                out.setdefault(e.source, []).append(e)
        self._out = {loc: tuple(edges) for loc, edges in out.items()}
        self._local_out = {
            loc: any(e.scope is Scope.LOCAL for e in edges) for loc, edges in self._out.items()
        }

    @property
    def main(self) -> FunctionCfa:
        return self.functions["main"]

    @property
    def main_entry(self) -> Location:
        return self.main.entry

    def out_edges(self, loc: Location) -> tuple[CfaEdge, ...]:
        return self._out.get(loc, ())

    def has_local_out(self, loc: Location) -> bool:
        return self._local_out.get(loc, False)

    def edges(self) -> Iterable[CfaEdge]:
        for f in self.functions.values():
            yield from f.edges

    def locations(self) -> list[Location]:
        return [loc for f in self.functions.values() for loc in f.locations]

    def clone_for(self, function: str, k: int) -> FunctionCfa:
        return self.functions[clone_name(function, k)]

    def family(self, function: str) -> frozenset:
        """Base names of ``function`` and every function it calls, transitively."""
        cache = self.__dict__.setdefault("_families", {})
        if function not in cache:
            cache[function] = self._family(function)
        return cache[function]

    def _family(self, function: str) -> frozenset:
        seen = {function}
        todo = [function]
        while todo:
            f = self.functions[todo.pop()]
            for e in f.edges:
                if isinstance(e.op, CallPush):
                    callee = base_name(e.op.callee)
                    if callee not in seen:
                        seen.add(callee)
                        todo.append(callee)
        return frozenset(seen)


# ---------------------------------------------------------------------------
# Lowering
# ---------------------------------------------------------------------------


class RecursionNotSupported(syntax.FrontendError):
    pass


class _FunctionLowering:
    def __init__(self, program: Program, function: syntax.Function):
        self.fn = function.name
        self.ints = program.global_names
        self.locals = set(syntax.local_names(function))
        self.edges: list[CfaEdge] = []
        self.count = 0
        self.errors = 0

    def new_location(self) -> Location:
        loc = Location(f"{self.fn}:{self.count}", self.fn, str(self.count))
        self.count += 1
        return loc

    def new_error(self) -> Location:
        self.errors += 1
        label = f"E{self.errors}"
        return Location(f"{self.fn}:{label}", self.fn, label, is_error=True)

    def qualify(self, e: Expr) -> Expr:
        return syntax.rename(e, self.qualify_name)

    def qualify_name(self, name: str) -> str:
        return f"{self.fn}::{name}" if name in self.locals else name

    def edge(self, source, target, op) -> None:
        self.edges.append(CfaEdge(source, target, op))

    def block(self, stmts, cur: Location) -> Location:
        for s in stmts:
            cur = self.statement(s, cur)
        return cur

    def statement(self, s, cur: Location) -> Location:
        if isinstance(s, syntax.If):
            cond = self.qualify(s.cond)
            then_start = self.new_location()
            self.edge(cur, then_start, Assume(cond, True))
            then_end = self.block(s.then, then_start)
            if s.orelse is not None:
                else_start = self.new_location()
                self.edge(cur, else_start, Assume(cond, False))
                else_end = self.block(s.orelse, else_start)
                join = self.new_location()
                self.edge(then_end, join, Skip("endif"))
                self.edge(else_end, join, Skip("endif"))
            else:
                join = self.new_location()
                self.edge(then_end, join, Skip("endif"))
                self.edge(cur, join, Assume(cond, False))
            return join
        if isinstance(s, syntax.While):
            cond = self.qualify(s.cond)
            body_start = self.new_location()
            self.edge(cur, body_start, Assume(cond, True))
            body_end = self.block(s.body, body_start)
            self.edge(body_end, cur, Skip("loop"))
            after = self.new_location()
            self.edge(cur, after, Assume(cond, False))
            return after
        if isinstance(s, syntax.AssertStmt):
            cond = self.qualify(s.cond)
            nxt = self.new_location()
            self.edge(cur, nxt, Assume(cond, True))
            self.edge(cur, self.new_error(), Assume(cond, False))
            return nxt
        nxt = self.new_location()
        self.edge(cur, nxt, self.simple_op(s))
        return nxt

    def simple_op(self, s) -> Operation:
        if isinstance(s, syntax.Assign):
            return Assign(self.qualify_name(s.target), self.qualify(s.value))
        if isinstance(s, syntax.LocalDecl):
            value = syntax.Nondet() if s.init is None else self.qualify(s.init)
            return Assign(self.qualify_name(s.name), value)
        if isinstance(s, syntax.AssumeStmt):
            return Assume(self.qualify(s.cond), True)
        if isinstance(s, syntax.CreateStmt):
            return Create(s.thread, s.function)
        if isinstance(s, syntax.JoinStmt):
            return Join(s.thread)
        if isinstance(s, syntax.LockStmt):
            return Lock(s.mutex)
        if isinstance(s, syntax.UnlockStmt):
            return Unlock(s.mutex)
        if isinstance(s, syntax.AtomicBeginStmt):
            return AtomicBegin()
        if isinstance(s, syntax.AtomicEndStmt):
            return AtomicEnd()
        if isinstance(s, syntax.CallStmt):
            return CallPush(s.function)
        raise TypeError(f"unsupported statement {s!r}")  # pragma: no cover


def _declaration_ops(program: Program) -> list[Skip]:
    ops = []
    if program.threads:
        ops.append(Skip("thread " + ", ".join(program.threads)))
    if program.mutexes:
        ops.append(Skip("mutex " + ", ".join(program.mutexes)))
    if program.globals:
        decls = [g.name if g.init is None else f"{g.name} = {g.init}" for g in program.globals]
        ops.append(Skip("int " + ", ".join(decls)))
    return ops


def _check_recursion(program: Program) -> None:
    calls = {f.name: {s.function for s in syntax.walk(f.body) if isinstance(s, syntax.CallStmt)}
             for f in program.functions}
    state: dict[str, int] = {}

    def visit(name, path):
        if state.get(name) == 1:
            raise RecursionNotSupported("recursive call cycle: " + " -> ".join(path + [name]))
        if state.get(name) == 2:
            return
        state[name] = 1
        for callee in sorted(calls[name]):
            visit(callee, path + [name])
        state[name] = 2

    for name in sorted(calls):
        visit(name, [])


def lower_to_cfa(program: Program) -> CfaSet:
    """One CFA per function; each statement contributes a constant number of edges.

    ``main`` starts with one declaration edge per kind of global declaration
    (threads, mutexes, integers); integer initial values are part of the
    initial data state rather than of these edges.
    """
    _check_recursion(program)
    functions = {}
    for f in program.functions:
        low = _FunctionLowering(program, f)
        entry = low.new_location()
        cur = entry
        if f.name == "main":
            for op in _declaration_ops(program):
                nxt = low.new_location()
                low.edge(cur, nxt, op)
                cur = nxt
        if not f.body and cur == entry:
            nxt = low.new_location()
            low.edge(cur, nxt, Skip())
            cur = nxt
        else:
            cur = low.block(f.body, cur)
        exit_ = replace(cur, is_exit=True)
        edges = [_retarget(e, cur, exit_) for e in low.edges]
        entry = exit_ if entry == exit_ else entry
        functions[f.name] = FunctionCfa(f.name, entry, exit_, tuple(edges))
    return CfaSet(functions, globals=frozenset(program.global_names))


def _retarget(edge: CfaEdge, old: Location, new: Location) -> CfaEdge:
    if edge.source == old or edge.target == old:
        return replace(edge,
                       source=new if edge.source == old else edge.source,
                       target=new if edge.target == old else edge.target)
    return edge


# ---------------------------------------------------------------------------
# Cloning
# ---------------------------------------------------------------------------


def start_routines(cfa: CfaSet) -> set[str]:
    return {base_name(e.op.function) for e in cfa.edges() if isinstance(e.op, Create)}


def clone_functions(cfa: CfaSet, max_clones: int) -> CfaSet:
    """Add ``max_clones`` renamed copies of every function a thread can execute.

    A function qualifies when it is a thread start routine or is called,
    transitively, from one.  Inside clone ``k`` every ``f::x`` becomes
    ``f__k::x`` and calls go to ``g__k``.
    """
    if max_clones < 1:
        raise ValueError("max_clones must be positive")
    bases = {name: f for name, f in cfa.functions.items() if CLONE_SEPARATOR not in name}
    family: set[str] = set()
    for start in start_routines(CfaSet(bases)):
        family |= CfaSet(bases).family(start)

    functions = dict(bases)
    clone_index = {}
    for name in sorted(family):
        clone_index[name] = []
        for k in range(1, max_clones + 1):
            cname = clone_name(name, k)
            functions[cname] = _clone(bases[name], cname, k)
            clone_index[name].append(cname)
    return CfaSet(functions, clone_index, max_clones, cfa.globals)


def _clone(f: FunctionCfa, cname: str, k: int) -> FunctionCfa:
    def loc(l: Location) -> Location:
        return Location(f"{cname}:{l.label}", cname, l.label, l.is_error, l.is_exit)

    def var_map(name: str) -> str:
        if "::" in name:
            owner, local = name.split("::", 1)
            return f"{clone_name(owner, k)}::{local}"
        return name

    edges = tuple(
        CfaEdge(loc(e.source), loc(e.target), rename_op(e.op, var_map, lambda g: clone_name(g, k)),
                e.scope)
        for e in f.edges
    )
    return FunctionCfa(cname, loc(f.entry), loc(f.exit), edges)


# ---------------------------------------------------------------------------
# Classification
# ---------------------------------------------------------------------------


def edge_scope(edge: CfaEdge, global_vars: set[str]) -> Scope:
    op = edge.op
    if isinstance(op, THREAD_MANAGEMENT) or edge.target.is_error:
        return Scope.GLOBAL
    if (reads(op) | writes(op)) & global_vars:
        return Scope.GLOBAL
    return Scope.LOCAL


def classify_edges(cfa: CfaSet, program: Optional[Program] = None) -> CfaSet:
    """Tag every edge as thread-local or global; see :func:`edge_scope`."""
    global_vars = program.global_names if program is not None else set(cfa.globals)
    functions = {
        name: replace(f, edges=tuple(replace(e, scope=edge_scope(e, global_vars)) for e in f.edges))
        for name, f in cfa.functions.items()
    }
    return CfaSet(functions, cfa.clone_index, cfa.max_clones, frozenset(global_vars))


def build_cfa(program: Program, max_clones: int = DEFAULT_MAX_CLONES) -> CfaSet:
    return classify_edges(clone_functions(lower_to_cfa(program), max_clones), program)


# ---------------------------------------------------------------------------
# DOT
# ---------------------------------------------------------------------------


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def cfa_to_dot(cfa: CfaSet) -> str:
    lines = ["digraph cfa {", "  node [shape=circle];"]
    for name in sorted(cfa.functions):
        f = cfa.functions[name]
        lines.append(f'  subgraph "cluster_{name}" {{')
        lines.append(f'    label="{_dot_escape(name)}";')
        for loc in sorted(f.locations):
            shape = ' shape=doublecircle' if loc.is_exit else (' color=red' if loc.is_error else "")
            lines.append(f'    "{loc.id}" [label="{loc.label}"{shape}];')
        lines.append("  }")
        for e in sorted(f.edges, key=lambda e: (e.source.id, e.target.id, str(e.op))):
            style = ' style=dashed' if e.scope is Scope.LOCAL else ""
            lines.append(f'  "{e.source.id}" -> "{e.target.id}" [label="{_dot_escape(str(e.op))}"{style}];')
    lines.append("}")
    return "\n".join(lines) + "\n"
