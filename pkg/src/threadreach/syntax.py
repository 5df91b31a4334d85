"""Abstract syntax, parser and unparser for ``.mtc`` programs.

The input language is a tiny C dialect: integer globals, mutexes, thread
handles, parameterless ``void`` functions and a handful of pthread-style
intrinsics (``create``, ``join``, ``lock``, ``unlock``, ``atomic_begin``,
``atomic_end``).  Expressions are linear integer arithmetic plus
``nondet()``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union


class FrontendError(Exception):
    """Base class of all diagnostics raised while reading a program."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.message = message
        self.line = line
        self.column = column
        super().__init__(f"{line}:{column}: {message}" if line else message)


class ParseError(FrontendError):
    pass


class DuplicateName(FrontendError):
    pass


class UnknownIdentifier(FrontendError):
    pass


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: int

    def __str__(self) -> str:
        return str(self.value) if self.value >= 0 else f"({self.value})"


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Nondet:
    def __str__(self) -> str:
        return "nondet()"


@dataclass(frozen=True)
class Unary:
    op: str  # "-" or "!"
    operand: "Expr"

    def __str__(self) -> str:
        return f"{self.op}{_wrap(self.operand)}"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"

    def __str__(self) -> str:
        return f"{_wrap(self.left)} {self.op} {_wrap(self.right)}"


Expr = Union[Const, Var, Nondet, Unary, Binary]

ARITHMETIC = ("+", "-", "*")
COMPARISONS = ("==", "!=", "<", "<=", ">", ">=")
LOGICAL = ("&&", "||")


def _wrap(e: Expr) -> str:
    return f"({e})" if isinstance(e, (Binary, Unary)) else str(e)


def variables(e: Expr) -> set[str]:
    """Names of all variables read by ``e``."""
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Unary):
        return variables(e.operand)
    if isinstance(e, Binary):
        return variables(e.left) | variables(e.right)
    return set()


def has_nondet(e: Expr) -> bool:
    if isinstance(e, Nondet):
        return True
    if isinstance(e, Unary):
        return has_nondet(e.operand)
    if isinstance(e, Binary):
        return has_nondet(e.left) or has_nondet(e.right)
    return False


def is_constant(e: Expr) -> bool:
    return not variables(e) and not has_nondet(e)


def rename(e: Expr, mapping) -> Expr:
    """Return ``e`` with every variable name passed through ``mapping``."""
    if isinstance(e, Var):
        return Var(mapping(e.name))
    if isinstance(e, Unary):
        return Unary(e.op, rename(e.operand, mapping))
    if isinstance(e, Binary):
        return Binary(e.op, rename(e.left, mapping), rename(e.right, mapping))
    return e


# ---------------------------------------------------------------------------
# Statements and declarations
# ---------------------------------------------------------------------------


def _pos():
    return field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class Assign:
    target: str
    value: Expr
    pos: tuple[int, int] = _pos()


@dataclass(frozen=True)
class If:
    cond: Expr
    then: tuple["Stmt", ...]
    orelse: Optional[tuple["Stmt", ...]] = None
    pos: tuple[int, int] = _pos()


@dataclass(frozen=True)
class While:
    cond: Expr
    body: tuple["Stmt", ...]
    pos: tuple[int, int] = _pos()


@dataclass(frozen=True)
class CreateStmt:
    thread: str
    function: str
    pos: tuple[int, int] = _pos()


@dataclass(frozen=True)
class JoinStmt:
    thread: str
    pos: tuple[int, int] = _pos()


@dataclass(frozen=True)
class LockStmt:
    mutex: str
    pos: tuple[int, int] = _pos()


@dataclass(frozen=True)
class UnlockStmt:
    mutex: str
    pos: tuple[int, int] = _pos()


@dataclass(frozen=True)
class AtomicBeginStmt:
    pos: tuple[int, int] = _pos()


@dataclass(frozen=True)
class AtomicEndStmt:
    pos: tuple[int, int] = _pos()


@dataclass(frozen=True)
class AssertStmt:
    cond: Expr
    pos: tuple[int, int] = _pos()


@dataclass(frozen=True)
class AssumeStmt:
    cond: Expr
    pos: tuple[int, int] = _pos()


@dataclass(frozen=True)
class LocalDecl:
    name: str
    init: Optional[Expr] = None
    pos: tuple[int, int] = _pos()


@dataclass(frozen=True)
class CallStmt:
    function: str
    pos: tuple[int, int] = _pos()


Stmt = Union[
    Assign, If, While, CreateStmt, JoinStmt, LockStmt, UnlockStmt,
    AtomicBeginStmt, AtomicEndStmt, AssertStmt, AssumeStmt, LocalDecl, CallStmt,
]


@dataclass(frozen=True)
class GlobalVar:
    name: str
    init: Optional[int] = None


@dataclass(frozen=True)
class Function:
    name: str
    body: tuple[Stmt, ...]
    params: tuple[str, ...] = ()
    pos: tuple[int, int] = _pos()


@dataclass(frozen=True)
class Program:
    globals: tuple[GlobalVar, ...]
    mutexes: tuple[str, ...]
    threads: tuple[str, ...]
    functions: tuple[Function, ...]

    def function(self, name: str) -> Function:
        for f in self.functions:
            if f.name == name:
                return f
        raise KeyError(name)

    @property
    def global_names(self) -> set[str]:
        return {g.name for g in self.globals}


# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------

KEYWORDS = {
    "int", "mutex", "thread", "void", "if", "else", "while", "create", "join",
    "lock", "unlock", "atomic_begin", "atomic_end", "assert", "assume",
    "local", "nondet",
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*|/\*.*?\*/)
  | (?P<int>\d+)
  | (?P<id>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>==|!=|<=|>=|&&|\|\||[-+*<>=!(){};,])
    """,
    re.VERBOSE | re.DOTALL,
)


@dataclass(frozen=True)
class Token:
    kind: str  # "int", "id", "kw", "op", "eof"
    text: str
    line: int
    column: int


def tokenize(source: str) -> list[Token]:
    tokens = []
    line, line_start, i = 1, 0, 0
    while i < len(source):
        m = _TOKEN_RE.match(source, i)
        if m is None:
            raise ParseError(f"unexpected character {source[i]!r}", line, i - line_start + 1)
        kind = m.lastgroup
        text = m.group()
        col = i - line_start + 1
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "comment":
            newlines = text.count("\n")
            if newlines:
                line += newlines
                line_start = i + text.rfind("\n") + 1
        elif kind == "id":
            tokens.append(Token("kw" if text in KEYWORDS else "id", text, line, col))
        elif kind != "ws":
            tokens.append(Token(kind, text, line, col))
        i = m.end()
    tokens.append(Token("eof", "", line, i - line_start + 1))
    return tokens


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


class _Parser:
    def __init__(self, source: str):
        self.tokens = tokenize(source)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def error(self, message: str, tok: Optional[Token] = None) -> ParseError:
        tok = tok or self.tok
        return ParseError(message, tok.line, tok.column)

    def at(self, text: str) -> bool:
        return self.tok.text == text and self.tok.kind in ("kw", "op")

    def next(self) -> Token:
        tok = self.tok
        self.i += 1
        return tok

    def expect(self, text: str) -> Token:
        if not self.at(text):
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")
        return self.next()

    def ident(self) -> Token:
        if self.tok.kind != "id":
            found = self.tok.text or "end of input"
            raise self.error(f"expected identifier, found {found!r}")
        tok = self.next()
        if "__" in tok.text:
            raise ParseError(f"identifier {tok.text!r}: '__' is reserved", tok.line, tok.column)
        return tok

    def integer(self) -> int:
        negative = False
        if self.at("-"):
            self.next()
            negative = True
        if self.tok.kind != "int":
            raise self.error("expected integer literal")
        value = int(self.next().text)
        return -value if negative else value

    # program := (gdecl)* (func)+
    def program(self) -> tuple[Program, dict]:
        globals_, mutexes, threads, functions = [], [], [], []
        positions = {}
        while self.at("int") or self.at("mutex") or self.at("thread"):
            kind = self.next().text
            name = self.ident()
            positions[name.text] = (name.line, name.column)
            if kind == "int":
                init = None
                if self.at("="):
                    self.next()
                    init = self.integer()
                globals_.append(GlobalVar(name.text, init))
            elif kind == "mutex":
                mutexes.append(name.text)
            else:
                threads.append(name.text)
            self.expect(";")
        while self.tok.kind != "eof":
            functions.append(self.function())
        if not functions:
            raise self.error("expected at least one function")
        return Program(tuple(globals_), tuple(mutexes), tuple(threads), tuple(functions)), positions

    def function(self) -> Function:
        self.expect("void")
        name = self.ident()
        self.expect("(")
        self.expect(")")
        body = self.block()
        return Function(name.text, body, (), (name.line, name.column))

    def block(self) -> tuple[Stmt, ...]:
        self.expect("{")
        stmts = []
        while not self.at("}"):
            if self.tok.kind == "eof":
                raise self.error("unterminated block")
            stmts.append(self.statement())
        self.expect("}")
        return tuple(stmts)

    def statement(self) -> Stmt:
        tok = self.tok
        pos = (tok.line, tok.column)
        if tok.kind == "id":
            name = self.ident().text
            if self.at("("):
                self.next()
                self.expect(")")
                self.expect(";")
                return CallStmt(name, pos)
            self.expect("=")
            value = self.expr()
            self.expect(";")
            return Assign(name, value, pos)
        if tok.kind != "kw":
            raise self.error(f"unexpected {tok.text or 'end of input'!r}")
        kw = self.next().text
        if kw == "if":
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            then = self.block()
            orelse = None
            if self.at("else"):
                self.next()
                orelse = self.block()
            return If(cond, then, orelse, pos)
        if kw == "while":
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            return While(cond, self.block(), pos)
        if kw == "create":
            self.expect("(")
            thread = self.ident().text
            self.expect(",")
            function = self.ident().text
            self.expect(")")
            self.expect(";")
            return CreateStmt(thread, function, pos)
        if kw in ("join", "lock", "unlock", "assert", "assume"):
            self.expect("(")
            if kw in ("assert", "assume"):
                arg = self.expr()
            else:
                arg = self.ident().text
            self.expect(")")
            self.expect(";")
            cls = {"join": JoinStmt, "lock": LockStmt, "unlock": UnlockStmt,
                   "assert": AssertStmt, "assume": AssumeStmt}[kw]
            return cls(arg, pos)
        if kw == "atomic_begin":
            self.expect(";")
            return AtomicBeginStmt(pos)
        if kw == "atomic_end":
            self.expect(";")
            return AtomicEndStmt(pos)
        if kw == "local":
            self.expect("int")
            name = self.ident().text
            init = None
            if self.at("="):
                self.next()
                init = self.expr()
            self.expect(";")
            return LocalDecl(name, init, pos)
        raise ParseError(f"unexpected keyword {kw!r}", *pos)

    # precedence climbing: || < && < equality < relational < additive < multiplicative < unary
    _LEVELS = (("||",), ("&&",), ("==", "!="), ("<", "<=", ">", ">="), ("+", "-"), ("*",))

    def expr(self, level: int = 0) -> Expr:
        if level == len(self._LEVELS):
            return self.unary()
        left = self.expr(level + 1)
        while self.tok.kind == "op" and self.tok.text in self._LEVELS[level]:
            tok = self.next()
            right = self.expr(level + 1)
            if tok.text == "*" and not (is_constant(left) or is_constant(right)):
                raise ParseError("non-linear multiplication", tok.line, tok.column)
            left = Binary(tok.text, left, right)
        return left

    def unary(self) -> Expr:
        if self.at("-") or self.at("!"):
            op = self.next().text
            operand = self.unary()
            if op == "-" and isinstance(operand, Const):
                return Const(-operand.value)
            return Unary(op, operand)
        return self.primary()

    def primary(self) -> Expr:
        tok = self.tok
        if tok.kind == "int":
            self.next()
            return Const(int(tok.text))
        if self.at("nondet"):
            self.next()
            self.expect("(")
            self.expect(")")
            return Nondet()
        if self.at("("):
            self.next()
            e = self.expr()
            self.expect(")")
            return e
        if tok.kind == "id":
            return Var(self.ident().text)
        raise self.error(f"unexpected {tok.text or 'end of input'!r} in expression")


def parse(source: str) -> Program:
    """Parse and check ``source``; raise a :class:`FrontendError` on bad input."""
    program, positions = _Parser(source).program()
    _check(program, positions)
    return program


# ---------------------------------------------------------------------------
# Name resolution
# ---------------------------------------------------------------------------


def _walk(stmts) -> Iterator[Stmt]:
    for s in stmts:
        yield s
        if isinstance(s, If):
            yield from _walk(s.then)
            if s.orelse:
                yield from _walk(s.orelse)
        elif isinstance(s, While):
            yield from _walk(s.body)


def walk(stmts) -> Iterator[Stmt]:
    """All statements of ``stmts``, nested blocks included, in source order."""
    return _walk(stmts)


def local_names(function: Function) -> list[str]:
    return [s.name for s in _walk(function.body) if isinstance(s, LocalDecl)]


def _check(program: Program, positions: dict) -> None:
    seen: dict[str, str] = {}
    for kind, names in (("int", [g.name for g in program.globals]),
                        ("mutex", program.mutexes), ("thread", program.threads)):
        for name in names:
            if name in seen:
                raise DuplicateName(f"duplicate global name {name!r}", *positions.get(name, (0, 0)))
            seen[name] = kind
    functions = {}
    for f in program.functions:
        if f.name in functions or f.name in seen:
            raise DuplicateName(f"duplicate name {f.name!r}", *f.pos)
        functions[f.name] = f
    if "main" not in functions:
        raise UnknownIdentifier("program has no function 'main'")

    ints = {g.name for g in program.globals}
    for f in program.functions:
        locals_: set[str] = set()
        for s in _walk(f.body):
            if isinstance(s, LocalDecl):
                if s.name in locals_ or s.name in seen or s.name in functions:
                    raise DuplicateName(f"duplicate name {s.name!r} in {f.name}", *s.pos)
                locals_.add(s.name)
        scope = ints | locals_

        def need(name, allowed, what, pos):
            if name not in allowed:
                raise UnknownIdentifier(f"unknown {what} {name!r}", *pos)

        for s in _walk(f.body):
            exprs = []
            if isinstance(s, Assign):
                need(s.target, scope, "variable", s.pos)
                exprs.append(s.value)
            elif isinstance(s, LocalDecl) and s.init is not None:
                exprs.append(s.init)
            elif isinstance(s, (If, While, AssertStmt, AssumeStmt)):
                exprs.append(s.cond)
            elif isinstance(s, CreateStmt):
                need(s.thread, set(program.threads), "thread variable", s.pos)
                need(s.function, functions, "function", s.pos)
            elif isinstance(s, JoinStmt):
                need(s.thread, set(program.threads), "thread variable", s.pos)
            elif isinstance(s, (LockStmt, UnlockStmt)):
                need(s.mutex, set(program.mutexes), "mutex", s.pos)
            elif isinstance(s, CallStmt):
                need(s.function, functions, "function", s.pos)
            for e in exprs:
                for name in sorted(variables(e)):
                    need(name, scope, "variable", s.pos)


# ---------------------------------------------------------------------------
# Unparser
# ---------------------------------------------------------------------------


def _unparse_block(stmts, indent: int) -> list[str]:
    pad = "    " * indent
    out = []
    for s in stmts:
        if isinstance(s, Assign):
            out.append(f"{pad}{s.target} = {s.value};")
        elif isinstance(s, If):
            out.append(f"{pad}if ({s.cond}) {{")
            out += _unparse_block(s.then, indent + 1)
            if s.orelse is not None:
                out.append(f"{pad}}} else {{")
                out += _unparse_block(s.orelse, indent + 1)
            out.append(f"{pad}}}")
        elif isinstance(s, While):
            out.append(f"{pad}while ({s.cond}) {{")
            out += _unparse_block(s.body, indent + 1)
            out.append(f"{pad}}}")
        elif isinstance(s, CreateStmt):
            out.append(f"{pad}create({s.thread}, {s.function});")
        elif isinstance(s, JoinStmt):
            out.append(f"{pad}join({s.thread});")
        elif isinstance(s, LockStmt):
            out.append(f"{pad}lock({s.mutex});")
        elif isinstance(s, UnlockStmt):
            out.append(f"{pad}unlock({s.mutex});")
        elif isinstance(s, AtomicBeginStmt):
            out.append(f"{pad}atomic_begin;")
        elif isinstance(s, AtomicEndStmt):
            out.append(f"{pad}atomic_end;")
        elif isinstance(s, AssertStmt):
            out.append(f"{pad}assert({s.cond});")
        elif isinstance(s, AssumeStmt):
            out.append(f"{pad}assume({s.cond});")
        elif isinstance(s, LocalDecl):
            init = "" if s.init is None else f" = {s.init}"
            out.append(f"{pad}local int {s.name}{init};")
        elif isinstance(s, CallStmt):
            out.append(f"{pad}{s.function}();")
        else:  # pragma: no cover
            raise TypeError(s)
    return out


def unparse(program: Program) -> str:
    lines = []
    for g in program.globals:
        lines.append(f"int {g.name};" if g.init is None else f"int {g.name} = {g.init};")
    lines += [f"mutex {m};" for m in program.mutexes]
    lines += [f"thread {t};" for t in program.threads]
    for f in program.functions:
        lines.append(f"void {f.name}() {{")
        lines += _unparse_block(f.body, 1)
        lines.append("}")
    return "\n".join(lines) + "\n"
