"""Interpreter for the sandbox's tiny pure expression language.

Source files hold one definition per line::

    fn clamp(x, lo, hi) = if x < lo then lo else if x > hi then hi else x

Test files hold one assertion per line::

    assert clamp(5, 0, 3) == 3

Values are integers. Comparisons yield 1 or 0, ``if`` treats nonzero as
true, ``/`` truncates toward zero and division by zero is a runtime error.
``#`` starts a comment.
"""

from __future__ import annotations

import fnmatch
import re
from dataclasses import dataclass
from typing import Iterable, Optional, Union

MAX_CALL_DEPTH = 200

_TOKEN_RE = re.compile(r"\s*(?:(\d+)|([A-Za-z_][A-Za-z0-9_]*)|(==|!=|<=|>=|[-+*/()<>,=]))")
KEYWORDS = {"fn", "if", "then", "else", "assert"}


class MicroSyntaxError(Exception):
    def __init__(self, message: str, file: str = "<input>", line: int = 0):
        super().__init__(f"{file}:{line}: {message}")
        self.file = file
        self.line = line
        self.message = message


class MicroRuntimeError(Exception):
    pass


@dataclass(frozen=True)
class Token:
    kind: str  # int | name | op | kw
    text: str
    start: int
    end: int


def tokenize(src: str) -> list[Token]:
    tokens = []
    pos = 0
    n = len(src)
    while pos < n:
        if src[pos:].strip() == "":
            break
        m = _TOKEN_RE.match(src, pos)
        if not m:
            raise MicroSyntaxError(f"unexpected character {src[pos:].lstrip()[:1]!r}")
        if m.group(1):
            tokens.append(Token("int", m.group(1), m.start(1), m.end(1)))
        elif m.group(2):
            word = m.group(2)
            tokens.append(Token("kw" if word in KEYWORDS else "name", word, m.start(2), m.end(2)))
        else:
            tokens.append(Token("op", m.group(3), m.start(3), m.end(3)))
        pos = m.end()
    return tokens


# AST nodes are tuples: ("int", v) ("var", name) ("neg", e) ("bin", op, l, r)
# ("if", c, t, e) ("call", name, [args])
Node = tuple


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.i = 0

    def peek(self) -> Optional[Token]:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def take(self, text: Optional[str] = None, kind: Optional[str] = None) -> Token:
        tok = self.peek()
        if tok is None:
            raise MicroSyntaxError(f"unexpected end of input, expected {text or kind}")
        if (text is not None and tok.text != text) or (kind is not None and tok.kind != kind):
            raise MicroSyntaxError(f"expected {text or kind}, found {tok.text!r}")
        self.i += 1
        return tok

    def at(self, *texts: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.text in texts and tok.kind in ("op", "kw")

    def expr(self) -> Node:
        if self.at("if"):
            self.take("if")
            cond = self.expr()
            self.take("then")
            then = self.expr()
            self.take("else")
            other = self.expr()
            return ("if", cond, then, other)
        return self.comparison()

    def comparison(self) -> Node:
        left = self.additive()
        if self.at("==", "!=", "<", "<=", ">", ">="):
            op = self.take().text
            right = self.additive()
            return ("bin", op, left, right)
        return left

    def additive(self) -> Node:
        node = self.term()
        while self.at("+", "-"):
            op = self.take().text
            node = ("bin", op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.at("*", "/"):
            op = self.take().text
            node = ("bin", op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self.at("-"):
            self.take("-")
            return ("neg", self.unary())
        return self.primary()

    def primary(self) -> Node:
        tok = self.peek()
        if tok is None:
            raise MicroSyntaxError("unexpected end of input")
        if tok.kind == "int":
            self.i += 1
            return ("int", int(tok.text))
        if tok.kind == "name":
            self.i += 1
            if self.at("("):
                self.take("(")
                args = []
                if not self.at(")"):
                    args.append(self.expr())
                    while self.at(","):
                        self.take(",")
                        args.append(self.expr())
                self.take(")")
                return ("call", tok.text, args)
            return ("var", tok.text)
        if self.at("("):
            self.take("(")
            node = self.expr()
            self.take(")")
            return node
        raise MicroSyntaxError(f"unexpected token {tok.text!r}")

    def done(self) -> None:
        tok = self.peek()
        if tok is not None:
            raise MicroSyntaxError(f"trailing input at {tok.text!r}")


@dataclass(frozen=True)
class Function:
    name: str
    params: tuple[str, ...]
    body: Node
    file: str
    line: int


@dataclass(frozen=True)
class TestCase:
    name: str
    call: Node
    expected: int
    file: str
    line: int


def _strip_comment(line: str) -> str:
    return line.split("#", 1)[0]


def parse_function(line: str) -> tuple[str, tuple[str, ...], Node]:
    p = _Parser(tokenize(line))
    p.take("fn")
    name = p.take(kind="name").text
    p.take("(")
    params = []
    if not p.at(")"):
        params.append(p.take(kind="name").text)
        while p.at(","):
            p.take(",")
            params.append(p.take(kind="name").text)
    p.take(")")
    p.take("=")
    body = p.expr()
    p.done()
    if len(set(params)) != len(params):
        raise MicroSyntaxError("duplicate parameter")
    return name, tuple(params), body


def parse_source(text: str, file: str = "<source>") -> dict[str, Function]:
    functions: dict[str, Function] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line.strip():
            continue
        try:
            name, params, body = parse_function(line)
        except MicroSyntaxError as exc:
            raise MicroSyntaxError(exc.message, file, lineno) from None
        if name in functions:
            raise MicroSyntaxError(f"duplicate function {name!r}", file, lineno)
        functions[name] = Function(name, params, body, file, lineno)
    return functions


def parse_tests(text: str, file: str = "<tests>") -> list[TestCase]:
    """Test names are ``test_<fn>_<k>`` with ``k`` counting per function."""
    cases = []
    counts: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line.strip():
            continue
        try:
            p = _Parser(tokenize(line))
            p.take("assert")
            call = p.primary()
            if call[0] != "call":
                raise MicroSyntaxError("assert needs a function call")
            p.take("==")
            expected = p.unary()
            p.done()
            value = _literal_value(expected)
        except MicroSyntaxError as exc:
            raise MicroSyntaxError(exc.message, file, lineno) from None
        counts[call[1]] = counts.get(call[1], 0) + 1
        cases.append(TestCase(f"test_{call[1]}_{counts[call[1]]}", call, value, file, lineno))
    return cases


def _literal_value(node: Node) -> int:
    if node[0] == "int":
        return node[1]
    if node[0] == "neg" and node[1][0] == "int":
        return -node[1][1]
    raise MicroSyntaxError("expected an integer literal")


def _div(a: int, b: int) -> int:
    if b == 0:
        raise MicroRuntimeError("division by zero")
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def evaluate(node: Node, env: dict[str, int], functions: dict[str, Function], depth: int = 0) -> int:
    tag = node[0]
    if tag == "int":
        return node[1]
    if tag == "var":
        if node[1] not in env:
            raise MicroRuntimeError(f"unbound name {node[1]!r}")
        return env[node[1]]
    if tag == "neg":
        return -evaluate(node[1], env, functions, depth)
    if tag == "if":
        cond = evaluate(node[1], env, functions, depth)
        return evaluate(node[2] if cond != 0 else node[3], env, functions, depth)
    if tag == "bin":
        op = node[1]
        a = evaluate(node[2], env, functions, depth)
        b = evaluate(node[3], env, functions, depth)
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            return _div(a, b)
        return int({"==": a == b, "!=": a != b, "<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[op])
    if tag == "call":
        fn = functions.get(node[1])
        if fn is None:
            raise MicroRuntimeError(f"unknown function {node[1]!r}")
        if len(node[2]) != len(fn.params):
            raise MicroRuntimeError(f"{fn.name} expects {len(fn.params)} arguments")
        if depth >= MAX_CALL_DEPTH:
            raise MicroRuntimeError("call depth exceeded")
        args = [evaluate(a, env, functions, depth) for a in node[2]]
        return evaluate(fn.body, dict(zip(fn.params, args)), functions, depth + 1)
    raise MicroRuntimeError(f"bad node {tag!r}")


@dataclass(frozen=True)
class TestFailure:
    name: str
    expected: int
    got: Union[int, str]


@dataclass(frozen=True)
class TestReport:
    total: int
    passed: int
    failed: int
    failures: tuple[TestFailure, ...]

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "passed": self.passed,
            "failed": self.failed,
            "failures": [{"name": f.name, "expected": f.expected, "got": f.got} for f in self.failures],
        }


def run_suite(
    sources: dict[str, str], test_files: dict[str, str], selector: str = "*"
) -> TestReport:
    """Run every test whose name matches the glob ``selector``.

    Raises:
        MicroSyntaxError: a source or test file does not parse.
    """
    functions: dict[str, Function] = {}
    for path in sorted(sources):
        for name, fn in parse_source(sources[path], path).items():
            if name in functions:
                raise MicroSyntaxError(f"duplicate function {name!r}", path, fn.line)
            functions[name] = fn
    cases: list[TestCase] = []
    for path in sorted(test_files):
        cases.extend(parse_tests(test_files[path], path))
    selected = [c for c in cases if fnmatch.fnmatchcase(c.name, selector)]
    failures = []
    for case in selected:
        try:
            got: Union[int, str] = evaluate(case.call, {}, functions)
        except MicroRuntimeError as exc:
            got = f"error: {exc}"
        if got != case.expected:
            failures.append(TestFailure(case.name, case.expected, got))
    return TestReport(len(selected), len(selected) - len(failures), len(failures), tuple(failures))


def mutation_sites(line: str) -> Iterable[tuple[int, int, str]]:
    """Single-token mutations of a definition line as ``(start, end, replacement)``.

    Operators are swapped for a related operator and integer literals are
    nudged by one. Tokens before ``=`` (the signature) are left alone.
    """
    swaps = {
        "+": ("-",), "-": ("+",), "*": ("+",), "/": ("*",),
        "<": ("<=", ">"), ">": (">=", "<"), "<=": ("<",), ">=": (">",),
        "==": ("!=",), "!=": ("==",),
    }
    tokens = tokenize(line)
    body_start = next(i for i, t in enumerate(tokens) if t.text == "=") + 1
    for tok in tokens[body_start:]:
        if tok.kind == "op" and tok.text in swaps:
            for repl in swaps[tok.text]:
                yield tok.start, tok.end, repl
        elif tok.kind == "int":
            value = int(tok.text)
            yield tok.start, tok.end, str(value + 1)
            if value > 0:
                yield tok.start, tok.end, str(value - 1)
