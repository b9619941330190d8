"""Concrete syntax: tokenizer, recursive-descent parser and canonical printer.

Program text is a sequence of definitions::

    def Buyer(x: mu X. X + 1) = unfold x. (x.add. Buyer(x) (+) x.pay. close x)
    main def Main(y: 1) = new (x: mu X. X + 1) (Buyer(x) | Seller(x, y))

Continuation binders may be omitted when they coincide with the subject
channel (``x.in1. P`` is ``x.in1(x). P``; ``recv x (y). P`` receives ``(y, x)``).
Labels other than ``in1``/``in2`` are resolved through the ``case`` constructs
of the program: the first-listed branch label is ``in1``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from . import formulas as F
from .process import (
    Call, Case, Choice, Close, Corec, Cut, Definition, Fail, Fork, Join, Link,
    Process, Program, Rec, Select, Span, Wait, subprocesses,
)

KEYWORDS = {
    "def", "main", "link", "fail", "close", "wait", "send", "recv", "case",
    "unfold", "rec", "new", "mu", "nu", "top", "bot", "par",
}

_TOKEN = re.compile(r"""
    (?P<ws>\s+|--[^\n]*)
  | (?P<choice>\(\+\))
  | (?P<ident>[^\W\d]\w*'*)
  | (?P<num>\d+)
  | (?P<sym>[(){},;:.|=+&*])
""", re.VERBOSE)


class ParseError(Exception):
    def __init__(self, message: str, span: Span | None = None, path: str | None = None):
        self.message = message
        self.span = span
        self.path = path
        where = f"{path or '<input>'}:{span}: " if span else ""
        super().__init__(f"{where}{message}")


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    span: Span


def tokenize(text: str) -> list[Token]:
    out: list[Token] = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", Span(line, pos - line_start + 1))
        kind = m.lastgroup
        tok = m.group()
        span = Span(line, pos - line_start + 1)
        if kind != "ws":
            if kind == "ident" and tok in KEYWORDS:
                kind = "kw"
            out.append(Token(kind, tok, span))
        newlines = tok.count("\n")
        if newlines:
            line += newlines
            line_start = pos + tok.rindex("\n") + 1
        pos = m.end()
    out.append(Token("eof", "", Span(line, pos - line_start + 1)))
    return out


@dataclass
class SourceProgram:
    path: str | None
    text: str
    program: Program
    locations: dict = field(default_factory=dict)

    def location(self, node) -> Span | None:
        return self.locations.get(id(node))


class _Parser:
    def __init__(self, text: str, path: str | None = None):
        self.toks = tokenize(text)
        self.i = 0
        self.path = path
        self.labels: dict[str, int] = {"in1": 1, "in2": 2, "inl": 1, "inr": 2}
        self.pending_selects: list[tuple[str, Span]] = []

    # -- token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg: str, tok: Token | None = None) -> ParseError:
        tok = tok or self.tok
        return ParseError(msg, tok.span, self.path)

    def at(self, text: str) -> bool:
        return self.tok.text == text and self.tok.kind in ("sym", "kw", "choice")

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        if not self.at(text):
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")
        t = self.tok
        self.i += 1
        return t

    def ident(self, what: str = "name") -> str:
        if self.tok.kind != "ident":
            found = self.tok.text or "end of input"
            raise self.error(f"expected {what}, found {found!r}")
        t = self.tok
        self.i += 1
        return t.text

    # -- formulas
    def formula(self) -> F.Formula:
        if self.at("mu") or self.at("nu"):
            cls = F.Mu if self.tok.text == "mu" else F.Nu
            self.i += 1
            var = self.ident("type variable")
            self.expect(".")
            return cls(var, self.formula())
        return self.additive()

    def additive(self) -> F.Formula:
        left = self.multiplicative()
        while self.at("+") or self.at("&"):
            cls = F.Plus if self.tok.text == "+" else F.With
            self.i += 1
            left = cls(left, self.multiplicative_or_binder())
        return left

    def multiplicative_or_binder(self) -> F.Formula:
        if self.at("mu") or self.at("nu"):
            return self.formula()
        return self.multiplicative()

    def multiplicative(self) -> F.Formula:
        left = self.atom()
        while self.at("*") or self.at("par"):
            cls = F.Tensor if self.tok.text == "*" else F.Par
            self.i += 1
            right = self.formula() if (self.at("mu") or self.at("nu")) else self.atom()
            left = cls(left, right)
        return left

    def atom(self) -> F.Formula:
        t = self.tok
        if t.kind == "num" and t.text in ("0", "1"):
            self.i += 1
            return F.Zero() if t.text == "0" else F.One()
        if self.accept("top"):
            return F.Top()
        if self.accept("bot"):
            return F.Bot()
        if t.kind == "ident":
            self.i += 1
            return F.Var(t.text)
        if self.accept("("):
            f = self.formula()
            self.expect(")")
            return f
        raise self.error(f"expected a formula, found {t.text or 'end of input'!r}")

    # -- processes
    def process(self) -> Process:
        start = self.tok.span
        left = self.prefix()
        while self.at("(+)"):
            self.i += 1
            right = self.prefix()
            left = Choice(left, right, loc=start)
        return left

    def cont(self, subject: str) -> str:
        """Optional ``(y)`` continuation binder; defaults to the subject."""
        if self.at("(") and self.peek().kind == "ident" and self.peek(2).text == ")":
            self.i += 1
            y = self.ident()
            self.expect(")")
            return y
        return subject

    def pair_binders(self, subject: str) -> tuple[str, str]:
        self.expect("(")
        y = self.ident()
        z = subject
        if self.accept(","):
            z = self.ident()
        self.expect(")")
        if y == z:
            raise self.error(f"binders of a pair must be distinct (both are {y!r})")
        return y, z

    def prefix(self) -> Process:
        t = self.tok
        loc = t.span
        if self.accept("link"):
            x = self.ident()
            y = self.ident()
            return Link(x, y, loc=loc)
        if self.accept("fail"):
            return Fail(self.ident(), loc=loc)
        if self.accept("close"):
            return Close(self.ident(), loc=loc)
        if self.accept("wait"):
            x = self.ident()
            self.expect(".")
            return Wait(x, self.prefix(), loc=loc)
        if self.accept("send"):
            x = self.ident()
            y, z = self.pair_binders(x)
            self.expect("(")
            left = self.process()
            self.expect("|")
            right = self.process()
            self.expect(")")
            return Fork(x, y, z, left, right, loc=loc)
        if self.accept("recv"):
            x = self.ident()
            y, z = self.pair_binders(x)
            self.expect(".")
            return Join(x, y, z, self.prefix(), loc=loc)
        if self.accept("case"):
            x = self.ident()
            y = self.cont(x)
            self.expect("{")
            l1, left = self.branch()
            self.expect(";")
            l2, right = self.branch()
            self.accept(";")
            self.expect("}")
            self.bind_labels(l1, l2, t)
            return Case(x, y, left, right, loc=loc)
        if self.at("unfold") or self.at("rec"):
            cls = Rec if t.text == "unfold" else Corec
            self.i += 1
            x = self.ident()
            y = self.cont(x)
            self.expect(".")
            return cls(x, y, self.prefix(), loc=loc)
        if self.accept("new"):
            self.expect("(")
            x = self.ident()
            self.expect(":")
            ann = self.formula()
            self.expect(")")
            self.expect("(")
            left = self.process()
            self.expect("|")
            right = self.process()
            self.expect(")")
            return Cut(x, ann, left, right, loc=loc)
        if self.accept("("):
            p = self.process()
            self.expect(")")
            return p
        if t.kind == "ident":
            name = self.ident()
            if self.at("("):
                self.i += 1
                args: list[str] = []
                if not self.at(")"):
                    args.append(self.ident())
                    while self.accept(","):
                        args.append(self.ident())
                self.expect(")")
                return Call(name, tuple(args), loc=loc)
            if self.accept("."):
                lt = self.tok
                label = lt.text
                if lt.kind != "ident":
                    raise self.error("expected a label after '.'")
                self.i += 1
                y = self.cont(name)
                self.expect(".")
                body = self.prefix()
                self.pending_selects.append((label, lt.span))
                return Select(name, label, y, body, loc=loc)
            raise self.error(f"expected '(' or '.' after {name!r}")
        raise self.error(f"expected a process, found {t.text or 'end of input'!r}")

    def branch(self) -> tuple[str, Process]:
        lt = self.tok
        if lt.kind != "ident":
            raise self.error("expected a branch label")
        self.i += 1
        self.expect(":")
        return lt.text, self.process()

    def bind_labels(self, l1: str, l2: str, tok: Token) -> None:
        if l1 == l2:
            raise self.error(f"case branches share the label {l1!r}", tok)
        for label, idx in ((l1, 1), (l2, 2)):
            known = self.labels.get(label)
            if known is not None and known != idx:
                raise self.error(f"label {label!r} used as both in1 and in2", tok)
            self.labels[label] = idx

    # -- definitions
    def definition(self) -> tuple[Definition, bool]:
        is_main = self.accept("main")
        loc = self.tok.span
        self.expect("def")
        name = self.ident("definition name")
        self.expect("(")
        params: list[tuple[str, F.Formula]] = []
        if not self.at(")"):
            while True:
                ptok = self.tok
                x = self.ident("parameter")
                self.expect(":")
                f = self.formula()
                if f.free_vars:
                    raise self.error(f"parameter type of {x} is not closed", ptok)
                if any(x == p for p, _ in params):
                    raise self.error(f"duplicate parameter {x!r}", ptok)
                params.append((x, f))
                if not self.accept(","):
                    break
        self.expect(")")
        self.expect("=")
        body = self.process()
        return Definition(name, tuple(params), body, loc=loc), is_main

    def program(self) -> Program:
        defs: dict[str, Definition] = {}
        main = None
        while self.tok.kind != "eof":
            start = self.tok
            d, is_main = self.definition()
            if d.name in defs:
                raise self.error(f"duplicate definition {d.name!r}", start)
            if is_main:
                if main is not None:
                    raise self.error("more than one main definition", start)
                main = d.name
            defs[d.name] = d
        for label, span in self.pending_selects:
            if label not in self.labels:
                raise ParseError(f"unknown label {label!r} (not listed by any case)", span, self.path)
        defs = {n: _resolve_labels(d, self.labels) for n, d in defs.items()}
        return Program(defs, main)


def _resolve_labels(d: Definition, labels: dict[str, int]) -> Definition:
    def go(p: Process) -> Process:
        match p:
            case Select(x, tag, y, body):
                return Select(x, labels[tag] if isinstance(tag, str) else tag, y, go(body), loc=p.loc)
            case Wait(x, body):
                return Wait(x, go(body), loc=p.loc)
            case Join(x, y, z, body):
                return Join(x, y, z, go(body), loc=p.loc)
            case Rec(x, y, body):
                return Rec(x, y, go(body), loc=p.loc)
            case Corec(x, y, body):
                return Corec(x, y, go(body), loc=p.loc)
            case Fork(x, y, z, l, r):
                return Fork(x, y, z, go(l), go(r), loc=p.loc)
            case Case(x, y, l, r):
                return Case(x, y, go(l), go(r), loc=p.loc)
            case Cut(x, ann, l, r):
                return Cut(x, ann, go(l), go(r), loc=p.loc)
            case Choice(l, r):
                return Choice(go(l), go(r), loc=p.loc)
        return p
    return Definition(d.name, d.params, go(d.body), loc=d.loc)


def parse_program(text: str, path: str | None = None) -> SourceProgram:
    prog = _Parser(text, path).program()
    locations = {}
    for d in prog.definitions.values():
        locations[id(d)] = d.loc
        for p in subprocesses(d.body):
            locations[id(p)] = p.loc
    return SourceProgram(path, text, prog, locations)


def parse_process(text: str) -> Process:
    p = _Parser(text)
    proc = p.process()
    if p.tok.kind != "eof":
        raise p.error(f"unexpected {p.tok.text!r}")
    for label, span in p.pending_selects:
        if label not in p.labels:
            raise ParseError(f"unknown label {label!r}", span)
    return _resolve_labels(Definition("_", (), proc), p.labels).body


def parse_formula(text: str) -> F.Formula:
    p = _Parser(text)
    f = p.formula()
    if p.tok.kind != "eof":
        raise p.error(f"unexpected {p.tok.text!r}")
    return f


# ----------------------------------------------------------------- printing


def print_process(p: Process) -> str:
    def cont(x: str, y: str) -> str:
        return "" if x == y else f"({y})"

    def atom(p: Process) -> str:
        s = go(p)
        return f"({s})" if isinstance(p, Choice) else s

    def go(p: Process) -> str:
        match p:
            case Link(x, y):
                return f"link {x} {y}"
            case Fail(x):
                return f"fail {x}"
            case Close(x):
                return f"close {x}"
            case Wait(x, body):
                return f"wait {x}. {atom(body)}"
            case Join(x, y, z, body):
                zs = "" if z == x else f", {z}"
                return f"recv {x} ({y}{zs}). {atom(body)}"
            case Fork(x, y, z, left, right):
                zs = "" if z == x else f", {z}"
                return f"send {x} ({y}{zs}) ({go(left)} | {go(right)})"
            case Select(x, tag, y, body):
                return f"{x}.in{tag}{cont(x, y)}. {atom(body)}"
            case Case(x, y, left, right):
                return f"case {x}{' ' + cont(x, y) if x != y else ''} {{ in1: {go(left)}; in2: {go(right)} }}"
            case Rec(x, y, body):
                return f"unfold {x}{' ' + cont(x, y) if x != y else ''}. {atom(body)}"
            case Corec(x, y, body):
                return f"rec {x}{' ' + cont(x, y) if x != y else ''}. {atom(body)}"
            case Cut(x, ann, left, right):
                return f"new ({x}: {ann}) ({go(left)} | {go(right)})"
            case Choice(left, right):
                return f"{atom(left)} (+) {atom(right)}"
            case Call(name, args):
                return f"{name}({', '.join(args)})"
        raise TypeError(f"not a process: {p!r}")

    return go(p)


def print_definition(d: Definition, main: bool = False) -> str:
    params = ", ".join(f"{x}: {f}" for x, f in d.params)
    return f"{'main ' if main else ''}def {d.name}({params}) = {print_process(d.body)}"


def print_program(prog: Program) -> str:
    return "\n".join(print_definition(d, d.name == prog.main) for d in prog.definitions.values()) + "\n"
