"""Abstract syntax of processes, definitions and programs."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Mapping

from .formulas import Formula


@dataclass(frozen=True)
class Span:
    line: int
    col: int
    end_line: int = 0
    end_col: int = 0

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


class Process:
    """Base class of process terms."""

    @cached_property
    def fn(self) -> frozenset[str]:
        return _free_names(self)

    @cached_property
    def shape(self) -> tuple:
        """Structural key with every channel name erased."""
        return _shape(self)

    def __str__(self) -> str:
        from .parser import print_process
        return print_process(self)


def _loc():
    return field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Link(Process):
    x: str
    y: str
    loc: Span | None = _loc()


@dataclass(frozen=True)
class Fail(Process):
    x: str
    loc: Span | None = _loc()


@dataclass(frozen=True)
class Close(Process):
    x: str
    loc: Span | None = _loc()


@dataclass(frozen=True)
class Wait(Process):
    x: str
    body: Process
    loc: Span | None = _loc()


@dataclass(frozen=True)
class Join(Process):
    """Pair input: receive (y, z) on x; y is the left component."""
    x: str
    y: str
    z: str
    body: Process
    loc: Span | None = _loc()


@dataclass(frozen=True)
class Fork(Process):
    """Pair output: y is bound in ``left``, z is bound in ``right``."""
    x: str
    y: str
    z: str
    left: Process
    right: Process
    loc: Span | None = _loc()


@dataclass(frozen=True)
class Select(Process):
    x: str
    tag: int
    y: str
    body: Process
    loc: Span | None = _loc()


@dataclass(frozen=True)
class Case(Process):
    x: str
    y: str
    left: Process
    right: Process
    loc: Span | None = _loc()


@dataclass(frozen=True)
class Rec(Process):
    """Least fixed point side: sends the unfolding continuation (``unfold``)."""
    x: str
    y: str
    body: Process
    loc: Span | None = _loc()


@dataclass(frozen=True)
class Corec(Process):
    """Greatest fixed point side: receives the continuation (``rec``)."""
    x: str
    y: str
    body: Process
    loc: Span | None = _loc()


@dataclass(frozen=True)
class Cut(Process):
    """``new (x: ann) (left | right)``; ``left`` uses x at ``ann``."""
    x: str
    ann: Formula
    left: Process
    right: Process
    loc: Span | None = _loc()


@dataclass(frozen=True)
class Choice(Process):
    left: Process
    right: Process
    loc: Span | None = _loc()


@dataclass(frozen=True)
class Call(Process):
    name: str
    args: tuple[str, ...]
    loc: Span | None = _loc()


@dataclass(frozen=True)
class Definition:
    name: str
    params: tuple[tuple[str, Formula], ...]
    body: Process
    loc: Span | None = _loc()

    @property
    def param_names(self) -> tuple[str, ...]:
        return tuple(x for x, _ in self.params)

    @property
    def arity(self) -> int:
        return len(self.params)


@dataclass(frozen=True)
class Program:
    definitions: Mapping[str, Definition]
    main: str | None = None

    def __getitem__(self, name: str) -> Definition:
        return self.definitions[name]

    @property
    def main_def(self) -> Definition:
        if self.main is None:
            raise KeyError("program has no main definition")
        return self.definitions[self.main]


class UnknownDefinition(KeyError):
    pass


class ArityMismatch(ValueError):
    pass


# ------------------------------------------------------------- traversal


def subprocesses(p: Process) -> Iterator[Process]:
    """Pre-order traversal of ``p`` and all its subterms."""
    yield p
    for c in _children(p):
        yield from subprocesses(c)


def _children(p: Process) -> tuple[Process, ...]:
    match p:
        case Wait(body=b) | Join(body=b) | Select(body=b) | Rec(body=b) | Corec(body=b):
            return (b,)
        case Fork(left=l, right=r) | Case(left=l, right=r) | Cut(left=l, right=r) | Choice(l, r):
            return (l, r)
    return ()


def _free_names(p: Process) -> frozenset[str]:
    match p:
        case Link(x, y):
            return frozenset((x, y))
        case Fail(x) | Close(x):
            return frozenset((x,))
        case Wait(x, body):
            return body.fn | {x}
        case Join(x, y, z, body):
            return (body.fn - {y, z}) | {x}
        case Fork(x, y, z, left, right):
            return (left.fn - {y}) | (right.fn - {z}) | {x}
        case Select(x, _, y, body) | Rec(x, y, body) | Corec(x, y, body):
            return (body.fn - {y}) | {x}
        case Case(x, y, left, right):
            return ((left.fn | right.fn) - {y}) | {x}
        case Cut(x, _, left, right):
            return (left.fn | right.fn) - {x}
        case Choice(left, right):
            return left.fn | right.fn
        case Call(_, args):
            return frozenset(args)
    raise TypeError(f"not a process: {p!r}")


def free_names(p: Process) -> frozenset[str]:
    return p.fn


def _shape(p: Process) -> tuple:
    match p:
        case Link() | Fail() | Close():
            return (type(p).__name__,)
        case Select(tag=tag, body=b):
            return ("Select", tag, b.shape)
        case Call(name, args):
            return ("Call", name, len(args))
        case _:
            return (type(p).__name__,) + tuple(c.shape for c in _children(p))


# ---------------------------------------------------------- substitution


def fresh_name(base: str, avoid) -> str:
    stem = base.rstrip("0123456789'") or "c"
    k = 1
    while f"{stem}{k}" in avoid:
        k += 1
    return f"{stem}{k}"


def rename(p: Process, mapping: Mapping[str, str]) -> Process:
    """Simultaneous capture-avoiding renaming of free channel names."""
    mapping = {k: v for k, v in mapping.items() if k != v and k in p.fn}
    if not mapping:
        return p
    return _rename(p, mapping)


def _scope(binders: tuple[str, ...], body: Process, mapping: dict) -> tuple[tuple[str, ...], Process]:
    """Rename under ``binders``, alpha-converting any binder that would capture."""
    inner = {k: v for k, v in mapping.items() if k not in binders and k in body.fn}
    targets = set(inner.values())
    out = []
    for b in binders:
        if b in targets:
            new = fresh_name(b, targets | body.fn | set(inner) | set(binders) | set(out))
            inner[b] = new
            out.append(new)
        else:
            out.append(b)
    return tuple(out), (_rename(body, inner) if inner else body)


def _rename(p: Process, m: dict) -> Process:
    r = lambda n: m.get(n, n)
    match p:
        case Link(x, y):
            return Link(r(x), r(y), loc=p.loc)
        case Fail(x):
            return Fail(r(x), loc=p.loc)
        case Close(x):
            return Close(r(x), loc=p.loc)
        case Wait(x, body):
            return Wait(r(x), rename(body, m), loc=p.loc)
        case Join(x, y, z, body):
            if y == z:
                (y,), body = _scope((y,), body, m)
                z = y
            else:
                (y, z), body = _scope((y, z), body, m)
            return Join(r(x), y, z, body, loc=p.loc)
        case Fork(x, y, z, left, right):
            (y,), left = _scope((y,), left, m)
            (z,), right = _scope((z,), right, m)
            return Fork(r(x), y, z, left, right, loc=p.loc)
        case Select(x, tag, y, body):
            (y,), body = _scope((y,), body, m)
            return Select(r(x), tag, y, body, loc=p.loc)
        case Rec(x, y, body):
            (y,), body = _scope((y,), body, m)
            return Rec(r(x), y, body, loc=p.loc)
        case Corec(x, y, body):
            (y,), body = _scope((y,), body, m)
            return Corec(r(x), y, body, loc=p.loc)
        case Case(x, y, left, right):
            pair = Choice(left, right)
            (y,), pair = _scope((y,), pair, m)
            return Case(r(x), y, pair.left, pair.right, loc=p.loc)
        case Cut(x, ann, left, right):
            pair = Choice(left, right)
            (x,), pair = _scope((x,), pair, m)
            return Cut(x, ann, pair.left, pair.right, loc=p.loc)
        case Choice(left, right):
            return Choice(rename(left, m), rename(right, m), loc=p.loc)
        case Call(name, args):
            return Call(name, tuple(r(a) for a in args), loc=p.loc)
    raise TypeError(f"not a process: {p!r}")


def substitute(p: Process, new: str, old: str) -> Process:
    """``p{new/old}``: replace free ``old`` by ``new`` avoiding capture."""
    return rename(p, {old: new})


def alpha_key(p: Process, env: tuple[str, ...] = ()) -> tuple:
    """Key identifying ``p`` up to renaming of bound channel names."""
    def n(x: str, env: tuple[str, ...]):
        return ("#", env.index(x)) if x in env else x

    match p:
        case Link(x, y):
            return ("Link", n(x, env), n(y, env))
        case Fail(x) | Close(x):
            return (type(p).__name__, n(x, env))
        case Wait(x, body):
            return ("Wait", n(x, env), alpha_key(body, env))
        case Join(x, y, z, body):
            return ("Join", n(x, env), alpha_key(body, (y, z) + env))
        case Fork(x, y, z, left, right):
            return ("Fork", n(x, env), alpha_key(left, (y,) + env), alpha_key(right, (z,) + env))
        case Select(x, tag, y, body):
            return ("Select", n(x, env), tag, alpha_key(body, (y,) + env))
        case Rec(x, y, body) | Corec(x, y, body):
            return (type(p).__name__, n(x, env), alpha_key(body, (y,) + env))
        case Case(x, y, left, right):
            return ("Case", n(x, env), alpha_key(left, (y,) + env), alpha_key(right, (y,) + env))
        case Cut(x, ann, left, right):
            return ("Cut", ann.key, alpha_key(left, (x,) + env), alpha_key(right, (x,) + env))
        case Choice(left, right):
            return ("Choice", alpha_key(left, env), alpha_key(right, env))
        case Call(name, args):
            return ("Call", name, tuple(n(a, env) for a in args))
    raise TypeError(f"not a process: {p!r}")


def alpha_equivalent(p: Process, q: Process) -> bool:
    return alpha_key(p) == alpha_key(q)


def unfold_call(prog: Program, name: str, args) -> Process:
    if name not in prog.definitions:
        raise UnknownDefinition(name)
    d = prog.definitions[name]
    args = tuple(args)
    if len(args) != d.arity:
        raise ArityMismatch(f"{name} expects {d.arity} argument(s), got {len(args)}")
    return rename(d.body, dict(zip(d.param_names, args)))


# ------------------------------------------------------- well-formedness


@dataclass(frozen=True)
class Diagnostic:
    kind: str
    message: str
    loc: Span | None = None
    definition: str | None = None

    def __str__(self) -> str:
        where = f"{self.loc}: " if self.loc else ""
        inside = f" (in {self.definition})" if self.definition else ""
        return f"{where}{self.kind}: {self.message}{inside}"


def check_well_formed(prog: Program) -> list[Diagnostic]:
    out: list[Diagnostic] = []
    for d in prog.definitions.values():
        extra = d.body.fn - set(d.param_names)
        if extra:
            out.append(Diagnostic("UnboundName",
                                  f"free name(s) {', '.join(sorted(extra))} not among parameters",
                                  d.loc, d.name))
        for p in subprocesses(d.body):
            match p:
                case Fork(x, y, z, left, right):
                    if y in right.fn:
                        out.append(Diagnostic("ForkScope", f"{y} occurs free in the right branch of a send on {x}",
                                              p.loc, d.name))
                    if z in left.fn:
                        out.append(Diagnostic("ForkScope", f"{z} occurs free in the left branch of a send on {x}",
                                              p.loc, d.name))
                case Call(name, args):
                    if name not in prog.definitions:
                        out.append(Diagnostic("UnknownDefinition", f"call to undefined {name}", p.loc, d.name))
                    elif len(args) != prog.definitions[name].arity:
                        out.append(Diagnostic("ArityMismatch",
                                              f"{name} expects {prog.definitions[name].arity} argument(s), "
                                              f"got {len(args)}", p.loc, d.name))
    return out
