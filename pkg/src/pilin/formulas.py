"""Formulas of linear logic with fixed points, addresses, and typed occurrences.

Formulas compare up to alpha-equivalence of their bound variables.  Every
formula carries a cached de Bruijn key which is used for equality, hashing and
the subformula order.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator


class Formula:
    """Base class of pre-formulas."""

    __slots__ = ()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Formula):
            return NotImplemented
        return self is other or self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)

    @cached_property
    def key(self) -> tuple:
        return _key(self, ())

    @cached_property
    def size(self) -> int:
        return 1 + sum(c.size for c in children(self))

    @cached_property
    def free_vars(self) -> frozenset[str]:
        match self:
            case Var(name):
                return frozenset([name])
            case Mu(var, body) | Nu(var, body):
                return body.free_vars - {var}
            case _:
                out: frozenset[str] = frozenset()
                for c in children(self):
                    out |= c.free_vars
                return out

    @property
    def closed(self) -> bool:
        return not self.free_vars

    @property
    def positive(self) -> bool:
        """Output formulas: 0, 1, plus, tensor and least fixed points."""
        return isinstance(self, (Zero, One, Plus, Tensor, Mu))

    def __str__(self) -> str:
        return show(self)

    def pretty(self) -> str:
        return show(self, unicode=True)


@dataclass(frozen=True, eq=False)
class Zero(Formula):
    pass


@dataclass(frozen=True, eq=False)
class Top(Formula):
    pass


@dataclass(frozen=True, eq=False)
class One(Formula):
    pass


@dataclass(frozen=True, eq=False)
class Bot(Formula):
    pass


@dataclass(frozen=True, eq=False)
class Plus(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True, eq=False)
class With(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True, eq=False)
class Tensor(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True, eq=False)
class Par(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True, eq=False)
class Mu(Formula):
    var: str
    body: Formula


@dataclass(frozen=True, eq=False)
class Nu(Formula):
    var: str
    body: Formula


@dataclass(frozen=True, eq=False)
class Var(Formula):
    name: str


BINARY = (Plus, With, Tensor, Par)
FIXPOINTS = (Mu, Nu)
_DUAL_CLASS = {
    Zero: Top, Top: Zero, One: Bot, Bot: One,
    Plus: With, With: Plus, Tensor: Par, Par: Tensor,
    Mu: Nu, Nu: Mu,
}


def children(f: Formula) -> tuple[Formula, ...]:
    match f:
        case Plus(l, r) | With(l, r) | Tensor(l, r) | Par(l, r):
            return (l, r)
        case Mu(_, b) | Nu(_, b):
            return (b,)
        case _:
            return ()


def _key(f: Formula, env: tuple[str, ...]) -> tuple:
    match f:
        case Var(name):
            if name in env:
                return ("#", env.index(name))
            return ("v", name)
        case Mu(var, body) | Nu(var, body):
            return (type(f).__name__, _key(body, (var,) + env))
        case Plus(l, r) | With(l, r) | Tensor(l, r) | Par(l, r):
            return (type(f).__name__, _key(l, env), _key(r, env))
        case _:
            return (type(f).__name__,)


def is_fixpoint(f: Formula) -> bool:
    return isinstance(f, FIXPOINTS)


def dual(f: Formula) -> Formula:
    match f:
        case Var():
            return f
        case Mu(var, body) | Nu(var, body):
            return _DUAL_CLASS[type(f)](var, dual(body))
        case Plus(l, r) | With(l, r) | Tensor(l, r) | Par(l, r):
            return _DUAL_CLASS[type(f)](dual(l), dual(r))
        case _:
            return _DUAL_CLASS[type(f)]()


def fresh_var(base: str, avoid: Iterable[str]) -> str:
    avoid = set(avoid)
    stem = base.rstrip("0123456789'") or "X"
    k = 1
    while f"{stem}{k}" in avoid:
        k += 1
    return f"{stem}{k}"


def subst_formula(body: Formula, var: str, replacement: Formula) -> Formula:
    """Capture-avoiding substitution of ``replacement`` for free ``var``."""
    if var not in body.free_vars:
        return body
    match body:
        case Var(name):
            return replacement if name == var else body
        case Mu(bound, inner) | Nu(bound, inner):
            cls = type(body)
            if bound in replacement.free_vars:
                new = fresh_var(bound, replacement.free_vars | inner.free_vars | {var})
                inner = subst_formula(inner, bound, Var(new))
                bound = new
            return cls(bound, subst_formula(inner, var, replacement))
        case Plus(l, r) | With(l, r) | Tensor(l, r) | Par(l, r):
            return type(body)(subst_formula(l, var, replacement),
                              subst_formula(r, var, replacement))
    return body


def unfold(f: Formula) -> Formula:
    """One fixed-point unfolding: sigma X.S becomes S[sigma X.S / X]."""
    if not isinstance(f, FIXPOINTS):
        raise ValueError(f"not a fixed point: {f}")
    return subst_formula(f.body, f.var, f)


def formula_steps(f: Formula) -> tuple[Formula, ...]:
    """Immediate successors of a stripped formula under the step relation."""
    match f:
        case Plus(l, r) | With(l, r) | Tensor(l, r) | Par(l, r):
            return (l, r)
        case Mu() | Nu():
            return (unfold(f),)
    return ()


def subterms(f: Formula) -> Iterator[Formula]:
    yield f
    for c in children(f):
        yield from subterms(c)


def subformula_leq(f: Formula, g: Formula) -> bool:
    """Whether ``f`` occurs as a subterm of ``g`` (up to alpha)."""
    return f.key in _subterm_keys(g)


def _subterm_keys(g: Formula) -> frozenset:
    cached = g.__dict__.get("_subterm_keys")
    if cached is None:
        cached = frozenset(s.key for s in subterms(g))
        g.__dict__["_subterm_keys"] = cached
    return cached


def min_formula(formulas: Iterable[Formula]) -> Formula | None:
    fs = list(dict.fromkeys(formulas))
    for m in fs:
        if all(subformula_leq(m, g) for g in fs):
            return m
    return None


# ---------------------------------------------------------------- addresses


@dataclass(frozen=True, order=True)
class Address:
    base: int
    dualized: bool = False
    word: str = ""

    def extend(self, step: str) -> Address:
        assert step in ("i", "l", "r")
        return Address(self.base, self.dualized, self.word + step)

    def dual(self) -> Address:
        return Address(self.base, not self.dualized, self.word)

    def prefix_of(self, other: Address) -> bool:
        return (self.base == other.base and self.dualized == other.dualized
                and other.word.startswith(self.word))

    def disjoint(self, other: Address) -> bool:
        return not self.prefix_of(other) and not other.prefix_of(self)

    def __str__(self) -> str:
        return f"{'~' if self.dualized else ''}a{self.base}{self.word}"

    def pretty(self) -> str:
        return f"{'ā' if self.dualized else 'a'}{self.base}{self.word}"


@dataclass(frozen=True)
class Type:
    formula: Formula
    address: Address

    def dual(self) -> Type:
        return Type(dual(self.formula), self.address.dual())

    def __str__(self) -> str:
        return f"{self.formula}@{self.address}"

    def pretty(self) -> str:
        f = self.formula.pretty()
        if not children(self.formula) and not isinstance(self.formula, Var):
            return f
        if not isinstance(self.formula, (Var, Zero, One, Top, Bot)):
            f = f"({f})"
        return f"{f}_{self.address.pretty()}"


def type_steps(t: Type) -> tuple[Type, ...]:
    """Immediate successors of a type: l/r for connectives, i for unfolding."""
    f, a = t.formula, t.address
    match f:
        case Plus(l, r) | With(l, r) | Tensor(l, r) | Par(l, r):
            return (Type(l, a.extend("l")), Type(r, a.extend("r")))
        case Mu() | Nu():
            return (Type(unfold(f), a.extend("i")),)
    return ()


# ----------------------------------------------------------------- closures


class FormulaNotInClosure(KeyError):
    pass


@dataclass(frozen=True)
class Closure:
    """Step-closed set of formulas with min-parity priorities on fixed points."""

    formulas: tuple[Formula, ...]
    priorities: dict

    @property
    def neutral(self) -> int:
        return 2 * len(self.formulas) + 1

    def __contains__(self, f: Formula) -> bool:
        return f in self.priorities

    def __len__(self) -> int:
        return len(self.formulas)

    def __iter__(self):
        return iter(self.formulas)


def closure_of(seed: Iterable[Formula]) -> Closure:
    seen: dict[Formula, None] = {}
    todo = list(seed)
    while todo:
        f = todo.pop()
        if f in seen:
            continue
        seen[f] = None
        todo.extend(formula_steps(f))
    formulas = tuple(sorted(seen, key=lambda f: (f.size, str(f))))
    n = len(formulas)
    # Sorting by size is a linear extension of the subformula order.
    fixpoints = [f for f in formulas if is_fixpoint(f)]
    prios = {f: 2 * n + 1 for f in formulas}
    for k, f in enumerate(fixpoints):
        prios[f] = 2 * k + (0 if isinstance(f, Nu) else 1)
    return Closure(formulas, prios)


def priority(c: Closure, f: Formula) -> int:
    try:
        return c.priorities[f]
    except KeyError:
        raise FormulaNotInClosure(str(f)) from None


# ----------------------------------------------------------------- printing

_SYMBOLS = {
    Plus: (" + ", " ⊕ "), With: (" & ", " & "),
    Tensor: (" * ", " ⊗ "), Par: (" par ", " ⅋ "),
}
_CONSTANTS = {Zero: ("0", "𝟘"), One: ("1", "𝟙"), Top: ("top", "⊤"), Bot: ("bot", "⊥")}
_LEVEL = {Plus: 1, With: 1, Tensor: 2, Par: 2}


def show(f: Formula, unicode: bool = False) -> str:
    u = int(unicode)

    def go(f: Formula, level: int) -> str:
        match f:
            case Var(name):
                return name
            case Mu(var, body) | Nu(var, body):
                if unicode:
                    s = f"{'μ' if isinstance(f, Mu) else 'ν'}{var}.{go(body, 0)}"
                else:
                    s = f"{'mu' if isinstance(f, Mu) else 'nu'} {var}. {go(body, 0)}"
                return f"({s})" if level > 0 else s
            case Plus(l, r) | With(l, r) | Tensor(l, r) | Par(l, r):
                lv = _LEVEL[type(f)]
                s = go(l, lv) + _SYMBOLS[type(f)][u] + go(r, lv + 1)
                return f"({s})" if level > lv else s
            case _:
                return _CONSTANTS[type(f)][u]

    return go(f, 0)
