"""Ranks: least solutions in N ∪ {∞} of the rank equation system.

Channel names do not influence the rank, so every subterm is abstracted to
its name-free ``shape`` and structurally identical subterms share a single
equation variable.  A call shares the variable of its callee's body.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .graphs import strongly_connected
from .process import (
    Call, Case, Choice, Close, Corec, Cut, Fail, Fork, Join, Link, Process,
    Program, Rec, Select, Wait,
)

INF = math.inf  # rank values are ints or INF


def fmt_rank(r) -> str:
    return "inf" if r == INF else str(int(r))


class UnknownSubterm(KeyError):
    pass


@dataclass(frozen=True)
class Equation:
    """``var = op(args)``; op is one of zero, copy, max, choice, sum."""
    var: int
    op: str
    args: tuple[int, ...]
    term: Process


@dataclass
class EquationSystem:
    equations: list[Equation]
    index: dict            # shape -> variable
    calls: dict            # definition name -> variable of its body

    def __len__(self) -> int:
        return len(self.equations)

    def evaluate(self, values) -> list:
        return [_apply(eq.op, [values[a] for a in eq.args]) for eq in self.equations]


def _apply(op: str, vals: list):
    match op:
        case "zero":
            return 0
        case "copy":
            return vals[0]
        case "max":
            return max(vals)
        case "choice":
            return 1 + min(vals)
        case "sum":
            return vals[0] + vals[1]
    raise ValueError(op)


def rank_equations(prog: Program, roots=None) -> EquationSystem:
    """One equation per name-abstracted subterm reachable from ``roots``.

    ``roots`` defaults to every definition of the program.  Variables are
    numbered in pre-order of first encounter.
    """
    eqs: list[Equation] = []
    index: dict = {}
    calls: dict = {}

    def var_of(p: Process) -> int:
        if isinstance(p, Call):
            if p.name not in prog.definitions:
                raise UnknownSubterm(f"call to unknown definition {p.name}")
            if p.name not in calls:
                return visit_def(p.name)
            return calls[p.name]
        key = p.shape
        if key in index:
            return index[key]
        v = len(eqs)
        index[key] = v
        eqs.append(None)  # placeholder keeps pre-order numbering
        match p:
            case Link() | Fail() | Close():
                eq = Equation(v, "zero", (), p)
            case Wait(body=b) | Join(body=b) | Select(body=b) | Rec(body=b) | Corec(body=b):
                eq = Equation(v, "copy", (var_of(b),), p)
            case Case(left=l, right=r):
                eq = Equation(v, "max", (var_of(l), var_of(r)), p)
            case Choice(l, r):
                eq = Equation(v, "choice", (var_of(l), var_of(r)), p)
            case Cut(left=l, right=r) | Fork(left=l, right=r):
                eq = Equation(v, "sum", (var_of(l), var_of(r)), p)
            case _:
                raise TypeError(p)
        eqs[v] = eq
        return v

    def visit_def(name: str) -> int:
        body = prog.definitions[name].body
        if isinstance(body, Call):
            # A definition that is just a call: follow it (unproductive cycles
            # are rejected by the type checker; here they get rank infinity).
            key = ("alias", name)
            v = len(eqs)
            calls[name] = v
            index[key] = v
            eqs.append(None)
            eqs[v] = Equation(v, "copy", (var_of(body),), body)
            return v
        key = body.shape
        if key in index:
            calls[name] = index[key]
            return calls[name]
        # Reserve the variable before descending so recursive calls find it.
        v = len(eqs)
        calls[name] = v
        result = var_of(body)
        assert result == v
        return v

    for name in (roots if roots is not None else prog.definitions):
        if name not in calls:
            visit_def(name)
    return EquationSystem(eqs, index, calls)


def _solve_fixed_strategy(system: EquationSystem, strategy: dict) -> list:
    """Least solution once every choice is committed to one argument."""
    eqs = system.equations

    def deps(v: int) -> tuple[int, ...]:
        eq = eqs[v]
        return (strategy[v],) if eq.op == "choice" else eq.args

    values: list = [None] * len(eqs)
    for comp in strongly_connected(range(len(eqs)), deps):
        members = set(comp)
        if len(comp) == 1 and comp[0] not in deps(comp[0]):
            v = comp[0]
            eq = eqs[v]
            if eq.op == "choice":
                values[v] = 1 + values[strategy[v]]
            else:
                values[v] = _apply(eq.op, [values[a] for a in eq.args])
            continue
        external = [values[a] for v in comp for a in deps(v) if a not in members]
        m = max(external, default=0)
        grows = False
        for v in comp:
            eq = eqs[v]
            if eq.op == "choice":
                grows = True
            elif eq.op == "sum":
                inside = [a in members for a in eq.args]
                if all(inside):
                    grows = grows or m > 0
                else:
                    grows = grows or any(values[a] > 0 for a, i in zip(eq.args, inside) if not i)
        for v in comp:
            values[v] = INF if grows else m
    return values


@dataclass
class RankTable:
    system: EquationSystem
    values: list

    def __getitem__(self, name: str):
        return self.values[self.system.calls[name]]

    def definitions(self) -> dict:
        return {n: self.values[v] for n, v in self.system.calls.items()}


def solve_rank(system: EquationSystem) -> RankTable:
    """Least solution by strategy improvement over the choice equations.

    For a fixed choice of argument at every ``1 + min`` the system is solved
    exactly, component by component: a strongly connected component is
    infinite iff it can grow (a choice on the cycle, or a sum adding a
    positive amount), otherwise every member equals its largest input.
    """
    strategy = {eq.var: eq.args[0] for eq in system.equations if eq.op == "choice"}
    while True:
        values = _solve_fixed_strategy(system, strategy)
        changed = False
        for v, current in strategy.items():
            a, b = system.equations[v].args
            best = a if values[a] <= values[b] else b
            if values[best] < values[current]:
                strategy[v] = best
                changed = True
        if not changed:
            assert system.evaluate(values) == values
            return RankTable(system, values)


def program_ranks(prog: Program) -> RankTable:
    return solve_rank(rank_equations(prog))


def rank_of(table: RankTable, p: Process):
    """Rank of ``p``; composite terms are evaluated through the equations."""
    key = p.shape
    v = table.system.index.get(key)
    if v is not None:
        return table.values[v]
    match p:
        case Call(name):
            if name not in table.system.calls:
                raise UnknownSubterm(f"call to {name} not covered by the rank table")
            return table.values[table.system.calls[name]]
        case Link() | Fail() | Close():
            return 0
        case Wait(body=b) | Join(body=b) | Select(body=b) | Rec(body=b) | Corec(body=b):
            return rank_of(table, b)
        case Case(left=l, right=r):
            return max(rank_of(table, l), rank_of(table, r))
        case Choice(l, r):
            return 1 + min(rank_of(table, l), rank_of(table, r))
        case Cut(left=l, right=r) | Fork(left=l, right=r):
            return rank_of(table, l) + rank_of(table, r)
    raise UnknownSubterm(repr(p))
