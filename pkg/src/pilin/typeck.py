"""Quasi-typing: build the circular derivation of a program.

The derivation is kept as a finite graph.  Each definition body is typed
once, in a context of fresh atomic addresses (its *entry* node); a call
occurring anywhere becomes a back-edge to the callee's entry.  Every premise
edge records how the names of the premise context descend from the names of
the conclusion context, and whether the type took a step along the way.
These ancestry links are the raw material for threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping

from . import formulas as F
from .formulas import Address, Closure, Formula, Type, closure_of
from .process import (
    Call, Case, Choice, Close, Corec, Cut, Fail, Fork, Join, Link,
    Process, Program, Rec, Select, Span, Wait,
)

RULE_SYMBOLS = {
    "ax": "ax", "cut": "cut", "top": "⊤", "bot": "⊥", "one": "𝟙", "par": "⅋",
    "tensor": "⊗", "with": "&", "plus": "⊕", "nu": "ν", "mu": "μ",
    "choice": "choice", "call": "call",
}


class TypingError(Exception):
    """Base class of the errors reported by the type checker."""


class IllTyped(TypingError):
    def __init__(self, rule: str, message: str, definition: str | None = None,
                 loc: Span | None = None, expected: str | None = None,
                 actual: str | None = None):
        self.rule = rule
        self.message = message
        self.definition = definition
        self.loc = loc
        self.expected = expected
        self.actual = actual
        where = f"{loc}: " if loc else ""
        inside = f" in {definition}" if definition else ""
        detail = ""
        if expected is not None:
            detail = f" (expected {expected}, found {actual})"
        super().__init__(f"{where}rule {rule}{inside}: {message}{detail}")


class UnproductiveCycle(TypingError):
    def __init__(self, cycle: list[str]):
        self.cycle = cycle
        super().__init__("definitions call each other without any action: "
                         + " -> ".join(cycle))


class AddressClash(TypingError):
    """Two types of one context have overlapping addresses (a checker bug)."""


@dataclass(frozen=True)
class Edge:
    """A premise of a rule application.

    ``ancestry`` lists ``(premise name, conclusion name, progressed)``.  When
    the premise is a call, ``target`` is the callee's entry node and ``call``
    is the call term as it appears in the conclusion's body.
    """
    target: int
    ancestry: tuple[tuple[str, str, bool], ...]
    call: Call | None = None

    @property
    def back(self) -> bool:
        return self.call is not None

    def parent_of(self, premise_name: str) -> tuple[str, bool] | None:
        for p, c, prog in self.ancestry:
            if p == premise_name:
                return c, prog
        return None


@dataclass
class ProofNode:
    id: int
    definition: str | None
    context: tuple[tuple[str, Type], ...]
    process: Process
    rule: str
    premises: list[Edge] = field(default_factory=list)

    def type_of(self, name: str) -> Type:
        for x, t in self.context:
            if x == name:
                return t
        raise KeyError(name)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(x for x, _ in self.context)


@dataclass
class ProofGraph:
    root: int
    nodes: list[ProofNode]
    entries: dict[str, int]
    closure: Closure
    program: Program

    def __getitem__(self, i: int) -> ProofNode:
        return self.nodes[i]

    def edges(self):
        """All premise edges as ``(source, index, edge)``, in creation order."""
        for n in self.nodes:
            for k, e in enumerate(n.premises):
                yield n.id, k, e

    def reachable(self) -> list[int]:
        seen = {self.root}
        order = [self.root]
        for i in order:
            for e in self.nodes[i].premises:
                if e.target not in seen:
                    seen.add(e.target)
                    order.append(e.target)
        return order


# ------------------------------------------------------------------ checker


def _unproductive_cycles(prog: Program) -> None:
    for start in prog.definitions:
        seen = [start]
        body = prog.definitions[start].body
        while isinstance(body, Call) and body.name in prog.definitions:
            if body.name in seen:
                cycle = seen[seen.index(body.name):] + [body.name]
                raise UnproductiveCycle(cycle)
            seen.append(body.name)
            body = prog.definitions[body.name].body


class _Builder:
    def __init__(self, prog: Program):
        self.prog = prog
        self.nodes: list[ProofNode] = []
        self.entries: dict[str, int] = {}
        self.pending: list[tuple[int, str]] = []
        self.next_base = 0
        self.formulas: list[Formula] = []

    def fresh_base(self) -> int:
        b = self.next_base
        self.next_base += 1
        return b

    # -- entries and calls
    def entry(self, name: str) -> int:
        if name in self.entries:
            return self.entries[name]
        d = self.prog.definitions[name]
        ctx = {x: Type(f, Address(self.fresh_base())) for x, f in d.params}
        self.formulas.extend(f for _, f in d.params)
        node = self.new_node(name, ctx, d.body, "")
        self.entries[name] = node.id
        self.pending.append((node.id, name))
        return node.id

    def new_node(self, definition, ctx: Mapping[str, Type], p: Process, rule: str) -> ProofNode:
        context = tuple(sorted(ctx.items()))
        for (x, s), (y, t) in combinations(context, 2):
            if not s.address.disjoint(t.address):
                raise AddressClash(f"{x}: {s} and {y}: {t} share an address")
        node = ProofNode(len(self.nodes), definition, context, p, rule)
        self.nodes.append(node)
        return node

    def premise(self, definition, ctx: dict[str, Type], p: Process,
                ancestry: dict[str, tuple[str, bool]]) -> Edge:
        """Type ``p`` in ``ctx``; ``ancestry`` maps premise names to parents."""
        if isinstance(p, Call):
            self.check_call(definition, ctx, p)
            d = self.prog.definitions[p.name]
            target = self.entry(p.name)
            links = tuple((x, *ancestry[a]) for x, a in zip(d.param_names, p.args) if a in ancestry)
            return Edge(target, links, call=p)
        node = self.new_node(definition, ctx, p, "")
        self.derive(node, ctx)
        links = tuple((x, *ancestry[x]) for x in sorted(ctx) if x in ancestry)
        return Edge(node.id, links)

    def check_call(self, definition, ctx: dict[str, Type], p: Call) -> None:
        if p.name not in self.prog.definitions:
            raise IllTyped("call", f"call to undefined {p.name}", definition, p.loc)
        d = self.prog.definitions[p.name]
        if len(p.args) != d.arity:
            raise IllTyped("call", f"{p.name} expects {d.arity} argument(s), got {len(p.args)}",
                           definition, p.loc)
        if len(set(p.args)) != len(p.args):
            raise IllTyped("call", f"a channel is passed twice to {p.name}", definition, p.loc)
        self.exact_context("call", definition, ctx, set(p.args), p)
        for a, (x, f) in zip(p.args, d.params):
            if ctx[a].formula != f:
                raise IllTyped("call", f"argument {a} of {p.name} (parameter {x})",
                               definition, p.loc, expected=str(f), actual=str(ctx[a].formula))

    # -- rule helpers
    @staticmethod
    def exact_context(rule, definition, ctx, names: set[str], p: Process) -> None:
        missing = names - set(ctx)
        if missing:
            raise IllTyped(rule, f"channel(s) {', '.join(sorted(missing))} not in the context",
                           definition, p.loc)
        unused = set(ctx) - names
        if unused:
            raise IllTyped(rule, f"channel(s) {', '.join(sorted(unused))} left unused",
                           definition, p.loc)

    @staticmethod
    def expect(rule, definition, ctx, x: str, cls, p: Process) -> Type:
        t = ctx[x]
        if not isinstance(t.formula, cls):
            names = {F.Top: "top", F.One: "1", F.Bot: "bot", F.Plus: "a sum (+)",
                     F.With: "a choice (&)", F.Tensor: "a pair (*)", F.Par: "a pair (par)",
                     F.Mu: "a least fixed point (mu)", F.Nu: "a greatest fixed point (nu)"}
            raise IllTyped(rule, f"channel {x}", definition, p.loc,
                           expected=names[cls], actual=str(t.formula))
        return t

    @staticmethod
    def no_shadow(rule, definition, ctx, binders, p: Process) -> None:
        for b in binders:
            if b in ctx:
                raise IllTyped(rule, f"binder {b} shadows a channel in use", definition, p.loc)

    def split(self, rule, definition, ctx, left_names, right_names, p: Process):
        both = left_names & right_names
        if both:
            raise IllTyped(rule, f"channel(s) {', '.join(sorted(both))} used on both sides",
                           definition, p.loc)
        self.exact_context(rule, definition, ctx, left_names | right_names, p)
        return ({x: ctx[x] for x in left_names}, {x: ctx[x] for x in right_names})

    # -- the rules
    def derive(self, node: ProofNode, ctx: dict[str, Type]) -> None:
        p, d = node.process, node.definition
        stay = lambda names: {x: (x, False) for x in names}
        match p:
            case Link(x, y):
                node.rule = "ax"
                if x == y:
                    raise IllTyped("ax", "a channel linked to itself", d, p.loc)
                self.exact_context("ax", d, ctx, {x, y}, p)
                if ctx[x].formula != F.dual(ctx[y].formula):
                    raise IllTyped("ax", f"link {x} {y} needs dual types", d, p.loc,
                                   expected=str(F.dual(ctx[y].formula)), actual=str(ctx[x].formula))
            case Fail(x):
                node.rule = "top"
                if x not in ctx:
                    raise IllTyped("top", f"channel {x} not in the context", d, p.loc)
                self.expect("top", d, ctx, x, F.Top, p)
            case Close(x):
                node.rule = "one"
                self.exact_context("one", d, ctx, {x}, p)
                self.expect("one", d, ctx, x, F.One, p)
            case Wait(x, body):
                node.rule = "bot"
                self.need(x, ctx, "bot", d, p)
                self.expect("bot", d, ctx, x, F.Bot, p)
                rest = {k: v for k, v in ctx.items() if k != x}
                node.premises.append(self.premise(d, rest, body, stay(rest)))
            case Join(x, y, z, body):
                node.rule = "par"
                self.need(x, ctx, "par", d, p)
                t = self.expect("par", d, ctx, x, F.Par, p)
                rest = {k: v for k, v in ctx.items() if k != x}
                if y == z:
                    raise IllTyped("par", "both components received on one name", d, p.loc)
                self.no_shadow("par", d, rest, (y, z), p)
                l, r = F.type_steps(t)
                new = dict(rest, **{y: l, z: r})
                anc = dict(stay(rest), **{y: (x, True), z: (x, True)})
                node.premises.append(self.premise(d, new, body, anc))
            case Fork(x, y, z, left, right):
                node.rule = "tensor"
                self.need(x, ctx, "tensor", d, p)
                t = self.expect("tensor", d, ctx, x, F.Tensor, p)
                rest = {k: v for k, v in ctx.items() if k != x}
                self.no_shadow("tensor", d, rest, (y, z), p)
                g1, g2 = self.split("tensor", d, rest, set(left.fn - {y}), set(right.fn - {z}), p)
                l, r = F.type_steps(t)
                node.premises.append(self.premise(d, dict(g1, **{y: l}), left,
                                                  dict(stay(g1), **{y: (x, True)})))
                node.premises.append(self.premise(d, dict(g2, **{z: r}), right,
                                                  dict(stay(g2), **{z: (x, True)})))
            case Select(x, tag, y, body):
                node.rule = "plus"
                self.need(x, ctx, "plus", d, p)
                t = self.expect("plus", d, ctx, x, F.Plus, p)
                rest = {k: v for k, v in ctx.items() if k != x}
                self.no_shadow("plus", d, rest, (y,), p)
                chosen = F.type_steps(t)[tag - 1]
                node.premises.append(self.premise(d, dict(rest, **{y: chosen}), body,
                                                  dict(stay(rest), **{y: (x, True)})))
            case Case(x, y, left, right):
                node.rule = "with"
                self.need(x, ctx, "with", d, p)
                t = self.expect("with", d, ctx, x, F.With, p)
                rest = {k: v for k, v in ctx.items() if k != x}
                self.no_shadow("with", d, rest, (y,), p)
                for branch, step in zip((left, right), F.type_steps(t)):
                    node.premises.append(self.premise(d, dict(rest, **{y: step}), branch,
                                                      dict(stay(rest), **{y: (x, True)})))
            case Rec(x, y, body) | Corec(x, y, body):
                rule, cls = ("mu", F.Mu) if isinstance(p, Rec) else ("nu", F.Nu)
                node.rule = rule
                self.need(x, ctx, rule, d, p)
                t = self.expect(rule, d, ctx, x, cls, p)
                rest = {k: v for k, v in ctx.items() if k != x}
                self.no_shadow(rule, d, rest, (y,), p)
                (step,) = F.type_steps(t)
                node.premises.append(self.premise(d, dict(rest, **{y: step}), body,
                                                  dict(stay(rest), **{y: (x, True)})))
            case Cut(x, ann, left, right):
                node.rule = "cut"
                if ann.free_vars:
                    raise IllTyped("cut", f"annotation of {x} is not closed", d, p.loc)
                self.no_shadow("cut", d, ctx, (x,), p)
                g1, g2 = self.split("cut", d, ctx, set(left.fn - {x}), set(right.fn - {x}), p)
                self.formulas.append(ann)
                a = Address(self.fresh_base())
                # The cut channel is born here: it has no ancestor.
                node.premises.append(self.premise(d, dict(g1, **{x: Type(ann, a)}), left, stay(g1)))
                node.premises.append(self.premise(d, dict(g2, **{x: Type(F.dual(ann), a.dual())}),
                                                  right, stay(g2)))
            case Choice(left, right):
                node.rule = "choice"
                for branch in (left, right):
                    node.premises.append(self.premise(d, dict(ctx), branch, stay(ctx)))
            case Call():
                node.rule = "call"
                self.check_call(d, ctx, p)
                callee = self.prog.definitions[p.name]
                target = self.entry(p.name)
                links = tuple((x, a, False) for x, a in zip(callee.param_names, p.args))
                node.premises.append(Edge(target, links, call=p))
            case _:
                raise TypeError(f"not a process: {p!r}")

    @staticmethod
    def need(x, ctx, rule, d, p) -> None:
        if x not in ctx:
            raise IllTyped(rule, f"channel {x} not in the context", d, p.loc)

    def drain(self) -> None:
        while self.pending:
            nid, name = self.pending.pop(0)
            node = self.nodes[nid]
            self.derive(node, dict(node.context))


def check_program(prog: Program, root: str | None = None) -> ProofGraph:
    """Quasi-type every definition; the root is the entry of ``root`` or main.

    Raises IllTyped, UnproductiveCycle or AddressClash.
    """
    root = root if root is not None else prog.main
    if root is None:
        raise IllTyped("call", "program has no main definition")
    if root not in prog.definitions:
        raise IllTyped("call", f"no definition named {root}")
    _unproductive_cycles(prog)
    b = _Builder(prog)
    root_id = b.entry(root)
    b.drain()
    for name in prog.definitions:
        b.entry(name)
        b.drain()
    return _finish(b, root_id, prog)


def check_process(prog: Program, context: Mapping[str, Formula], p: Process) -> ProofGraph:
    """Quasi-type a closed-up process ``p`` (e.g. a reduct) in ``context``."""
    _unproductive_cycles(prog)
    b = _Builder(prog)
    ctx = {x: Type(f, Address(b.fresh_base())) for x, f in sorted(context.items())}
    b.formulas.extend(context.values())
    if isinstance(p, Call):
        node = b.new_node(None, ctx, p, "call")
        b.derive(node, ctx)
    else:
        node = b.new_node(None, ctx, p, "")
        b.derive(node, ctx)
    b.drain()
    return _finish(b, node.id, prog)


def _finish(b: _Builder, root_id: int, prog: Program) -> ProofGraph:
    seeds = list(b.formulas) + [F.dual(f) for f in b.formulas]
    return ProofGraph(root_id, b.nodes, dict(b.entries), closure_of(seeds), prog)


# ---------------------------------------------------------------- reports


def _judgment(ctx, p: Process, width: int = 72) -> str:
    gamma = ", ".join(f"{x} : {t.pretty()}" for x, t in ctx)
    text = str(p)
    if len(text) > width:
        text = text[: width - 3] + "..."
    return f"{gamma} ⊢ {text}"


def derivation_report(g: ProofGraph) -> str:
    """The derivation as an indented tree; calls print as back-edges."""
    lines: list[str] = []
    shown: set[int] = set()

    def node(i: int, depth: int) -> None:
        n = g.nodes[i]
        shown.add(i)
        pad = "  " * depth
        lines.append(f"{pad}[{RULE_SYMBOLS[n.rule]}] {_judgment(n.context, n.process)}")
        for e in n.premises:
            edge(e, depth + 1)

    def edge(e: Edge, depth: int) -> None:
        if not e.back:
            node(e.target, depth)
            return
        pad = "  " * depth
        lines.append(f"{pad}[call] {e.call} ↩ {e.call.name}")
        if e.target not in shown:
            node(e.target, depth + 1)

    def entry(name: str, i: int) -> None:
        lines.append(f"{name}:")
        node(i, 1)

    n0 = g.nodes[g.root]
    entry(n0.definition or "<process>", g.root)
    for name, i in g.entries.items():
        if i not in shown:
            entry(name, i)
    return "\n".join(lines)


def graph_to_json(g: ProofGraph) -> dict:
    """The graph as plain data (see README for the schema)."""
    return {
        "root": g.root,
        "entries": dict(g.entries),
        "nodes": [
            {
                "id": n.id,
                "definition": n.definition,
                "rule": n.rule,
                "process": str(n.process),
                "context": [{"name": x, "formula": str(t.formula), "address": str(t.address)}
                            for x, t in n.context],
                "premises": [
                    {
                        "target": e.target,
                        "back_edge": e.back,
                        "call": str(e.call) if e.call else None,
                        "ancestry": [{"premise": p, "conclusion": c, "progressed": prog}
                                     for p, c, prog in e.ancestry],
                    }
                    for e in n.premises
                ],
            }
            for n in g.nodes
        ],
    }


def graph_json_text(g: ProofGraph) -> str:
    return json.dumps(graph_to_json(g), indent=2, ensure_ascii=False)
